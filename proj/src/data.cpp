#include "vasg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "vasg/error.hpp"
#include "vasg/rng.hpp"
#include "vasg/serialize.hpp"

namespace vasg {

using nlohmann::json;

std::size_t IdIndex::intern(const std::string& id) {
    auto [it, inserted] = map_.try_emplace(id, ids_.size());
    if (inserted) ids_.push_back(id);
    return it->second;
}

std::optional<std::size_t> IdIndex::find(const std::string& id) const {
    auto it = map_.find(id);
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

namespace {

bool replaces(const Interaction& incoming, const Interaction& kept) {
    if (incoming.rating != kept.rating) return incoming.rating > kept.rating;
    const auto lowest = std::numeric_limits<std::int64_t>::min();
    return incoming.timestamp.value_or(lowest) > kept.timestamp.value_or(lowest);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

InteractionSet InteractionSet::from_rows(std::vector<Interaction> rows) {
    InteractionSet set;
    std::unordered_map<std::string, std::size_t> seen;  // "user\x1fproduct" -> position
    for (auto& row : rows) {
        std::string key = row.user_id + '\x1f' + row.product_id;
        auto it = seen.find(key);
        if (it != seen.end()) {
            if (replaces(row, set.interactions_[it->second])) set.interactions_[it->second] = std::move(row);
            continue;
        }
        seen.emplace(std::move(key), set.interactions_.size());
        set.user_idx_.push_back(set.users_.intern(row.user_id));
        set.product_idx_.push_back(set.products_.intern(row.product_id));
        set.interactions_.push_back(std::move(row));
    }
    return set;
}

std::vector<std::vector<std::size_t>> InteractionSet::by_user() const {
    std::vector<std::vector<std::size_t>> groups(users_.size());
    for (std::size_t i = 0; i < interactions_.size(); ++i) groups[user_idx_[i]].push_back(i);
    return groups;
}

InteractionSet load_interactions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open interactions file " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::vector<Interaction> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("user_id,product_id,rating", 0) != 0)
                throw InputError(path.string() + ":" + std::to_string(line_no) +
                                 ": expected header user_id,product_id,rating,timestamp");
            continue;
        }
        const auto fields = split_fields(line);
        auto fail = [&](const std::string& what) {
            return InputError(path.string() + ":" + std::to_string(line_no) + ": " + what);
        };
        if (fields.size() < 3 || fields.size() > 4) throw fail("expected 3 or 4 fields");
        Interaction row;
        row.user_id = std::string(fields[0]);
        row.product_id = std::string(fields[1]);
        if (row.user_id.empty() || row.product_id.empty()) throw fail("empty id");

        const auto rating = fields[2];
        auto [ptr, ec] = std::from_chars(rating.data(), rating.data() + rating.size(), row.rating);
        if (ec != std::errc() || ptr != rating.data() + rating.size() || !std::isfinite(row.rating))
            throw fail("invalid rating '" + std::string(rating) + "'");
        if (row.rating < 1.0 || row.rating > 5.0) throw fail("rating outside [1, 5]");

        if (fields.size() == 4 && !fields[3].empty()) {
            std::int64_t ts = 0;
            const auto field = fields[3];
            auto [tptr, tec] = std::from_chars(field.data(), field.data() + field.size(), ts);
            if (tec != std::errc() || tptr != field.data() + field.size())
                throw fail("invalid timestamp '" + std::string(field) + "'");
            row.timestamp = ts;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError("no interactions in " + path.string());
    return InteractionSet::from_rows(std::move(rows));
}

void write_interactions(const std::filesystem::path& path, const InteractionSet& set) {
    std::ostringstream out;
    out << "user_id,product_id,rating,timestamp\n";
    for (const auto& row : set.interactions()) {
        out << row.user_id << ',' << row.product_id << ',' << row.rating << ',';
        if (row.timestamp) out << *row.timestamp;
        out << '\n';
    }
    write_text(path, out.str());
}

InteractionSet filter_min_history(const InteractionSet& s, std::size_t min_count, bool iterate) {
    if (min_count == 0) throw std::invalid_argument("min_count must be at least 1");
    InteractionSet current = s;
    while (true) {
        std::vector<std::size_t> counts(current.users().size(), 0);
        for (std::size_t i = 0; i < current.size(); ++i) ++counts[current.user_of(i)];
        std::vector<Interaction> kept;
        for (std::size_t i = 0; i < current.size(); ++i)
            if (counts[current.user_of(i)] >= min_count) kept.push_back(current.interactions()[i]);
        if (kept.empty()) throw InputError("no users survive filtering");
        const bool changed = kept.size() != current.size();
        current = InteractionSet::from_rows(std::move(kept));
        if (!iterate || !changed) break;
    }
    return current;
}

std::unordered_map<std::string, std::unordered_set<std::string>> Split::purchases() const {
    std::unordered_map<std::string, std::unordered_set<std::string>> out;
    for (const auto& row : train.interactions()) out[row.user_id].insert(row.product_id);
    for (const auto& row : dropped) out[row.user_id].insert(row.product_id);
    for (const auto& pair : test) out[pair.user_id].insert(pair.product_id);
    return out;
}

std::vector<std::string> Split::catalog() const {
    std::vector<std::string> out = warm_products;
    out.insert(out.end(), cold_products.begin(), cold_products.end());
    return out;
}

Split leave_one_out_split(const InteractionSet& s, std::uint64_t seed, const SplitOptions& options) {
    if (options.cold_fraction < 0.0 || options.cold_fraction > 1.0)
        throw std::invalid_argument("cold_fraction must lie in [0, 1]");
    Rng rng(seed);
    const auto groups = s.by_user();
    std::vector<char> is_test(s.size(), 0);
    std::vector<std::size_t> test_rows;
    for (std::size_t u = 0; u < groups.size(); ++u) {
        if (groups[u].size() < 2)
            throw InputError("user " + s.users().id(u) + " has fewer than 2 interactions");
        const std::size_t pick = groups[u][rng.index(groups[u].size())];
        is_test[pick] = 1;
        test_rows.push_back(pick);
    }

    const std::size_t n_products = s.products().size();
    std::vector<std::vector<std::size_t>> train_rows_of(n_products);
    std::vector<std::size_t> user_train(groups.size(), 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (is_test[i]) continue;
        train_rows_of[s.product_of(i)].push_back(i);
        ++user_train[s.user_of(i)];
    }
    std::vector<std::size_t> test_count(n_products, 0);
    std::vector<std::size_t> candidates;
    for (std::size_t row : test_rows) {
        const std::size_t p = s.product_of(row);
        if (test_count[p]++ == 0 && !train_rows_of[p].empty()) candidates.push_back(p);
    }

    std::size_t cold_pairs = 0;
    for (std::size_t row : test_rows)
        if (train_rows_of[s.product_of(row)].empty()) ++cold_pairs;
    const auto target = static_cast<std::size_t>(
        std::llround(options.cold_fraction * static_cast<double>(test_rows.size())));

    for (std::size_t i = candidates.size(); i > 1; --i)
        std::swap(candidates[i - 1], candidates[rng.index(i)]);

    std::vector<char> is_dropped(s.size(), 0);
    auto distance = [&](std::size_t n) { return n > target ? n - target : target - n; };
    for (std::size_t p : candidates) {
        if (cold_pairs >= target) break;
        if (distance(cold_pairs + test_count[p]) >= distance(cold_pairs)) continue;
        const bool keeps_history = std::all_of(
            train_rows_of[p].begin(), train_rows_of[p].end(),
            [&](std::size_t row) { return user_train[s.user_of(row)] > options.min_train; });
        if (!keeps_history) continue;
        for (std::size_t row : train_rows_of[p]) {
            is_dropped[row] = 1;
            --user_train[s.user_of(row)];
        }
        cold_pairs += test_count[p];
    }

    Split split;
    std::vector<Interaction> train_rows;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (is_test[i]) continue;
        if (is_dropped[i])
            split.dropped.push_back(s.interactions()[i]);
        else
            train_rows.push_back(s.interactions()[i]);
    }
    split.train = InteractionSet::from_rows(std::move(train_rows));
    split.warm_products = split.train.products().ids();
    std::sort(split.warm_products.begin(), split.warm_products.end());

    std::set<std::string> cold;
    for (std::size_t row : test_rows) {
        const auto& r = s.interactions()[row];
        UserProduct pair{r.user_id, r.product_id};
        split.test.push_back(pair);
        if (split.train.products().contains(r.product_id)) {
            split.t_warm.push_back(std::move(pair));
        } else {
            cold.insert(r.product_id);
            split.t_cold.push_back(std::move(pair));
        }
    }
    split.cold_products.assign(cold.begin(), cold.end());
    return split;
}

namespace {

json interaction_to_json(const Interaction& row) {
    return json::array({row.user_id, row.product_id, row.rating,
                        row.timestamp ? json(*row.timestamp) : json(nullptr)});
}

Interaction interaction_from_json(const json& j) {
    Interaction row;
    row.user_id = j.at(0).get<std::string>();
    row.product_id = j.at(1).get<std::string>();
    row.rating = j.at(2).get<double>();
    if (!j.at(3).is_null()) row.timestamp = j.at(3).get<std::int64_t>();
    return row;
}

json pairs_to_json(const std::vector<UserProduct>& pairs) {
    json out = json::array();
    for (const auto& p : pairs) out.push_back(json::array({p.user_id, p.product_id}));
    return out;
}

std::vector<UserProduct> pairs_from_json(const json& j) {
    std::vector<UserProduct> out;
    for (const auto& p : j) out.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
    return out;
}

}  // namespace

std::string split_to_json(const Split& split) {
    json j;
    json train = json::array();
    for (const auto& row : split.train.interactions()) train.push_back(interaction_to_json(row));
    json dropped = json::array();
    for (const auto& row : split.dropped) dropped.push_back(interaction_to_json(row));
    j["train"] = std::move(train);
    j["dropped"] = std::move(dropped);
    j["test"] = pairs_to_json(split.test);
    j["t_warm"] = pairs_to_json(split.t_warm);
    j["t_cold"] = pairs_to_json(split.t_cold);
    j["warm_products"] = split.warm_products;
    j["cold_products"] = split.cold_products;
    return j.dump() + "\n";
}

Split split_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed split JSON: ") + e.what());
    }
    Split split;
    try {
        std::vector<Interaction> rows;
        for (const auto& r : j.at("train")) rows.push_back(interaction_from_json(r));
        split.train = InteractionSet::from_rows(std::move(rows));
        for (const auto& r : j.at("dropped")) split.dropped.push_back(interaction_from_json(r));
        split.test = pairs_from_json(j.at("test"));
        split.t_warm = pairs_from_json(j.at("t_warm"));
        split.t_cold = pairs_from_json(j.at("t_cold"));
        split.warm_products = j.at("warm_products").get<std::vector<std::string>>();
        split.cold_products = j.at("cold_products").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed split JSON: ") + e.what());
    }
    return split;
}

Eigen::Map<const Eigen::VectorXd> FeatureMatrix::row(const std::string& id) const {
    auto i = ids.find(id);
    if (!i) throw InputError("no feature row for product " + id);
    return row(*i);
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::string> wanted) const {
    FeatureMatrix out;
    out.dim = dim;
    out.rows.resize(static_cast<Eigen::Index>(wanted.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < wanted.size(); ++i) {
        out.rows.row(static_cast<Eigen::Index>(i)) = row(wanted[i]).transpose();
        out.ids.intern(wanted[i]);
    }
    return out;
}

FeatureMatrix load_features(const std::filesystem::path& manifest, std::span<const std::string> required) {
    if (!std::filesystem::exists(manifest)) throw InputError("feature manifest not found: " + manifest.string());
    json j;
    try {
        j = json::parse(read_text(manifest));
    } catch (const json::exception& e) {
        throw InputError("malformed feature manifest " + manifest.string() + ": " + e.what());
    }
    FeatureMatrix features;
    std::vector<std::string> ids;
    std::size_t count = 0;
    std::filesystem::path blob = manifest;
    blob.replace_extension(".bin");
    try {
        features.dim = j.at("dim").get<std::size_t>();
        count = j.at("count").get<std::size_t>();
        ids = j.at("ids").get<std::vector<std::string>>();
        if (j.value("dtype", std::string("f32le")) != "f32le")
            throw InputError("unsupported feature dtype in " + manifest.string());
        if (j.contains("blob")) blob = manifest.parent_path() / j.at("blob").get<std::string>();
    } catch (const json::exception& e) {
        throw InputError("malformed feature manifest " + manifest.string() + ": " + e.what());
    }
    if (features.dim == 0) throw InputError("feature dim must be positive");
    if (ids.size() != count) throw InputError("feature manifest count does not match ids length");

    const auto bytes = read_bytes(blob);
    if (bytes.size() != count * features.dim * 4)
        throw InputError("dimension mismatch: manifest declares " + std::to_string(count) + "x" +
                         std::to_string(features.dim) + " f32 values (" +
                         std::to_string(count * features.dim * 4) + " bytes) but " + blob.string() +
                         " holds " + std::to_string(bytes.size()) + " bytes");
    const auto values = decode_f32le(bytes);
    features.rows.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(features.dim));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw InputError("non-finite feature value for product " + ids[i / features.dim]);
        features.rows.data()[i] = values[i];
    }
    for (const auto& id : ids) {
        const auto before = features.ids.size();
        features.ids.intern(id);
        if (features.ids.size() == before) throw InputError("duplicate feature id " + id);
    }

    std::vector<std::string> missing;
    for (const auto& id : required)
        if (!features.contains(id)) missing.push_back(id);
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
        if (missing.size() > 20) list += ", ...";
        throw InputError(std::to_string(missing.size()) + " products lack feature rows: " + list);
    }
    return features;
}

void write_features(const std::filesystem::path& manifest, const FeatureMatrix& features) {
    std::filesystem::path blob = manifest;
    blob.replace_extension(".bin");
    json j;
    j["dim"] = features.dim;
    j["count"] = features.size();
    j["ids"] = features.ids.ids();
    j["dtype"] = "f32le";
    j["blob"] = blob.filename().string();
    write_text(manifest, j.dump() + "\n");
    write_bytes(blob, encode_f32le({features.rows.data(), static_cast<std::size_t>(features.rows.size())}));
}

}  // namespace vasg
