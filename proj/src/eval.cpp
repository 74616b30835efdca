#include "vasg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vasg/error.hpp"
#include "vasg/rng.hpp"
#include "vasg/serialize.hpp"

namespace vasg {

namespace {

std::uint64_t string_key(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
    threads = std::max(1u, threads);
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

double auc(const Scorer& scorer, const Split& split, Subset subset, const AucOptions& options) {
    const auto& tests = subset == Subset::Warm ? split.t_warm : split.t_cold;
    if (tests.empty()) throw std::invalid_argument(subset == Subset::Warm ? "no warm test pairs" : "no cold test pairs");
    std::vector<std::string> pool;
    if (options.pool == CandidatePool::All)
        pool = split.catalog();
    else
        pool = subset == Subset::Warm ? split.warm_products : split.cold_products;
    const auto purchases = split.purchases();

    std::vector<double> per_test(tests.size(), -1.0);
    parallel_for(tests.size(), options.threads, [&](std::size_t i) {
        const auto& t = tests[i];
        const auto it = purchases.find(t.user_id);
        std::vector<const std::string*> candidates;
        candidates.reserve(pool.size());
        for (const auto& p : pool)
            if (p != t.product_id && (it == purchases.end() || !it->second.count(p))) candidates.push_back(&p);
        if (candidates.empty()) return;
        std::size_t n = candidates.size();
        if (options.negatives > 0 && n > options.negatives) {
            Rng rng(derive_seed(options.seed, i));
            for (std::size_t j = 0; j < options.negatives; ++j)
                std::swap(candidates[j], candidates[j + rng.index(n - j)]);
            n = options.negatives;
        }
        const double positive = scorer(t.user_id, t.product_id);
        std::size_t wins = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (positive > scorer(t.user_id, *candidates[j])) ++wins;
        per_test[i] = static_cast<double>(wins) / static_cast<double>(n);
    });

    double sum = 0.0;
    std::size_t counted = 0;
    for (double v : per_test)
        if (v >= 0.0) {
            sum += v;
            ++counted;
        }
    if (counted == 0) throw std::invalid_argument("no test pair has negative candidates");
    return sum / static_cast<double>(counted);
}

Scorer rand_scorer(std::uint64_t seed) {
    return [seed](const std::string& user, const std::string& product) {
        const std::uint64_t h = splitmix64(derive_seed(seed, string_key(user), string_key(product)));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
}

Eigen::VectorXd wboi_user_embedding(const std::string& user, const InteractionSet& train,
                                    const FeatureMatrix& features) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features.dim));
    double total = 0.0;
    for (const auto& x : train.interactions()) {
        if (x.user_id != user) continue;
        acc += x.rating * features.row(x.product_id);
        total += x.rating;
    }
    if (total == 0.0) throw QueryError("user has no training interactions: " + user);
    return acc / total;
}

Scorer wboi_scorer(const InteractionSet& train, const FeatureMatrix& features) {
    auto users = std::make_shared<std::unordered_map<std::string, Eigen::VectorXd>>();
    std::unordered_map<std::string, double> totals;
    for (const auto& x : train.interactions()) {
        auto [it, fresh] = users->try_emplace(x.user_id, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features.dim)));
        it->second += x.rating * features.row(x.product_id);
        totals[x.user_id] += x.rating;
    }
    for (auto& [u, v] : *users) v /= totals[u];
    return [users, &features](const std::string& user, const std::string& product) {
        const auto it = users->find(user);
        if (it == users->end()) throw QueryError("unknown user: " + user);
        return cosine(it->second, features.row(product));
    };
}

Eigen::MatrixXd mapped_embeddings(const Encoder& encoder, const FeatureMatrix& features,
                                  const std::vector<std::string>& ids) {
    Eigen::MatrixXd in(static_cast<Eigen::Index>(features.dim), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) in.col(static_cast<Eigen::Index>(i)) = features.row(ids[i]);
    return map_features(encoder, in);
}

Scorer embedding_scorer(const VasgModel& model, const FeatureMatrix* features, const Encoder* encoder) {
    auto users = std::make_shared<std::unordered_map<std::string, Eigen::VectorXd>>();
    auto products = std::make_shared<std::unordered_map<std::string, Eigen::VectorXd>>();
    for (std::size_t u = 0; u < model.users.size(); ++u)
        users->emplace(model.users.id(u), model.vec({NodeType::User, static_cast<std::uint32_t>(u)}));
    for (std::size_t p = 0; p < model.products.size(); ++p)
        products->emplace(model.products.id(p), model.vec({NodeType::Product, static_cast<std::uint32_t>(p)}));
    if (features && encoder) {
        std::vector<std::string> cold;
        for (const auto& id : features->ids.ids())
            if (!products->count(id)) cold.push_back(id);
        const Eigen::MatrixXd mapped = mapped_embeddings(*encoder, *features, cold);
        for (std::size_t i = 0; i < cold.size(); ++i) products->emplace(cold[i], mapped.col(static_cast<Eigen::Index>(i)));
    }
    return [users, products](const std::string& user, const std::string& product) {
        const auto u = users->find(user);
        if (u == users->end()) throw QueryError("unknown user: " + user);
        const auto p = products->find(product);
        if (p == products->end()) throw QueryError("no embedding for product: " + product);
        return cosine(u->second, p->second);
    };
}

RelationSets build_relation_sets(const InteractionSet& train, std::uint64_t seed, std::size_t cap) {
    if (train.empty()) throw InputError("cannot build relation sets from an empty training set");
    const std::size_t P = train.products().size();
    std::vector<std::vector<std::uint32_t>> per_user(train.users().size());
    for (std::size_t i = 0; i < train.size(); ++i)
        per_user[train.user_of(i)].push_back(static_cast<std::uint32_t>(train.product_of(i)));
    std::set<std::pair<std::uint32_t, std::uint32_t>> co;
    for (auto& items : per_user) {
        std::sort(items.begin(), items.end());
        for (std::size_t a = 0; a < items.size(); ++a)
            for (std::size_t b = a + 1; b < items.size(); ++b) co.emplace(items[a], items[b]);
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> positives(co.begin(), co.end());
    const std::size_t want = std::min(cap, positives.size());
    const std::size_t total_pairs = P * (P - 1) / 2;
    const std::size_t available_neg = total_pairs - positives.size();
    if (want == 0) throw InputError("no co-purchased product pairs");
    if (available_neg < want) throw InputError("not enough non-co-purchased pairs for the negative set");

    Rng rng(seed);
    for (std::size_t i = 0; i < want; ++i) std::swap(positives[i], positives[i + rng.index(positives.size() - i)]);
    positives.resize(want);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> negatives;
    if (available_neg <= 4 * want) {
        for (std::uint32_t a = 0; a < P; ++a)
            for (std::uint32_t b = a + 1; b < P; ++b)
                if (!co.count({a, b})) negatives.emplace_back(a, b);
        for (std::size_t i = 0; i < want; ++i) std::swap(negatives[i], negatives[i + rng.index(negatives.size() - i)]);
        negatives.resize(want);
    } else {
        std::set<std::pair<std::uint32_t, std::uint32_t>> chosen;
        while (negatives.size() < want) {
            auto a = static_cast<std::uint32_t>(rng.index(P));
            auto b = static_cast<std::uint32_t>(rng.index(P));
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            if (co.count({a, b}) || !chosen.emplace(a, b).second) continue;
            negatives.emplace_back(a, b);
        }
    }

    RelationSets sets;
    const auto& ids = train.products();
    for (auto [a, b] : positives) sets.positive.emplace_back(ids.id(a), ids.id(b));
    for (auto [a, b] : negatives) sets.negative.emplace_back(ids.id(a), ids.id(b));
    return sets;
}

double threshold_accuracy(const std::vector<double>& positive, const std::vector<double>& negative, double t) {
    std::size_t correct = 0;
    for (double s : positive) correct += s > t;
    for (double s : negative) correct += !(s > t);
    const std::size_t n = positive.size() + negative.size();
    return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

RelationResult relation_accuracy(const EmbeddingIndex& vectors, const RelationSets& sets,
                                 std::optional<double> threshold, std::uint64_t seed) {
    const auto sims = [&](const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::vector<double> out;
        out.reserve(pairs.size());
        for (const auto& [a, b] : pairs) {
            const auto ia = static_cast<Eigen::Index>(vectors.position(a));
            const auto ib = static_cast<Eigen::Index>(vectors.position(b));
            out.push_back(std::clamp(vectors.unit().col(ia).dot(vectors.unit().col(ib)), -1.0, 1.0));
        }
        return out;
    };
    std::vector<double> pos = sims(sets.positive);
    std::vector<double> neg = sims(sets.negative);
    if (threshold) return {threshold_accuracy(pos, neg, *threshold), *threshold};

    Rng rng(seed);
    const auto shuffle = [&](std::vector<double>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
    };
    shuffle(pos);
    shuffle(neg);
    const std::vector<double> tune_pos(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2));
    const std::vector<double> tune_neg(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(neg.size() / 2));
    const std::vector<double> test_pos(pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2), pos.end());
    const std::vector<double> test_neg(neg.begin() + static_cast<std::ptrdiff_t>(neg.size() / 2), neg.end());

    std::vector<double> all(tune_pos);
    all.insert(all.end(), tune_neg.begin(), tune_neg.end());
    if (all.empty()) throw std::invalid_argument("relation sets too small to tune a threshold");
    std::sort(all.begin(), all.end());
    double best_t = 0.0;
    double best_acc = -1.0;
    for (int q = 1; q <= 99; ++q) {
        const double pos_f = q / 100.0 * static_cast<double>(all.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos_f));
        const std::size_t hi = std::min(all.size() - 1, lo + 1);
        const double t = all[lo] + (pos_f - static_cast<double>(lo)) * (all[hi] - all[lo]);
        const double acc = threshold_accuracy(tune_pos, tune_neg, t);
        if (acc > best_acc) {
            best_acc = acc;
            best_t = t;
        }
    }
    return {threshold_accuracy(test_pos, test_neg, best_t), best_t};
}

SimilarityStats similarity_stats(const std::vector<double>& values) {
    SimilarityStats s;
    s.pairs = values.size();
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double m2 = 0.0;
    double m4 = 0.0;
    for (double v : values) {
        const double d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
        const auto bin = static_cast<std::size_t>(std::clamp((v + 1.0) * 50.0, 0.0, 99.0));
        ++s.histogram[bin];
    }
    m2 /= n;
    m4 /= n;
    s.mean = mean;
    s.std = std::sqrt(m2);
    if (m2 > 1e-24) {
        s.kurtosis_pearson = m4 / (m2 * m2);
        s.kurtosis_excess = *s.kurtosis_pearson - 3.0;
    }
    return s;
}

SimilarityStats similarity_distribution(const EmbeddingIndex& vectors, std::size_t n_pairs, std::uint64_t seed) {
    if (vectors.size() < 2) throw std::invalid_argument("similarity distribution needs at least two vectors");
    Rng rng(seed);
    std::vector<double> values;
    values.reserve(n_pairs);
    const auto& u = vectors.unit();
    while (values.size() < n_pairs) {
        const auto a = static_cast<Eigen::Index>(rng.index(vectors.size()));
        const auto b = static_cast<Eigen::Index>(rng.index(vectors.size()));
        if (a == b) continue;
        values.push_back(std::clamp(u.col(a).dot(u.col(b)), -1.0, 1.0));
    }
    return similarity_stats(values);
}

Pca pca(const Eigen::MatrixXd& vectors, std::size_t k, std::uint64_t seed) {
    const auto D = static_cast<std::size_t>(vectors.rows());
    const auto N = static_cast<std::size_t>(vectors.cols());
    if (k == 0) throw std::invalid_argument("pca needs at least one component");
    if (k > D) throw std::invalid_argument("pca: " + std::to_string(k) + " components exceed dimension " + std::to_string(D));
    if (k > N) throw std::invalid_argument("pca: fewer vectors than components");

    const Eigen::MatrixXd centred = vectors.colwise() - vectors.rowwise().mean();
    Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(N);
    Pca out;
    out.components.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(k));
    out.variances.resize(static_cast<Eigen::Index>(k));
    Rng rng(seed);
    for (std::size_t c = 0; c < k; ++c) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(D));
        for (auto& x : v) x = rng.normal();
        v.normalize();
        double lambda = 0.0;
        for (int iter = 0; iter < 100000; ++iter) {
            Eigen::VectorXd w = cov * v;
            const double n = w.norm();
            if (n < 1e-300) {
                lambda = 0.0;
                break;
            }
            w /= n;
            const double change = std::min((w - v).norm(), (w + v).norm());
            v = w;
            lambda = n;
            if (change < 1e-13) break;
        }
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        lambda = v.dot(cov * v);
        out.components.col(static_cast<Eigen::Index>(c)) = v;
        out.variances(static_cast<Eigen::Index>(c)) = lambda;
        cov -= lambda * v * v.transpose();
    }
    out.projection = centred.transpose() * out.components;
    return out;
}

void write_pca_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, const Pca& p) {
    std::ostringstream out;
    out << "id";
    for (Eigen::Index c = 0; c < p.projection.cols(); ++c) out << ",c" << (c + 1);
    out << '\n';
    out.precision(9);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i];
        for (Eigen::Index c = 0; c < p.projection.cols(); ++c) out << ',' << p.projection(static_cast<Eigen::Index>(i), c);
        out << '\n';
    }
    write_text(path, out.str());
}

void write_histogram_csv(const std::filesystem::path& path, const SimilarityStats& stats) {
    std::ostringstream out;
    out << "bin_lo,bin_hi,count\n";
    out.precision(6);
    for (std::size_t b = 0; b < stats.histogram.size(); ++b)
        out << (-1.0 + 0.02 * static_cast<double>(b)) << ',' << (-1.0 + 0.02 * static_cast<double>(b + 1)) << ','
            << stats.histogram[b] << '\n';
    write_text(path, out.str());
}

AnalogyResult analogy_precision(const VasgModel& model, const Split& split, const EmbeddingIndex& index,
                                std::size_t queries, std::size_t k, std::uint64_t seed) {
    AnalogyResult r;
    const auto purchases = split.purchases();
    std::unordered_map<std::string, std::string> heldout;
    for (const auto& t : split.test) heldout[t.user_id] = t.product_id;
    const auto by_user = split.train.by_user();
    const std::size_t U = split.train.users().size();
    if (U < 2 || queries == 0) return r;
    Rng rng(seed);
    std::size_t hits = 0;
    std::size_t heldout_hits = 0;
    for (std::size_t q = 0; q < queries; ++q) {
        const std::size_t a = rng.index(U);
        std::size_t b = rng.index(U - 1);
        if (b >= a) ++b;
        const auto& rows = by_user[a];
        const auto& p1 = split.train.interactions()[rows[rng.index(rows.size())]].product_id;
        const std::string& u1 = split.train.users().id(a);
        const std::string& u2 = split.train.users().id(b);
        const auto top = analogy_recommend(model, p1, u1, u2, index, k);
        const auto& bought = purchases.at(u2);
        bool held = false;
        for (const auto& x : top) {
            hits += bought.count(x.product_id);
            const auto h = heldout.find(u2);
            held = held || (h != heldout.end() && h->second == x.product_id);
        }
        heldout_hits += held;
    }
    r.queries = queries;
    r.precision = static_cast<double>(hits) / static_cast<double>(queries * k);
    r.heldout_hit_rate = static_cast<double>(heldout_hits) / static_cast<double>(queries);
    return r;
}

}  // namespace vasg
