#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace vasg {

struct Interaction {
    std::string user_id;
    std::string product_id;
    double rating = 0.0;
    std::optional<std::int64_t> timestamp;
};

/// Bijection between opaque string ids and dense indices [0, size).
class IdIndex {
public:
    /// Returns the existing index or appends a new one.
    std::size_t intern(const std::string& id);
    std::optional<std::size_t> find(const std::string& id) const;
    bool contains(const std::string& id) const { return map_.count(id) != 0; }
    const std::string& id(std::size_t index) const { return ids_[index]; }
    const std::vector<std::string>& ids() const { return ids_; }
    std::size_t size() const { return ids_.size(); }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> map_;
};

/// Deduplicated interactions with dense user and product indices, in
/// first-appearance order.
class InteractionSet {
public:
    InteractionSet() = default;

    /// Builds from raw rows. Duplicate (user, product) pairs keep the highest
    /// rating, then the latest timestamp; missing timestamps sort earliest.
    static InteractionSet from_rows(std::vector<Interaction> rows);

    const std::vector<Interaction>& interactions() const { return interactions_; }
    const IdIndex& users() const { return users_; }
    const IdIndex& products() const { return products_; }
    std::size_t size() const { return interactions_.size(); }
    bool empty() const { return interactions_.empty(); }

    std::size_t user_of(std::size_t i) const { return user_idx_[i]; }
    std::size_t product_of(std::size_t i) const { return product_idx_[i]; }

    /// Interaction positions grouped by user index.
    std::vector<std::vector<std::size_t>> by_user() const;

private:
    std::vector<Interaction> interactions_;
    std::vector<std::size_t> user_idx_;
    std::vector<std::size_t> product_idx_;
    IdIndex users_;
    IdIndex products_;
};

InteractionSet load_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, const InteractionSet& set);

/// Drops users with fewer than min_count interactions, then products left
/// without interactions. Single pass unless iterate is set, in which case it
/// repeats until nothing changes.
InteractionSet filter_min_history(const InteractionSet& s, std::size_t min_count,
                                  bool iterate = false);

struct UserProduct {
    std::string user_id;
    std::string product_id;
    friend bool operator==(const UserProduct&, const UserProduct&) = default;
};

struct SplitOptions {
    /// Target share of the test set whose product is unseen in training.
    double cold_fraction = 0.5;
    /// Users must keep at least this many train interactions after cold
    /// products are carved out.
    std::size_t min_train = 1;
};

struct Split {
    InteractionSet train;
    std::vector<UserProduct> test;
    /// Train interactions removed so their product becomes cold.
    std::vector<Interaction> dropped;
    std::vector<std::string> warm_products;  // sorted
    std::vector<std::string> cold_products;  // sorted
    std::vector<UserProduct> t_warm;
    std::vector<UserProduct> t_cold;

    /// Every product the user interacted with (train, test and dropped).
    std::unordered_map<std::string, std::unordered_set<std::string>> purchases() const;
    /// warm followed by cold.
    std::vector<std::string> catalog() const;
};

/// Holds out one random product per user, then turns a random subset of test
/// products cold by removing all of their train interactions until about
/// cold_fraction of the test pairs are cold.
Split leave_one_out_split(const InteractionSet& s, std::uint64_t seed,
                          const SplitOptions& options = {});

std::string split_to_json(const Split& split);
Split split_from_json(const std::string& text);

/// Per-product image features, stored as rows.
struct FeatureMatrix {
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    std::size_t dim = 0;
    Matrix rows;
    IdIndex ids;

    std::size_t size() const { return ids.size(); }
    bool contains(const std::string& id) const { return ids.contains(id); }
    Eigen::Map<const Eigen::VectorXd> row(std::size_t i) const {
        return {rows.row(i).data(), static_cast<Eigen::Index>(dim)};
    }
    /// Throws InputError when the id has no row.
    Eigen::Map<const Eigen::VectorXd> row(const std::string& id) const;

    /// Subset in the order of the given ids (all must exist).
    FeatureMatrix subset(std::span<const std::string> wanted) const;
};

/// Reads a JSON manifest plus its f32le blob. The blob path comes from the
/// manifest's optional "blob" key, else the manifest path with extension .bin.
/// Every id in required must have a row; extra rows are kept.
FeatureMatrix load_features(const std::filesystem::path& manifest,
                            std::span<const std::string> required = {});
void write_features(const std::filesystem::path& manifest, const FeatureMatrix& features);

}  // namespace vasg
