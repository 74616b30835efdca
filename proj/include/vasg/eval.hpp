#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vasg/data.hpp"
#include "vasg/mapper.hpp"
#include "vasg/model.hpp"
#include "vasg/recsys.hpp"

namespace vasg {

/// score(user_id, product_id); higher means more likely to be bought.
using Scorer = std::function<double(const std::string& user, const std::string& product)>;

enum class Subset { Warm, Cold };

enum class CandidatePool {
    /// Warm test items compete with warm products, cold with cold.
    SameSubset,
    /// Every product in the catalog.
    All,
};

struct AucOptions {
    /// Negatives drawn per test user; 0 uses the whole pool.
    std::size_t negatives = 500;
    CandidatePool pool = CandidatePool::SameSubset;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Per test pair, the fraction of non-purchased candidates scored strictly
/// below the held-out product, averaged over test users. Throws
/// std::invalid_argument when the subset has no test pairs with candidates.
double auc(const Scorer& scorer, const Split& split, Subset subset, const AucOptions& options = {});

/// Deterministic uniform [0, 1) score per (seed, user, product).
Scorer rand_scorer(std::uint64_t seed);

/// Rating-weighted mean of the features of the user's training products.
Eigen::VectorXd wboi_user_embedding(const std::string& user, const InteractionSet& train,
                                    const FeatureMatrix& features);

/// Cosine between the WBOI user vector and the product's features.
Scorer wboi_scorer(const InteractionSet& train, const FeatureMatrix& features);

/// Cosine between user and product embeddings. Products without a trained
/// embedding are mapped from their features when an encoder is given.
Scorer embedding_scorer(const VasgModel& model, const FeatureMatrix* features = nullptr,
                        const Encoder* encoder = nullptr);

/// Mapped embeddings of the given products, one column each.
Eigen::MatrixXd mapped_embeddings(const Encoder& encoder, const FeatureMatrix& features,
                                  const std::vector<std::string>& ids);

struct RelationSets {
    std::vector<std::pair<std::string, std::string>> positive;  // co-purchased
    std::vector<std::pair<std::string, std::string>> negative;
};

/// Unordered product pairs: positives sampled from pairs bought by a common
/// training user, negatives from the remaining pairs, |R| = |Q| = min(cap,
/// available positives).
RelationSets build_relation_sets(const InteractionSet& train, std::uint64_t seed, std::size_t cap = 10000);

struct RelationResult {
    double accuracy = 0.0;
    double threshold = 0.0;
};

/// Predicts a relation iff cosine > t. Without a threshold, t is tuned over the
/// 1st..99th percentiles of one stratified half of the pairs and the accuracy
/// is measured on the other half.
RelationResult relation_accuracy(const EmbeddingIndex& vectors, const RelationSets& sets,
                                 std::optional<double> threshold, std::uint64_t seed);

/// Accuracy of a fixed threshold on labelled similarities.
double threshold_accuracy(const std::vector<double>& positive, const std::vector<double>& negative, double t);

struct SimilarityStats {
    std::size_t pairs = 0;
    double mean = 0.0;
    double std = 0.0;
    std::optional<double> kurtosis_pearson;  // m4 / m2^2
    std::optional<double> kurtosis_excess;   // pearson - 3
    std::array<std::size_t, 100> histogram{};  // 100 bins over [-1, 1]
};

/// Cosine similarities of n_pairs uniformly drawn pairs of distinct columns.
SimilarityStats similarity_distribution(const EmbeddingIndex& vectors, std::size_t n_pairs, std::uint64_t seed);

/// Moments of given similarity values, same conventions as above.
SimilarityStats similarity_stats(const std::vector<double>& values);

struct Pca {
    Eigen::MatrixXd components;  // D x k, unit columns
    Eigen::VectorXd variances;   // eigenvalues of the covariance
    Eigen::MatrixXd projection;  // N x k
};

/// Top-k principal directions of the columns of `vectors` by power iteration
/// with deflation. Each component's largest-magnitude entry is positive.
Pca pca(const Eigen::MatrixXd& vectors, std::size_t k, std::uint64_t seed);

/// `id,c1..ck`.
void write_pca_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, const Pca& p);
void write_histogram_csv(const std::filesystem::path& path, const SimilarityStats& stats);

struct AnalogyResult {
    std::size_t queries = 0;
    /// Share of the top-k that u2 purchased at any point.
    double precision = 0.0;
    /// Share of queries whose top-k contains u2's held-out test product.
    double heldout_hit_rate = 0.0;
};

/// Samples (u1, p1 from u1's training products, u2 != u1) and scores the
/// analogy top-k against u2's purchases.
AnalogyResult analogy_precision(const VasgModel& model, const Split& split, const EmbeddingIndex& index,
                                std::size_t queries, std::size_t k, std::uint64_t seed);

}  // namespace vasg
