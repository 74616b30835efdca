#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "vasg/mapper.hpp"
#include "vasg/model.hpp"

namespace vasg {

/// Cosine similarity clamped to [-1, 1]. Throws std::invalid_argument on a
/// zero vector or a length mismatch.
double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

/// Unit-normalized product vectors for exhaustive cosine search.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    /// One column per id. Throws on duplicate ids or zero columns.
    EmbeddingIndex(const Eigen::MatrixXd& vectors, std::vector<std::string> ids);

    /// Warm products of a model.
    static EmbeddingIndex from_model(const VasgModel& model);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(unit_.rows()); }
    bool empty() const { return ids_.empty(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const Eigen::MatrixXd& unit() const { return unit_; }
    double norm(std::size_t i) const { return norms_[i]; }
    Eigen::VectorXd vector(std::size_t i) const { return unit_.col(static_cast<Eigen::Index>(i)) * norms_[i]; }
    std::size_t position(const std::string& id) const;  // throws QueryError
    bool contains(const std::string& id) const { return pos_.count(id) != 0; }

    /// Cosine of the query against every stored vector.
    Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& query) const;

private:
    Eigen::MatrixXd unit_;
    std::vector<double> norms_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> pos_;
};

struct Ranked {
    std::string product_id;
    double score = 0.0;
    friend bool operator==(const Ranked&, const Ranked&) = default;
};

/// Products by descending cosine to the query, ties by ascending id, without
/// excluded ids. k = 0 returns the full ranking.
std::vector<Ranked> rank_products(const Eigen::Ref<const Eigen::VectorXd>& query, const EmbeddingIndex& index,
                                  const std::unordered_set<std::string>& exclude = {}, std::size_t k = 0);

/// Top-k products for q = X_p1 - X_u1 + X_u2; p1 is not excluded.
std::vector<Ranked> analogy_recommend(const VasgModel& model, const std::string& p1, const std::string& u1,
                                      const std::string& u2, const EmbeddingIndex& index, std::size_t k);

/// The analogy query as a vector.
Eigen::VectorXd analogy_query(const VasgModel& model, const std::string& p1, const std::string& u1,
                              const std::string& u2);

/// cosine(user_vec, map_features(encoder, features)).
double cold_score(const Eigen::Ref<const Eigen::VectorXd>& user_vec, std::span<const double> features,
                  const Encoder& encoder);

/// `user_id,rank,product_id,score`, ranks from 1.
void write_recommendations(std::ostream& out, const std::string& user_id, const std::vector<Ranked>& ranked);

}  // namespace vasg
