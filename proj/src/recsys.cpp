#include "vasg/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "vasg/error.hpp"

namespace vasg {

double cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

EmbeddingIndex::EmbeddingIndex(const Eigen::MatrixXd& vectors, std::vector<std::string> ids)
    : unit_(vectors), ids_(std::move(ids)) {
    if (static_cast<std::size_t>(vectors.cols()) != ids_.size())
        throw std::invalid_argument("embedding index: id count does not match vector count");
    norms_.resize(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!pos_.emplace(ids_[i], i).second) throw std::invalid_argument("embedding index: duplicate id " + ids_[i]);
        const double n = unit_.col(static_cast<Eigen::Index>(i)).norm();
        if (n == 0.0 || !std::isfinite(n))
            throw std::invalid_argument("embedding index: zero or non-finite vector for " + ids_[i]);
        norms_[i] = n;
        unit_.col(static_cast<Eigen::Index>(i)) /= n;
    }
}

EmbeddingIndex EmbeddingIndex::from_model(const VasgModel& model) {
    return EmbeddingIndex(model.product_matrix(), model.products.ids());
}

std::size_t EmbeddingIndex::position(const std::string& id) const {
    const auto it = pos_.find(id);
    if (it == pos_.end()) throw QueryError("product not in index: " + id);
    return it->second;
}

Eigen::VectorXd EmbeddingIndex::scores(const Eigen::Ref<const Eigen::VectorXd>& query) const {
    if (static_cast<std::size_t>(query.size()) != dim())
        throw std::invalid_argument("query length does not match index dimension");
    const double n = query.norm();
    if (n == 0.0) throw std::invalid_argument("cosine: zero vector");
    return ((unit_.transpose() * query) / n).cwiseMax(-1.0).cwiseMin(1.0);
}

std::vector<Ranked> rank_products(const Eigen::Ref<const Eigen::VectorXd>& query, const EmbeddingIndex& index,
                                  const std::unordered_set<std::string>& exclude, std::size_t k) {
    if (index.empty()) throw std::invalid_argument("rank_products: empty index");
    const Eigen::VectorXd s = index.scores(query);
    std::vector<std::size_t> order;
    order.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        if (!exclude.count(index.ids()[i])) order.push_back(i);
    const auto before = [&](std::size_t a, std::size_t b) {
        const double sa = s(static_cast<Eigen::Index>(a));
        const double sb = s(static_cast<Eigen::Index>(b));
        if (sa != sb) return sa > sb;
        return index.ids()[a] < index.ids()[b];
    };
    if (k == 0 || k >= order.size()) {
        std::sort(order.begin(), order.end(), before);
    } else {
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
        order.resize(k);
    }
    std::vector<Ranked> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back({index.ids()[i], s(static_cast<Eigen::Index>(i))});
    return out;
}

Eigen::VectorXd analogy_query(const VasgModel& model, const std::string& p1, const std::string& u1,
                              const std::string& u2) {
    const Eigen::VectorXd xp = model.product_vector(p1);
    if (u1 == u2) {
        model.user_vector(u1);
        return xp;
    }
    return xp - model.user_vector(u1) + model.user_vector(u2);
}

std::vector<Ranked> analogy_recommend(const VasgModel& model, const std::string& p1, const std::string& u1,
                                      const std::string& u2, const EmbeddingIndex& index, std::size_t k) {
    if (k == 0) throw std::invalid_argument("analogy_recommend: k must be at least 1");
    return rank_products(analogy_query(model, p1, u1, u2), index, {}, k);
}

double cold_score(const Eigen::Ref<const Eigen::VectorXd>& user_vec, std::span<const double> features,
                  const Encoder& encoder) {
    return cosine(user_vec, map_features(encoder, features));
}

void write_recommendations(std::ostream& out, const std::string& user_id, const std::vector<Ranked>& ranked) {
    out << "user_id,rank,product_id,score\n";
    char buf[32];
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%.6f", ranked[r].score);
        out << user_id << ',' << (r + 1) << ',' << ranked[r].product_id << ',' << buf << '\n';
    }
}

}  // namespace vasg
