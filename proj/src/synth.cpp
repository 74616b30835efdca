#include "vasg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "vasg/rng.hpp"
#include "vasg/serialize.hpp"

namespace vasg {

void SynthConfig::validate() const {
    if (n_clusters == 0 || n_clusters > std::min(n_users, n_products))
        throw std::invalid_argument("cluster count must be in [1, min(users, products)]");
    if (!(in_cluster_prob > 0.5 && in_cluster_prob <= 1.0))
        throw std::invalid_argument("in-cluster probability must be in (0.5, 1]");
    if (purchases == 0) throw std::invalid_argument("purchases per user must be positive");
    if (feature_dim < n_clusters) throw std::invalid_argument("feature dimension must be at least the cluster count");
    if (feature_noise_std < 0.0 || popularity_skew < 0.0)
        throw std::invalid_argument("noise and skew must be non-negative");
    const std::size_t smallest = n_products / n_clusters;
    if (purchases > smallest) throw std::invalid_argument("purchases per user exceed the smallest cluster size");
    if (n_clusters > 1 && purchases > n_products - (n_products + n_clusters - 1) / n_clusters)
        throw std::invalid_argument("purchases per user exceed the out-of-cluster catalog");
}

std::string synth_user_id(std::size_t u) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "u%05zu", u);
    return buf;
}

std::string synth_product_id(std::size_t p) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "p%05zu", p);
    return buf;
}

namespace {

/// Draws from members with weights 1 / (rank + 1)^skew.
class ClusterSampler {
public:
    ClusterSampler(std::vector<std::size_t> members, double skew) : members_(std::move(members)) {
        double acc = 0.0;
        for (std::size_t r = 0; r < members_.size(); ++r) {
            acc += std::pow(static_cast<double>(r + 1), -skew);
            cumulative_.push_back(acc);
        }
    }
    std::size_t draw(Rng& rng) const {
        const double x = rng.uniform() * cumulative_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
        return members_[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), members_.size() - 1)];
    }

private:
    std::vector<std::size_t> members_;
    std::vector<double> cumulative_;
};

}  // namespace

SynthData generate_synth(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthData out;
    const std::size_t K = cfg.n_clusters;
    out.user_cluster.resize(cfg.n_users);
    out.product_cluster.resize(cfg.n_products);
    std::vector<std::vector<std::size_t>> members(K);
    for (std::size_t u = 0; u < cfg.n_users; ++u) out.user_cluster[u] = u % K;
    for (std::size_t p = 0; p < cfg.n_products; ++p) {
        out.product_cluster[p] = p % K;
        members[p % K].push_back(p);
    }
    std::vector<ClusterSampler> samplers;
    for (auto& m : members) samplers.emplace_back(m, cfg.popularity_skew);

    std::vector<Interaction> rows;
    rows.reserve(cfg.n_users * cfg.purchases);
    std::int64_t clock = 0;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        const std::size_t home = out.user_cluster[u];
        std::unordered_set<std::size_t> bought;
        std::vector<std::size_t> taken(K, 0);
        while (bought.size() < cfg.purchases) {
            const bool in = K == 1 || rng.bernoulli(cfg.in_cluster_prob);
            std::size_t cluster = home;
            if (!in) {
                cluster = rng.index(K - 1);
                if (cluster >= home) ++cluster;
            }
            if (taken[cluster] == members[cluster].size()) continue;
            // redraw inside the chosen cluster so duplicates do not shift the in-cluster share
            std::size_t p = 0;
            do {
                p = in ? samplers[cluster].draw(rng) : members[cluster][rng.index(members[cluster].size())];
            } while (bought.count(p));
            bought.insert(p);
            ++taken[cluster];
            if (in) ++out.in_cluster_edges;
            const double rating = static_cast<double>(1 + rng.index(5));
            rows.push_back({synth_user_id(u), synth_product_id(p), rating, clock++});
        }
    }
    out.interactions = InteractionSet::from_rows(std::move(rows));

    const std::size_t I = cfg.feature_dim;
    auto& f = out.features;
    f.dim = I;
    f.rows.setZero(static_cast<Eigen::Index>(cfg.n_products), static_cast<Eigen::Index>(I));
    for (std::size_t p = 0; p < cfg.n_products; ++p) {
        f.ids.intern(synth_product_id(p));
        const std::size_t k = out.product_cluster[p];
        const std::size_t lo = k * I / K;
        const std::size_t hi = (k + 1) * I / K;
        const double v = 1.0 / std::sqrt(static_cast<double>(hi - lo));
        for (std::size_t d = 0; d < I; ++d) {
            const double centre = (d >= lo && d < hi) ? v : 0.0;
            const double noise = cfg.feature_noise_std > 0.0 ? cfg.feature_noise_std * rng.normal() : 0.0;
            f.rows(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d)) = centre + noise;
        }
    }
    return out;
}

void write_synth(const std::filesystem::path& dir, const SynthData& data) {
    std::filesystem::create_directories(dir);
    write_interactions(dir / "interactions.csv", data.interactions);
    write_features(dir / "features.json", data.features);
    std::ostringstream clusters;
    clusters << "id,cluster\n";
    for (std::size_t u = 0; u < data.user_cluster.size(); ++u)
        clusters << synth_user_id(u) << ',' << data.user_cluster[u] << '\n';
    for (std::size_t p = 0; p < data.product_cluster.size(); ++p)
        clusters << synth_product_id(p) << ',' << data.product_cluster[p] << '\n';
    write_text(dir / "clusters.csv", clusters.str());
}

}  // namespace vasg
