#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vasg/data.hpp"

namespace vasg {

struct SynthConfig {
    std::size_t n_users = 200;
    std::size_t n_products = 300;
    std::size_t n_clusters = 3;
    double in_cluster_prob = 0.9;
    std::size_t purchases = 20;
    std::size_t feature_dim = 64;
    double feature_noise_std = 0.05;
    /// Zipf exponent for the choice of product inside a cluster; 0 is uniform.
    double popularity_skew = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthData {
    InteractionSet interactions;
    FeatureMatrix features;
    std::vector<std::size_t> user_cluster;
    std::vector<std::size_t> product_cluster;
    std::size_t in_cluster_edges = 0;
};

/// Users and products go round-robin into clusters. Each user buys
/// `purchases` distinct products, each in-cluster with probability
/// in_cluster_prob and otherwise uniform over the other clusters. Features are
/// the cluster's unit one-hot block plus Gaussian noise.
SynthData generate_synth(const SynthConfig& cfg);

/// interactions.csv, features.json + features.bin, clusters.csv.
void write_synth(const std::filesystem::path& dir, const SynthData& data);

std::string synth_user_id(std::size_t u);
std::string synth_product_id(std::size_t p);

}  // namespace vasg
