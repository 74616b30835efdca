#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "vasg/data.hpp"
#include "vasg/hin.hpp"
#include "vasg/nn.hpp"
#include "vasg/rng.hpp"

namespace vasg {

struct TrainConfig {
    std::size_t dim = 100;
    std::size_t epochs = 5;
    std::size_t batch_size = 256;
    double lr = 1e-3;
    double dropout = 0.5;
    std::vector<std::size_t> decoder_hidden{256, 512, 1024, 2048};
    /// Negative samples per pair; 0 trains the plain sigmoid objective.
    std::size_t negatives = 0;
    /// Exponent applied to corpus counts for the negative distribution.
    double negative_power = 0.75;
    /// Optional L2 penalty on the embeddings touched by each pair.
    double l2 = 0.0;
    /// false trains plain Skip-Gram (no reconstruction task).
    bool use_decoder = true;
    /// Reuse the epoch-0 corpus instead of drawing fresh walks each epoch.
    bool reuse_corpus = false;
    CorpusConfig corpus;
    std::uint64_t seed = 0;
    /// Walk generation workers.
    unsigned threads = 1;
    /// > 1 enables asynchronous training; results are then nondeterministic.
    unsigned async_workers = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Log-variance parameters of the two task weights; w = exp(-s) keeps both
/// weights positive.
struct UncertaintyWeights {
    double s1 = 0.0;
    double s2 = 0.0;
    double w1() const { return std::exp(-s1); }
    double w2() const { return std::exp(-s2); }
};

/// Shared embedding table for users and warm products plus the decoder that
/// maps a product embedding back to its image features.
struct VasgModel {
    std::size_t dim = 0;
    std::size_t feature_dim = 0;
    /// One column per node: users first, then warm products.
    Eigen::MatrixXd embeddings;
    IdIndex users;
    IdIndex products;
    nn::Mlp decoder;
    UncertaintyWeights weights;
    TrainConfig config;

    /// Uniform(+-0.5/D) embeddings, Glorot decoder.
    static VasgModel init(const Hin& hin, std::size_t feature_dim, const TrainConfig& cfg);

    std::size_t num_nodes() const { return static_cast<std::size_t>(embeddings.cols()); }
    std::size_t column(Node v) const {
        return v.type == NodeType::User ? v.index : users.size() + v.index;
    }
    Eigen::Map<Eigen::VectorXd> vec(Node v) {
        return {embeddings.col(static_cast<Eigen::Index>(column(v))).data(), static_cast<Eigen::Index>(dim)};
    }
    Eigen::Map<const Eigen::VectorXd> vec(Node v) const {
        return {embeddings.col(static_cast<Eigen::Index>(column(v))).data(), static_cast<Eigen::Index>(dim)};
    }

    /// Throw QueryError naming the id when it has no embedding.
    Eigen::VectorXd user_vector(const std::string& id) const;
    Eigen::VectorXd product_vector(const std::string& id) const;

    /// Warm product embeddings as columns, in products order.
    Eigen::MatrixXd product_matrix() const;
};

struct PairLoss {
    double loss = 0.0;
    Eigen::VectorXd grad_center;
    Eigen::VectorXd grad_context;
};

/// -log(sigmoid(center . context)) and its gradients.
PairLoss skipgram_pair_loss(const Eigen::Ref<const Eigen::VectorXd>& center,
                            const Eigen::Ref<const Eigen::VectorXd>& context);

/// Loss of a user-centred pair: the plain Skip-Gram term.
PairLoss user_step_loss(const VasgModel& model, Node center, Node context);

struct ProductStepLoss {
    double total = 0.0;
    double skipgram = 0.0;
    double reconstruction = 0.0;
    Eigen::VectorXd grad_center;
    Eigen::VectorXd grad_context;
    std::vector<double> grad_decoder;
    double grad_s1 = 0.0;
    double grad_s2 = 0.0;
};

/// exp(-s1) * L_sg + exp(-s2) * L_mse + s1 + s2 for a product-centred pair,
/// with the decoder run in train mode (dropout drawn from rng).
ProductStepLoss product_step_loss(const VasgModel& model, Node center, Node context,
                                  std::span<const double> features, Rng& rng);

/// Manifest + f32le blobs. `extra` is merged into the manifest.
void save_model(const std::filesystem::path& manifest, const VasgModel& model,
                const nlohmann::json& extra = {});
VasgModel load_model(const std::filesystem::path& manifest);

/// FNV-1a of the decoder's f32le encoding.
std::string decoder_checksum(const nn::Mlp& decoder);

/// Saves any MLP in the same manifest + blob layout, tagged with `role`.
void save_mlp(const std::filesystem::path& manifest, const nn::Mlp& mlp, const std::string& role,
              const nlohmann::json& extra = {});
nn::Mlp load_mlp(const std::filesystem::path& manifest, const std::string& role,
                 nlohmann::json* manifest_out = nullptr);

}  // namespace vasg
