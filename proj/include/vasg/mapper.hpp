#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "vasg/data.hpp"
#include "vasg/nn.hpp"

namespace vasg {

struct MapperConfig {
    /// Gaussian input noise, as a fraction of each feature dimension's std.
    double noise_std_scale = 0.05;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double dropout = 0.5;
    /// Empty mirrors the decoder's hidden widths in reverse.
    std::vector<std::size_t> hidden;
    /// Ablation: regress the trained embeddings directly instead of
    /// reconstructing features through the frozen decoder.
    bool regress_embeddings = false;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const MapperConfig& cfg);

/// Feature-to-embedding map.
struct Encoder {
    nn::Mlp mlp;

    std::size_t input_dim() const { return mlp.input_dim(); }
    std::size_t output_dim() const { return mlp.output_dim(); }
};

struct MapperResult {
    Encoder encoder;
    std::vector<double> loss_history;  // mean training loss per epoch
};

/// Trains the encoder of an autoencoder whose decoder is `decoder`, which is
/// only read. Loss per product is mse(f, decoder(encoder(f + noise))) with the
/// decoder in eval mode and the encoder in train mode. For the regression
/// ablation, `targets` holds the trained embedding of each feature row as a
/// column.
MapperResult train_mapper(const nn::Mlp& decoder, const FeatureMatrix& warm_features, const MapperConfig& cfg,
                          const Eigen::MatrixXd* targets = nullptr);

/// Mean reconstruction loss of a batch (columns of clean / noisy features)
/// through encoder then frozen decoder. Accumulates encoder gradients into
/// grad_encoder when it is non-empty.
double mapper_batch_loss(const nn::Mlp& encoder, const nn::Mlp& decoder, const Eigen::MatrixXd& clean,
                         const Eigen::MatrixXd& noisy, Rng& rng, std::span<double> grad_encoder);

/// Eval-mode encoder pass: no dropout, no noise.
Eigen::VectorXd map_features(const Encoder& encoder, std::span<const double> features);
Eigen::MatrixXd map_features(const Encoder& encoder, const Eigen::MatrixXd& columns);

void save_encoder(const std::filesystem::path& manifest, const Encoder& encoder, const nlohmann::json& extra = {});
Encoder load_encoder(const std::filesystem::path& manifest, nlohmann::json* manifest_out = nullptr);

}  // namespace vasg
