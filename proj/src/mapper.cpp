#include "vasg/mapper.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vasg/error.hpp"
#include "vasg/model.hpp"

namespace vasg {

using nlohmann::json;

json to_json(const MapperConfig& cfg) {
    return {{"noise_std_scale", cfg.noise_std_scale},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"dropout", cfg.dropout},
            {"hidden", cfg.hidden},
            {"regress_embeddings", cfg.regress_embeddings},
            {"seed", cfg.seed}};
}

double mapper_batch_loss(const nn::Mlp& encoder, const nn::Mlp& decoder, const Eigen::MatrixXd& clean,
                         const Eigen::MatrixXd& noisy, Rng& rng, std::span<double> grad_encoder) {
    nn::MlpTape enc_tape;
    nn::MlpTape dec_tape;
    const Eigen::MatrixXd code = nn::mlp_forward(encoder, noisy, nn::Mode::Train, &rng, &enc_tape);
    const Eigen::MatrixXd recon = nn::mlp_forward(decoder, code, nn::Mode::Eval, nullptr, &dec_tape);
    const Eigen::MatrixXd diff = recon - clean;
    const double n = static_cast<double>(clean.cols());
    const double dim = static_cast<double>(clean.rows());
    const double loss = diff.squaredNorm() / (dim * n);
    if (!grad_encoder.empty()) {
        const Eigen::MatrixXd grad_code = nn::mlp_backward(decoder, dec_tape, (2.0 / (dim * n)) * diff, {});
        nn::mlp_backward(encoder, enc_tape, grad_code, grad_encoder);
    }
    return loss;
}

namespace {

double regression_batch_loss(const nn::Mlp& encoder, const Eigen::MatrixXd& targets, const Eigen::MatrixXd& noisy,
                             Rng& rng, std::span<double> grad_encoder) {
    nn::MlpTape tape;
    const Eigen::MatrixXd code = nn::mlp_forward(encoder, noisy, nn::Mode::Train, &rng, &tape);
    const Eigen::MatrixXd diff = code - targets;
    const double scale = static_cast<double>(diff.rows()) * static_cast<double>(diff.cols());
    nn::mlp_backward(encoder, tape, (2.0 / scale) * diff, grad_encoder);
    return diff.squaredNorm() / scale;
}

}  // namespace

MapperResult train_mapper(const nn::Mlp& decoder, const FeatureMatrix& warm_features, const MapperConfig& cfg,
                          const Eigen::MatrixXd* targets) {
    if (warm_features.size() == 0) throw InputError("no warm product features to train the mapper on");
    if (decoder.output_dim() != warm_features.dim)
        throw InputError("decoder output dimension " + std::to_string(decoder.output_dim()) +
                         " does not match feature dimension " + std::to_string(warm_features.dim));
    if (cfg.noise_std_scale < 0.0) throw std::invalid_argument("noise scale must be non-negative");
    if (cfg.epochs == 0 || cfg.batch_size == 0) throw std::invalid_argument("mapper epochs and batch size must be positive");
    if (cfg.regress_embeddings &&
        (!targets || targets->cols() != static_cast<Eigen::Index>(warm_features.size()) ||
         targets->rows() != static_cast<Eigen::Index>(decoder.input_dim())))
        throw std::invalid_argument("embedding regression needs one target embedding per feature row");

    std::vector<std::size_t> widths{warm_features.dim};
    if (cfg.hidden.empty()) {
        const auto& dw = decoder.widths();
        widths.insert(widths.end(), dw.rbegin() + 1, dw.rend() - 1);
    } else {
        widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    }
    widths.push_back(decoder.input_dim());

    Rng rng(cfg.seed);
    MapperResult result;
    result.encoder.mlp = nn::Mlp::glorot(widths, cfg.dropout, rng);
    auto& encoder = result.encoder.mlp;

    const Eigen::MatrixXd features = warm_features.rows.transpose();  // one column per product
    const Eigen::VectorXd mean = features.rowwise().mean();
    const Eigen::VectorXd noise_std =
        (((features.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(features.cols())).sqrt() *
         cfg.noise_std_scale)
            .matrix();

    nn::AdamConfig adam;
    adam.lr = cfg.lr;
    nn::AdamState state(encoder.num_params(), adam);
    std::vector<double> grad(encoder.num_params());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(features.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const auto n = static_cast<Eigen::Index>(end - begin);
            Eigen::MatrixXd clean(features.rows(), n);
            Eigen::MatrixXd target;
            if (cfg.regress_embeddings) target.resize(targets->rows(), n);
            for (Eigen::Index c = 0; c < n; ++c) {
                clean.col(c) = features.col(order[begin + static_cast<std::size_t>(c)]);
                if (cfg.regress_embeddings) target.col(c) = targets->col(order[begin + static_cast<std::size_t>(c)]);
            }
            Eigen::MatrixXd noisy = clean;
            if (cfg.noise_std_scale > 0.0)
                for (Eigen::Index c = 0; c < n; ++c)
                    for (Eigen::Index r = 0; r < noisy.rows(); ++r) noisy(r, c) += noise_std(r) * rng.normal();

            std::fill(grad.begin(), grad.end(), 0.0);
            const double loss = cfg.regress_embeddings ? regression_batch_loss(encoder, target, noisy, rng, grad)
                                                       : mapper_batch_loss(encoder, decoder, clean, noisy, rng, grad);
            if (!std::isfinite(loss))
                throw NumericError("non-finite mapper loss in epoch " + std::to_string(epoch));
            nn::adam_step(state, encoder.params(), grad);
            epoch_loss += loss * static_cast<double>(n);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

Eigen::VectorXd map_features(const Encoder& encoder, std::span<const double> features) {
    if (features.size() != encoder.input_dim())
        throw std::invalid_argument("map_features: feature length " + std::to_string(features.size()) +
                                    " does not match encoder input " + std::to_string(encoder.input_dim()));
    const Eigen::Map<const Eigen::VectorXd> f(features.data(), static_cast<Eigen::Index>(features.size()));
    return nn::mlp_forward(encoder.mlp, Eigen::MatrixXd(f), nn::Mode::Eval, nullptr).col(0);
}

Eigen::MatrixXd map_features(const Encoder& encoder, const Eigen::MatrixXd& columns) {
    return nn::mlp_forward(encoder.mlp, columns, nn::Mode::Eval, nullptr);
}

void save_encoder(const std::filesystem::path& manifest, const Encoder& encoder, const json& extra) {
    save_mlp(manifest, encoder.mlp, "encoder", extra);
}

Encoder load_encoder(const std::filesystem::path& manifest, json* manifest_out) {
    return Encoder{load_mlp(manifest, "encoder", manifest_out)};
}

}  // namespace vasg
