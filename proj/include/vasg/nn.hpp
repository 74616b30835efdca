#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vasg/rng.hpp"

namespace vasg::nn {

/// 1 / (1 + e^-x), branching on sign so neither side overflows.
double sigmoid(double x);

/// log(1 + e^x) without overflow.
double softplus(double x);

/// log(sigmoid(x)) computed as -softplus(-x); finite for any finite x.
inline double log_sigmoid(double x) { return -softplus(-x); }

/// Squared L2 distance divided by the length.
double mse(std::span<const double> a, std::span<const double> b);

enum class Mode { Train, Eval };

/// Fully connected network with ReLU on every hidden layer and inverted
/// dropout after each hidden activation. The last layer is linear.
///
/// All weights and biases live in one contiguous buffer: for each layer, the
/// column-major out x in weight matrix followed by the bias. Gradients use the
/// same layout, so optimizers work on flat spans.
class Mlp {
public:
    Mlp() = default;
    /// widths = {input, hidden..., output}; parameters start at zero.
    Mlp(std::vector<std::size_t> widths, double dropout_p);

    /// Glorot-uniform weights, zero biases.
    static Mlp glorot(std::vector<std::size_t> widths, double dropout_p, Rng& rng);

    std::size_t num_layers() const { return widths_.size() - 1; }
    std::size_t input_dim() const { return widths_.front(); }
    std::size_t output_dim() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    double dropout() const { return dropout_p_; }
    void set_dropout(double p);

    std::size_t num_params() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    Eigen::Map<Eigen::MatrixXd> weights(std::size_t layer);
    Eigen::Map<const Eigen::MatrixXd> weights(std::size_t layer) const;
    Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + widths_[layer + 1] * widths_[layer];
    }

private:
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
    double dropout_p_ = 0.0;
};

/// Intermediate values of a forward pass; columns are samples.
struct MlpTape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    std::vector<Eigen::MatrixXd> masks;   // per hidden layer; empty when no dropout was drawn
};

/// Batched forward pass over the columns of x. Train mode draws dropout masks
/// from rng (layer by layer, column by column); eval mode never touches rng.
Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x, Mode mode, Rng* rng,
                            MlpTape* tape = nullptr);

std::pair<Eigen::VectorXd, MlpTape> mlp_forward(const Mlp& m, const Eigen::VectorXd& x, Mode mode,
                                                Rng* rng);

/// Accumulates parameter gradients into grad_params (size num_params(), or
/// empty to skip them) and returns the gradient with respect to the input.
Eigen::MatrixXd mlp_backward(const Mlp& m, const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                             std::span<double> grad_params);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamState() = default;
    AdamState(std::size_t n, AdamConfig config) : cfg(config), m(n, 0.0), v(n, 0.0) {}

    AdamConfig cfg;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite
/// gradient before touching anything.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Adam restricted to the given rows of a row-major table (rows of length
/// dim). Rows not listed keep their parameters and moments; bias correction
/// uses the shared step count.
void adam_step_rows(AdamState& state, std::span<double> table, std::size_t dim,
                    std::span<const std::size_t> rows, std::span<const double> row_grads);

/// Objective for gradient checking: returns f(params) and, when grad is
/// non-empty, writes the analytic gradient into it.
using Objective = std::function<double(std::span<const double> params, std::span<double> grad)>;

/// Largest relative error |a - n| / max(|a|, |n|, 1e-6) between the analytic
/// gradient and central differences with step h.
double grad_check(const Objective& f, std::span<const double> params, double h = 1e-4);

}  // namespace vasg::nn
