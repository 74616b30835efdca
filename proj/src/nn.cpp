#include "vasg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vasg/error.hpp"

namespace vasg::nn {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("mse: length mismatch");
    if (a.empty()) throw std::invalid_argument("mse: empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

Mlp::Mlp(std::vector<std::size_t> widths, double dropout_p) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
    for (auto w : widths_)
        if (w == 0) throw std::invalid_argument("MLP widths must be positive");
    set_dropout(dropout_p);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(offset);
        offset += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
    params_.assign(offset, 0.0);
}

Mlp Mlp::glorot(std::vector<std::size_t> widths, double dropout_p, Rng& rng) {
    Mlp m(std::move(widths), dropout_p);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const double fan_in = static_cast<double>(m.widths_[l]);
        const double fan_out = static_cast<double>(m.widths_[l + 1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        auto w = m.weights(l);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    }
    return m;
}

void Mlp::set_dropout(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must lie in [0, 1)");
    dropout_p_ = p;
}

Eigen::Map<Eigen::MatrixXd> Mlp::weights(std::size_t layer) {
    return {params_.data() + offsets_[layer], static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weights(std::size_t layer) const {
    return {params_.data() + offsets_[layer], static_cast<Eigen::Index>(widths_[layer + 1]),
            static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t layer) {
    return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t layer) const {
    return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x, Mode mode, Rng* rng, MlpTape* tape) {
    if (static_cast<std::size_t>(x.rows()) != m.input_dim())
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.rows()) +
                                    " rows, expected " + std::to_string(m.input_dim()));
    const bool drop = mode == Mode::Train && m.dropout() > 0.0;
    if (drop && rng == nullptr) throw std::invalid_argument("mlp_forward: train-mode dropout needs an rng");
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
        tape->masks.clear();
    }
    const double keep = 1.0 - m.dropout();
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        Eigen::MatrixXd z = m.weights(l) * h;
        z.colwise() += m.bias(l);
        if (tape) tape->inputs.push_back(std::move(h));
        if (l + 1 == m.num_layers()) {
            if (tape) tape->pre.push_back(z);
            return z;
        }
        h = z.cwiseMax(0.0);
        if (tape) tape->pre.push_back(std::move(z));
        if (drop) {
            Eigen::MatrixXd mask(h.rows(), h.cols());
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                for (Eigen::Index r = 0; r < mask.rows(); ++r)
                    mask(r, c) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            h = h.cwiseProduct(mask);
            if (tape) tape->masks.push_back(std::move(mask));
        } else if (tape) {
            tape->masks.emplace_back();
        }
    }
    return h;  // unreachable: num_layers() >= 1
}

std::pair<Eigen::VectorXd, MlpTape> mlp_forward(const Mlp& m, const Eigen::VectorXd& x, Mode mode, Rng* rng) {
    MlpTape tape;
    Eigen::MatrixXd out = mlp_forward(m, Eigen::MatrixXd(x), mode, rng, &tape);
    return {out.col(0), std::move(tape)};
}

Eigen::MatrixXd mlp_backward(const Mlp& m, const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                             std::span<double> grad_params) {
    if (tape.inputs.size() != m.num_layers() || tape.pre.size() != m.num_layers())
        throw std::invalid_argument("mlp_backward: tape does not match network depth");
    const bool want_params = !grad_params.empty();
    if (want_params && grad_params.size() != m.num_params())
        throw std::invalid_argument("mlp_backward: gradient buffer has the wrong size");
    if (static_cast<std::size_t>(grad_out.rows()) != m.output_dim() ||
        grad_out.cols() != tape.inputs.front().cols())
        throw std::invalid_argument("mlp_backward: grad_out shape mismatch");

    Eigen::MatrixXd g = grad_out;
    for (std::size_t l = m.num_layers(); l-- > 0;) {
        if (l + 1 < m.num_layers()) {
            if (tape.masks[l].size() != 0) g = g.cwiseProduct(tape.masks[l]);
            g = g.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
        }
        if (want_params) {
            const auto out = static_cast<Eigen::Index>(m.widths()[l + 1]);
            const auto in = static_cast<Eigen::Index>(m.widths()[l]);
            Eigen::Map<Eigen::MatrixXd> dw(grad_params.data() + m.weight_offset(l), out, in);
            Eigen::Map<Eigen::VectorXd> db(grad_params.data() + m.bias_offset(l), out);
            dw.noalias() += g * tape.inputs[l].transpose();
            db += g.rowwise().sum();
        }
        g = m.weights(l).transpose() * g;
    }
    return g;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || state.m.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
    ++state.step;
    const auto& c = state.cfg;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

void adam_step_rows(AdamState& state, std::span<double> table, std::size_t dim,
                    std::span<const std::size_t> rows, std::span<const double> row_grads) {
    if (state.m.size() != table.size() || row_grads.size() != rows.size() * dim)
        throw std::invalid_argument("adam_step_rows: shape mismatch");
    for (std::size_t i = 0; i < row_grads.size(); ++i)
        if (!std::isfinite(row_grads[i]))
            throw NumericError("adam_step_rows: non-finite gradient for row " + std::to_string(rows[i / dim]));
    ++state.step;
    const auto& c = state.cfg;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t base = rows[r] * dim;
        if (base + dim > table.size()) throw std::out_of_range("adam_step_rows: row out of range");
        for (std::size_t k = 0; k < dim; ++k) {
            const double g = row_grads[r * dim + k];
            double& m = state.m[base + k];
            double& v = state.v[base + k];
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            table[base + k] -= c.lr * (m / correction1) / (std::sqrt(v / correction2) + c.eps);
        }
    }
}

double grad_check(const Objective& f, std::span<const double> params, double h) {
    std::vector<double> x(params.begin(), params.end());
    std::vector<double> analytic(x.size(), 0.0);
    f(x, analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x, {});
        x[i] = saved - h;
        const double down = f(x, {});
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace vasg::nn
