#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "vasg/error.hpp"
#include "vasg/nn.hpp"

using namespace vasg;
using namespace vasg::nn;

TEST_CASE("sigmoid and softplus are stable") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(1000.0) == 1.0);
    CHECK(sigmoid(-1000.0) == 0.0);
    CHECK(std::isfinite(log_sigmoid(-1000.0)));
    CHECK(log_sigmoid(-1000.0) == doctest::Approx(-1000.0));
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(800.0) == doctest::Approx(800.0));
    CHECK(softplus(-800.0) >= 0.0);
    for (double x : {-30.0, -3.0, -0.1, 0.2, 4.0, 25.0})
        CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("mse") {
    std::vector<double> a{1, 2, 3, 4}, b{1, 0, 3, 0};
    CHECK(mse(a, b) == doctest::Approx(5.0));
    CHECK(mse(a, a) == 0.0);
}

TEST_CASE("mlp layout and forward") {
    Mlp m({2, 3, 1}, 0.0);
    CHECK(m.num_params() == 2 * 3 + 3 + 3 + 1);
    CHECK(m.bias_offset(0) == 6);
    CHECK(m.weight_offset(1) == 9);
    m.weights(0) << 1, 0, 0, 1, 1, -1;
    m.bias(0) << 0, 0, 0.5;
    m.weights(1) << 1, 1, 1;
    m.bias(1) << -1;
    Eigen::VectorXd x(2);
    x << 2, 3;
    // hidden relu(2, 3, -0.5) = (2, 3, 0)
    auto [y, tape] = mlp_forward(m, x, Mode::Eval, nullptr);
    CHECK(y(0) == doctest::Approx(4.0));
    CHECK(tape.pre.size() == 2);
}

TEST_CASE("mlp gradients match finite differences") {
    Rng rng(5);
    Mlp m = Mlp::glorot({5, 7, 6, 3}, 0.0, rng);
    // nonzero biases keep pre-activations off the relu kink
    for (std::size_t l = 0; l < m.num_layers(); ++l)
        for (Eigen::Index i = 0; i < m.bias(l).size(); ++i) m.bias(l)(i) = rng.uniform(0.1, 0.3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(3, 4);
    Objective f = [&](std::span<const double> p, std::span<double> g) {
        Mlp local = m;
        std::copy(p.begin(), p.end(), local.params().begin());
        MlpTape tape;
        Eigen::MatrixXd y = mlp_forward(local, x, Mode::Eval, nullptr, &tape);
        Eigen::MatrixXd diff = y - target;
        if (!g.empty()) {
            std::fill(g.begin(), g.end(), 0.0);
            mlp_backward(local, tape, diff, g);
        }
        return 0.5 * diff.squaredNorm();
    };
    CHECK(grad_check(f, m.params()) < 1e-5);

    SUBCASE("input gradient") {
        Eigen::VectorXd v = Eigen::VectorXd::Random(5);
        Objective fx = [&](std::span<const double> p, std::span<double> g) {
            Eigen::VectorXd in = Eigen::Map<const Eigen::VectorXd>(p.data(), 5);
            MlpTape tape;
            Eigen::MatrixXd y = mlp_forward(m, in, Mode::Eval, nullptr, &tape);
            if (!g.empty()) {
                Eigen::MatrixXd gi = mlp_backward(m, tape, y, {});
                std::copy(gi.data(), gi.data() + 5, g.begin());
            }
            return 0.5 * y.squaredNorm();
        };
        CHECK(grad_check(fx, std::span<const double>(v.data(), 5)) < 1e-5);
    }
}

TEST_CASE("dropout masks are replayed by the tape") {
    Rng init(1);
    Mlp m = Mlp::glorot({4, 16, 2}, 0.5, init);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
    Objective f = [&](std::span<const double> p, std::span<double> g) {
        Mlp local = m;
        std::copy(p.begin(), p.end(), local.params().begin());
        Rng rng(77);
        MlpTape tape;
        Eigen::MatrixXd y = mlp_forward(local, x, Mode::Train, &rng, &tape);
        if (!g.empty()) {
            std::fill(g.begin(), g.end(), 0.0);
            mlp_backward(local, tape, y, g);
        }
        return 0.5 * y.squaredNorm();
    };
    CHECK(grad_check(f, m.params()) < 1e-5);
}

TEST_CASE("eval mode is deterministic and ignores dropout") {
    Rng init(2);
    Mlp m = Mlp::glorot({4, 8, 2}, 0.5, init);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 6);
    Eigen::MatrixXd a = mlp_forward(m, x, Mode::Eval, nullptr);
    Rng rng(3);
    Eigen::MatrixXd b = mlp_forward(m, x, Mode::Eval, &rng);
    CHECK(a == b);
    Rng fresh(3);
    CHECK(rng.next() == fresh.next());
    Mlp nodrop = m;
    nodrop.set_dropout(0.0);
    Rng r2(4);
    CHECK(mlp_forward(nodrop, x, Mode::Train, &r2).isApprox(a));
}

TEST_CASE("inverted dropout keeps the expected activation") {
    Mlp m({1, 1, 1}, 0.5);
    m.weights(0)(0, 0) = 1.0;
    m.weights(1)(0, 0) = 1.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 20000);
    Rng rng(9);
    Eigen::MatrixXd y = mlp_forward(m, x, Mode::Train, &rng);
    CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.03));
    for (Eigen::Index i = 0; i < y.cols(); ++i) CHECK((y(0, i) == 0.0 || y(0, i) == 2.0));
}

TEST_CASE("glorot bounds") {
    Rng rng(1);
    Mlp m = Mlp::glorot({30, 50}, 0.0, rng);
    const double bound = std::sqrt(6.0 / 80.0);
    CHECK(m.weights(0).cwiseAbs().maxCoeff() <= bound);
    CHECK(m.weights(0).cwiseAbs().maxCoeff() > 0.9 * bound);
    CHECK(m.bias(0).isZero());
}

TEST_CASE("adam") {
    SUBCASE("first step moves each parameter by lr against the gradient sign") {
        AdamState s(3, {0.1});
        std::vector<double> p{1, 1, 1}, g{2, -0.5, 1e-3};
        adam_step(s, p, g);
        CHECK(p[0] == doctest::Approx(0.9));
        CHECK(p[1] == doctest::Approx(1.1));
        CHECK(p[2] == doctest::Approx(0.9).epsilon(1e-4));
        CHECK(s.step == 1);
    }
    SUBCASE("minimizes a quadratic") {
        AdamState s(2, {0.05});
        std::vector<double> p{3, -2};
        for (int i = 0; i < 2000; ++i) {
            std::vector<double> g{2 * (p[0] - 1), 2 * (p[1] + 1)};
            adam_step(s, p, g);
        }
        CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(p[1] == doctest::Approx(-1.0).epsilon(1e-3));
    }
    SUBCASE("non-finite gradient throws and leaves state alone") {
        AdamState s(2, {});
        std::vector<double> p{1, 2}, g{0.1, std::numeric_limits<double>::quiet_NaN()};
        CHECK_THROWS_AS(adam_step(s, p, g), NumericError);
        CHECK(p == std::vector<double>{1, 2});
        CHECK(s.step == 0);
    }
    SUBCASE("row-sparse update touches only listed rows") {
        AdamState s(6, {0.1});
        std::vector<double> table{1, 1, 1, 1, 1, 1};
        std::vector<std::size_t> rows{1};
        std::vector<double> g{1, -1};
        adam_step_rows(s, table, 2, rows, g);
        CHECK(table[0] == 1.0);
        CHECK(table[2] == doctest::Approx(0.9));
        CHECK(table[3] == doctest::Approx(1.1));
        CHECK(table[5] == 1.0);
        CHECK(s.m[0] == 0.0);
        CHECK(s.m[2] != 0.0);
    }
}
