#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "vasg/error.hpp"
#include "vasg/mapper.hpp"
#include "vasg/recsys.hpp"
#include "vasg/synth.hpp"
#include "vasg/trainer.hpp"

using namespace vasg;

namespace {

FeatureMatrix random_features(std::size_t n, std::size_t dim, std::uint64_t seed) {
    FeatureMatrix f;
    f.dim = dim;
    f.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    Rng rng(seed);
    for (Eigen::Index i = 0; i < f.rows.size(); ++i) f.rows.data()[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) f.ids.intern("p" + std::to_string(i));
    return f;
}

nn::Mlp identity(std::size_t dim) {
    nn::Mlp m({dim, dim}, 0.0);
    m.weights(0).setIdentity();
    return m;
}

}  // namespace

TEST_CASE("an identity decoder teaches the encoder the identity") {
    auto feats = random_features(80, 4, 1);
    MapperConfig cfg;
    cfg.hidden = {16};
    cfg.dropout = 0.0;
    cfg.noise_std_scale = 0.0;
    cfg.epochs = 400;
    cfg.lr = 1e-2;
    cfg.batch_size = 16;
    auto result = train_mapper(identity(4), feats, cfg);
    CHECK(result.loss_history.size() == 400);
    CHECK(result.loss_history.back() < 1e-3);
    CHECK(result.loss_history.back() < result.loss_history.front());
    Eigen::MatrixXd cols = feats.rows.transpose();
    Eigen::MatrixXd mapped = map_features(result.encoder, cols);
    CHECK((mapped - cols).squaredNorm() / static_cast<double>(cols.size()) < 1e-3);
}

TEST_CASE("the decoder is never modified") {
    auto feats = random_features(30, 6, 2);
    Rng rng(3);
    nn::Mlp dec = nn::Mlp::glorot({3, 8, 6}, 0.5, rng);
    const std::vector<double> before(dec.params().begin(), dec.params().end());
    MapperConfig cfg;
    cfg.epochs = 5;
    auto result = train_mapper(dec, feats, cfg);
    CHECK(std::equal(before.begin(), before.end(), dec.params().begin()));
    CHECK(result.encoder.input_dim() == 6);
    CHECK(result.encoder.output_dim() == 3);
    CHECK(result.encoder.mlp.widths() == std::vector<std::size_t>{6, 8, 3});
}

TEST_CASE("mapper batch gradient") {
    Rng rng(4);
    nn::Mlp dec = nn::Mlp::glorot({3, 5, 6}, 0.5, rng);
    nn::Mlp enc = nn::Mlp::glorot({6, 7, 3}, 0.3, rng);
    for (std::size_t l = 0; l < enc.num_layers(); ++l)
        for (Eigen::Index i = 0; i < enc.bias(l).size(); ++i) enc.bias(l)(i) = rng.uniform(0.1, 0.3);
    for (std::size_t l = 0; l < dec.num_layers(); ++l)
        for (Eigen::Index i = 0; i < dec.bias(l).size(); ++i) dec.bias(l)(i) = rng.uniform(0.1, 0.3);
    Eigen::MatrixXd clean = Eigen::MatrixXd::Random(6, 5);
    Eigen::MatrixXd noisy = clean + 0.1 * Eigen::MatrixXd::Random(6, 5);
    nn::Objective f = [&](std::span<const double> p, std::span<double> g) {
        nn::Mlp local = enc;
        std::copy(p.begin(), p.end(), local.params().begin());
        Rng r(12);
        if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
        return mapper_batch_loss(local, dec, clean, noisy, r, g);
    };
    CHECK(nn::grad_check(f, enc.params()) < 1e-5);

    // loss is ||recon - clean||^2 / (I * n)
    nn::Mlp plain = enc;
    plain.set_dropout(0.0);
    Rng r(1);
    Eigen::MatrixXd recon = nn::mlp_forward(dec, nn::mlp_forward(plain, noisy, nn::Mode::Eval, nullptr),
                                            nn::Mode::Eval, nullptr);
    CHECK(mapper_batch_loss(plain, dec, clean, noisy, r, {}) ==
          doctest::Approx((recon - clean).squaredNorm() / 30.0));
}

TEST_CASE("map_features is pure and finite") {
    auto feats = random_features(20, 6, 5);
    Rng rng(6);
    nn::Mlp dec = nn::Mlp::glorot({3, 8, 6}, 0.5, rng);
    MapperConfig cfg;
    cfg.epochs = 3;
    auto enc = train_mapper(dec, feats, cfg).encoder;
    std::vector<double> f(feats.row(0).data(), feats.row(0).data() + 6);
    auto a = map_features(enc, f);
    auto b = map_features(enc, f);
    CHECK(a == b);
    CHECK(map_features(enc, std::vector<double>(6, 0.0)).allFinite());
    Eigen::MatrixXd cols = feats.rows.transpose();
    CHECK(map_features(enc, cols).col(0).isApprox(a));
    CHECK_THROWS(map_features(enc, std::vector<double>(5, 0.0)));
}

TEST_CASE("training is deterministic and seed-sensitive") {
    auto feats = random_features(40, 6, 7);
    Rng rng(8);
    nn::Mlp dec = nn::Mlp::glorot({3, 8, 6}, 0.5, rng);
    MapperConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 11;
    auto a = train_mapper(dec, feats, cfg);
    auto b = train_mapper(dec, feats, cfg);
    CHECK(a.loss_history == b.loss_history);
    CHECK(std::equal(a.encoder.mlp.params().begin(), a.encoder.mlp.params().end(), b.encoder.mlp.params().begin()));
    cfg.seed = 12;
    auto c = train_mapper(dec, feats, cfg);
    CHECK(a.loss_history != c.loss_history);
}

TEST_CASE("mapper loss trends down on a fixed decoder") {
    auto feats = random_features(64, 6, 9);
    Rng rng(10);
    nn::Mlp dec = nn::Mlp::glorot({3, 8, 6}, 0.0, rng);
    MapperConfig cfg;
    cfg.epochs = 60;
    cfg.dropout = 0.0;
    auto r = train_mapper(dec, feats, cfg);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += r.loss_history[static_cast<std::size_t>(i)];
        last += r.loss_history[r.loss_history.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(last < first);
}

TEST_CASE("regression ablation fits target embeddings") {
    auto feats = random_features(50, 4, 13);
    Eigen::MatrixXd targets = 0.5 * feats.rows.transpose().topRows(2);
    Rng rng(14);
    nn::Mlp dec = nn::Mlp::glorot({2, 4}, 0.0, rng);
    MapperConfig cfg;
    cfg.regress_embeddings = true;
    cfg.hidden = {16};
    cfg.dropout = 0.0;
    cfg.noise_std_scale = 0.0;
    cfg.epochs = 300;
    cfg.lr = 1e-2;
    auto r = train_mapper(dec, feats, cfg, &targets);
    CHECK(r.loss_history.back() < 1e-3);
    Eigen::MatrixXd wrong(3, 50);
    CHECK_THROWS(train_mapper(dec, feats, cfg, &wrong));
}

TEST_CASE("input validation") {
    Rng rng(1);
    nn::Mlp dec = nn::Mlp::glorot({3, 6}, 0.0, rng);
    MapperConfig cfg;
    CHECK_THROWS_AS(train_mapper(dec, FeatureMatrix{}, cfg), InputError);
    CHECK_THROWS_AS(train_mapper(dec, random_features(5, 5, 1), cfg), InputError);
}

TEST_CASE("encoder save and load") {
    test::TempDir dir;
    auto feats = random_features(20, 6, 15);
    Rng rng(16);
    nn::Mlp dec = nn::Mlp::glorot({3, 8, 6}, 0.5, rng);
    MapperConfig cfg;
    cfg.epochs = 2;
    auto enc = train_mapper(dec, feats, cfg).encoder;
    save_encoder(dir / "e.json", enc, {{"decoder_checksum", "abc"}});
    nlohmann::json manifest;
    auto back = load_encoder(dir / "e.json", &manifest);
    CHECK(manifest.at("decoder_checksum") == "abc");
    CHECK(back.mlp.widths() == enc.mlp.widths());
    std::vector<double> f(6, 0.2);
    CHECK((map_features(back, f) - map_features(enc, f)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("cold products score higher for their buyers") {
    const auto data = generate_synth({});
    const Split split = leave_one_out_split(data.interactions, 2);
    REQUIRE(split.t_cold.size() > 20);
    const Hin hin = Hin::build(split.train);
    TrainConfig tc;
    tc.dim = 16;
    tc.decoder_hidden = {32};
    tc.dropout = 0.0;
    tc.epochs = 3;
    tc.negatives = 5;
    tc.negative_power = 0.25;
    tc.corpus = {5, 15, 7, 0};
    tc.seed = 2;
    auto model = VasgModel::init(hin, 64, tc);
    const auto warm = data.features.subset(hin.product_ids().ids());
    train(model, hin, warm);
    MapperConfig mc;
    mc.epochs = 30;
    const auto encoder = train_mapper(model.decoder, warm, mc).encoder;

    auto score = [&](const std::string& u, const std::string& p) {
        const auto f = data.features.row(p);
        return cold_score(model.user_vector(u), std::span<const double>(f.data(), 64), encoder);
    };
    double truth = 0, shuffled = 0;
    Rng rng(9);
    for (const auto& t : split.t_cold) {
        truth += score(t.user_id, t.product_id);
        shuffled += score(t.user_id, split.cold_products[rng.index(split.cold_products.size())]);
    }
    CHECK(truth > shuffled);
    CHECK(score(split.t_cold[0].user_id, split.t_cold[0].product_id) ==
          score(split.t_cold[0].user_id, split.t_cold[0].product_id));
}
