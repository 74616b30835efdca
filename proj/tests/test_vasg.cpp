#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "support.hpp"
#include "vasg/error.hpp"
#include "vasg/model.hpp"
#include "vasg/synth.hpp"
#include "vasg/trainer.hpp"

using namespace vasg;

namespace {

struct Toy {
    SynthData data;
    Hin hin;
    FeatureMatrix warm;
};

Toy toy(std::size_t feature_dim = 8) {
    SynthConfig sc;
    sc.n_users = 12;
    sc.n_products = 18;
    sc.purchases = 5;
    sc.feature_dim = feature_dim;
    sc.n_clusters = 2;
    Toy t{generate_synth(sc), {}, {}};
    t.hin = Hin::build(t.data.interactions);
    t.warm = t.data.features.subset(t.hin.product_ids().ids());
    return t;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.dim = 4;
    cfg.decoder_hidden = {6};
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.corpus = {2, 7, 3, 0};
    cfg.seed = 3;
    return cfg;
}

Node U(std::uint32_t i) { return {NodeType::User, i}; }
Node P(std::uint32_t i) { return {NodeType::Product, i}; }

}  // namespace

TEST_CASE("skipgram pair loss") {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(3), a(3), b(3);
    CHECK(skipgram_pair_loss(zero, zero).loss == doctest::Approx(std::log(2.0)));
    a << 1, 2, 3;
    b << -100, -100, -100;
    auto far = skipgram_pair_loss(a, b);
    CHECK(std::isfinite(far.loss));
    CHECK(far.loss == doctest::Approx(600.0));
    b << 100, 100, 100;
    CHECK(skipgram_pair_loss(a, b).loss < 1e-100);

    b << 0.3, -0.2, 0.5;
    a << 0.1, 0.4, -0.6;
    nn::Objective f = [&](std::span<const double> p, std::span<double> g) {
        Eigen::Map<const Eigen::VectorXd> c(p.data(), 3), x(p.data() + 3, 3);
        auto r = skipgram_pair_loss(c, x);
        if (!g.empty()) {
            Eigen::Map<Eigen::VectorXd>(g.data(), 3) = r.grad_center;
            Eigen::Map<Eigen::VectorXd>(g.data() + 3, 3) = r.grad_context;
        }
        return r.loss;
    };
    std::vector<double> p{0.1, 0.4, -0.6, 0.3, -0.2, 0.5};
    CHECK(nn::grad_check(f, p) < 1e-6);
}

TEST_CASE("init and layout") {
    auto t = toy();
    auto cfg = small_config();
    auto m = VasgModel::init(t.hin, 8, cfg);
    CHECK(m.num_nodes() == t.hin.num_nodes());
    CHECK(m.embeddings.cwiseAbs().maxCoeff() <= 0.5 / 4);
    CHECK(m.decoder.widths() == std::vector<std::size_t>{4, 6, 8});
    CHECK(m.column(P(0)) == t.hin.num_users());
    CHECK(m.product_matrix().cols() == static_cast<Eigen::Index>(t.hin.num_products()));
    CHECK(m.user_vector(m.users.id(1)) == Eigen::VectorXd(m.vec(U(1))));
    CHECK_THROWS_AS(m.product_vector("nope"), QueryError);
    auto again = VasgModel::init(t.hin, 8, cfg);
    CHECK(again.embeddings == m.embeddings);
    CHECK(std::equal(again.decoder.params().begin(), again.decoder.params().end(), m.decoder.params().begin()));
    cfg.dim = 0;
    CHECK_THROWS(VasgModel::init(t.hin, 8, cfg));
}

TEST_CASE("product step loss gradient on a toy model") {
    auto t = toy();
    auto cfg = small_config();
    cfg.dropout = 0.3;
    auto model = VasgModel::init(t.hin, 8, cfg);
    model.weights = {0.2, -0.3};
    const std::vector<double> feats(t.warm.row(0).data(), t.warm.row(0).data() + 8);
    const Node centre = P(0), context = U(t.hin.product_adj(0).front());

    // params: centre, context, decoder, s1, s2
    const std::size_t nd = model.decoder.num_params();
    std::vector<double> p;
    p.insert(p.end(), model.vec(centre).begin(), model.vec(centre).end());
    p.insert(p.end(), model.vec(context).begin(), model.vec(context).end());
    p.insert(p.end(), model.decoder.params().begin(), model.decoder.params().end());
    p.push_back(model.weights.s1);
    p.push_back(model.weights.s2);

    nn::Objective f = [&](std::span<const double> q, std::span<double> g) {
        VasgModel m = model;
        m.vec(centre) = Eigen::Map<const Eigen::VectorXd>(q.data(), 4);
        m.vec(context) = Eigen::Map<const Eigen::VectorXd>(q.data() + 4, 4);
        std::copy(q.begin() + 8, q.begin() + 8 + static_cast<long>(nd), m.decoder.params().begin());
        m.weights = {q[8 + nd], q[9 + nd]};
        Rng rng(21);
        auto r = product_step_loss(m, centre, context, feats, rng);
        if (!g.empty()) {
            std::copy(r.grad_center.data(), r.grad_center.data() + 4, g.begin());
            std::copy(r.grad_context.data(), r.grad_context.data() + 4, g.begin() + 4);
            std::copy(r.grad_decoder.begin(), r.grad_decoder.end(), g.begin() + 8);
            g[8 + nd] = r.grad_s1;
            g[9 + nd] = r.grad_s2;
        }
        return r.total;
    };
    CHECK(nn::grad_check(f, p) < 1e-5);

    Rng rng(1);
    auto r = product_step_loss(model, centre, context, feats, rng);
    CHECK(r.total == doctest::Approx(model.weights.w1() * r.skipgram + model.weights.w2() * r.reconstruction - 0.1));
    CHECK_THROWS_AS(product_step_loss(model, centre, context, std::vector<double>(7), rng), InputError);
    CHECK_THROWS(product_step_loss(model, U(0), context, feats, rng));
}

TEST_CASE("batch gradients match finite differences") {
    auto t = toy(5);
    auto cfg = small_config();
    cfg.dim = 3;
    cfg.decoder_hidden = {4};
    cfg.dropout = 0.3;
    cfg.negatives = 2;
    cfg.l2 = 0.01;
    auto model = VasgModel::init(t.hin, 5, cfg);
    model.weights = {0.1, 0.4};
    Trainer trainer(model, t.hin, t.warm);
    Corpus corpus(t.hin, cfg.corpus);
    auto sampler = NegativeSampler::from_corpus(corpus, model, 0.75);

    std::vector<ContextPair> products, users;
    for (const auto& pr : context_pairs(corpus.walk(0), 3)) (pr.first.type == NodeType::Product ? products : users).push_back(pr);
    for (const auto& pr : context_pairs(corpus.walk(1), 3)) (pr.first.type == NodeType::Product ? products : users).push_back(pr);
    REQUIRE(!products.empty());
    REQUIRE(!users.empty());

    const std::size_t ne = static_cast<std::size_t>(model.embeddings.size());
    const std::size_t nd = model.decoder.num_params();
    for (const auto* batch : {&products, &users}) {
        std::vector<double> p(model.embeddings.data(), model.embeddings.data() + ne);
        p.insert(p.end(), model.decoder.params().begin(), model.decoder.params().end());
        p.push_back(model.weights.s1);
        p.push_back(model.weights.s2);
        const VasgModel saved = model;
        nn::Objective f = [&](std::span<const double> q, std::span<double> g) {
            std::copy(q.begin(), q.begin() + static_cast<long>(ne), model.embeddings.data());
            std::copy(q.begin() + static_cast<long>(ne), q.begin() + static_cast<long>(ne + nd),
                      model.decoder.params().begin());
            model.weights = {q[ne + nd], q[ne + nd + 1]};
            Rng rng(8);
            auto grads = trainer.compute(*batch, rng, &sampler);
            if (!g.empty()) {
                std::fill(g.begin(), g.end(), 0.0);
                for (std::size_t r = 0; r < grads.rows.size(); ++r)
                    for (std::size_t d = 0; d < cfg.dim; ++d) g[grads.rows[r] * cfg.dim + d] = grads.row_grads[r * cfg.dim + d];
                if (grads.product_batch) {
                    std::copy(grads.decoder.begin(), grads.decoder.end(), g.begin() + static_cast<long>(ne));
                    g[ne + nd] = grads.s1;
                    g[ne + nd + 1] = grads.s2;
                }
            }
            return grads.outcome.loss;
        };
        CHECK(nn::grad_check(f, p) < 1e-5);
        model = saved;
    }
}

TEST_CASE("mixed batches are rejected") {
    auto t = toy();
    auto model = VasgModel::init(t.hin, 8, small_config());
    Trainer trainer(model, t.hin, t.warm);
    std::vector<ContextPair> batch{{U(0), P(t.hin.user_adj(0)[0])}, {P(0), U(t.hin.product_adj(0)[0])}};
    Rng rng(1);
    CHECK_THROWS(trainer.step(batch, rng));
}

TEST_CASE("user batches leave the decoder and task weights alone") {
    auto t = toy();
    auto model = VasgModel::init(t.hin, 8, small_config());
    const std::vector<double> before(model.decoder.params().begin(), model.decoder.params().end());
    Trainer trainer(model, t.hin, t.warm);
    std::vector<ContextPair> batch{{U(0), P(t.hin.user_adj(0)[0])}};
    Rng rng(1);
    const Eigen::MatrixXd emb = model.embeddings;
    trainer.step(batch, rng);
    CHECK(std::equal(before.begin(), before.end(), model.decoder.params().begin()));
    CHECK(model.weights.s1 == 0.0);
    CHECK(model.weights.s2 == 0.0);
    // only the two touched columns move
    int moved = 0;
    for (Eigen::Index c = 0; c < emb.cols(); ++c) moved += emb.col(c) != model.embeddings.col(c);
    CHECK(moved == 2);
}

TEST_CASE("negative sampler") {
    std::vector<double> counts{0, 5, 1, 0, 10};
    NegativeSampler s(counts);
    Rng rng(4);
    std::vector<std::size_t> exclude{4};
    std::map<std::size_t, int> hist;
    for (auto c : s.sample(rng, 12000, exclude)) ++hist[c];
    CHECK(hist.count(0) == 0);
    CHECK(hist.count(3) == 0);
    CHECK(hist.count(4) == 0);
    CHECK(hist[1] / static_cast<double>(hist[2]) == doctest::Approx(5.0).epsilon(0.15));
    CHECK(s.sample(rng, 0, {}).empty());

    auto t = toy();
    auto model = VasgModel::init(t.hin, 8, small_config());
    Corpus corpus(t.hin, {1, 5, 3, 0});
    auto flat = NegativeSampler::from_corpus(corpus, model, 0.0);
    CHECK(flat.size() == model.num_nodes());
}

TEST_CASE("training reduces the loss and is reproducible") {
    auto t = toy();
    auto cfg = small_config();
    cfg.epochs = 6;
    cfg.lr = 1e-2;
    cfg.negatives = 2;
    auto a = VasgModel::init(t.hin, 8, cfg);
    auto b = VasgModel::init(t.hin, 8, cfg);
    auto sa = train(a, t.hin, t.warm);
    auto sb = train(b, t.hin, t.warm);
    REQUIRE(sa.size() == 6);
    CHECK(sa.back().skipgram < sa.front().skipgram);
    CHECK(sa.back().reconstruction < sa.front().reconstruction);
    CHECK(a.embeddings == b.embeddings);
    CHECK(a.weights.s1 == b.weights.s1);
    for (const auto& e : sa) {
        CHECK(e.w1 > 0.0);
        CHECK(e.w2 > 0.0);
        CHECK(e.user_pairs > 0);
        CHECK(e.product_pairs > 0);
    }
    CHECK(a.weights.s1 != 0.0);

    SUBCASE("without the decoder nothing but embeddings changes") {
        cfg.use_decoder = false;
        auto c = VasgModel::init(t.hin, 8, cfg);
        const std::vector<double> dec(c.decoder.params().begin(), c.decoder.params().end());
        auto sc = train(c, t.hin, t.warm);
        CHECK(std::equal(dec.begin(), dec.end(), c.decoder.params().begin()));
        CHECK(c.weights.s1 == 0.0);
        CHECK(sc.back().reconstruction == 0.0);
    }
    SUBCASE("a different seed gives different embeddings") {
        cfg.seed = 4;
        auto c = VasgModel::init(t.hin, 8, cfg);
        train(c, t.hin, t.warm);
        CHECK(c.embeddings != a.embeddings);
    }
}

TEST_CASE("missing feature rows are reported") {
    auto t = toy();
    auto model = VasgModel::init(t.hin, 8, small_config());
    std::vector<std::string> some(t.hin.product_ids().ids().begin() + 1, t.hin.product_ids().ids().end());
    auto partial = t.data.features.subset(some);
    CHECK_THROWS_AS(Trainer(model, t.hin, partial), InputError);
}

TEST_CASE("model save and load") {
    test::TempDir dir;
    auto t = toy();
    auto cfg = small_config();
    auto m = VasgModel::init(t.hin, 8, cfg);
    train(m, t.hin, t.warm);
    save_model(dir / "m.json", m, {{"note", "x"}});
    auto back = load_model(dir / "m.json");
    CHECK(back.dim == m.dim);
    CHECK(back.users.ids() == m.users.ids());
    CHECK(back.products.ids() == m.products.ids());
    CHECK((back.embeddings - m.embeddings).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(back.weights.s2 == m.weights.s2);
    CHECK(back.decoder.widths() == m.decoder.widths());
    CHECK(to_json(back.config) == to_json(m.config));
    CHECK(decoder_checksum(back.decoder) == decoder_checksum(m.decoder));

    save_model(dir / "m2.json", back, {{"note", "x"}});
    auto j1 = nlohmann::json::parse(read_text(dir / "m.json")), j2 = nlohmann::json::parse(read_text(dir / "m2.json"));
    j1.erase("blobs");
    j2.erase("blobs");
    CHECK(j1 == j2);
    CHECK(test::same_bytes(dir / "m.embeddings.bin", dir / "m2.embeddings.bin"));

    SUBCASE("two runs write identical bytes") {
        auto m3 = VasgModel::init(t.hin, 8, cfg);
        train(m3, t.hin, t.warm);
        save_model(dir / "m3.json", m3, {{"note", "x"}});
        CHECK(test::same_bytes(dir / "m.embeddings.bin", dir / "m3.embeddings.bin"));
        CHECK(test::same_bytes(dir / "m.decoder.bin", dir / "m3.decoder.bin"));
    }
    SUBCASE("truncated blob is rejected") {
        auto bytes = read_bytes(dir / "m.decoder.bin");
        bytes.resize(bytes.size() - 4);
        write_bytes(dir / "m.decoder.bin", bytes);
        CHECK_THROWS_AS(load_model(dir / "m.json"), InputError);
    }
    SUBCASE("wrong role") {
        save_mlp(dir / "e.json", m.decoder, "encoder");
        CHECK_THROWS_AS(load_model(dir / "e.json"), InputError);
        CHECK_THROWS_AS(load_mlp(dir / "e.json", "decoder"), InputError);
        CHECK(load_mlp(dir / "e.json", "encoder").widths() == m.decoder.widths());
    }
    CHECK_THROWS_AS(load_model(dir / "absent.json"), InputError);
}

TEST_CASE("train config json round trip") {
    auto cfg = small_config();
    cfg.negatives = 3;
    cfg.negative_power = 0.5;
    auto back = train_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK(back.negative_power == 0.5);
}

TEST_CASE("clique with the plain objective") {
    std::vector<Interaction> rows;
    for (const char* u : {"a", "b"})
        for (const char* p : {"x", "y"}) rows.push_back({u, p, 1.0, std::nullopt});
    const auto set = InteractionSet::from_rows(rows);
    const Hin hin = Hin::build(set);
    FeatureMatrix feats;
    feats.dim = 4;
    feats.rows.resize(2, 4);
    feats.rows << 1, 0, 0.5, 0, 0, 1, 0, 0.5;
    feats.ids.intern("x");
    feats.ids.intern("y");
    auto cfg = small_config();
    cfg.epochs = 5;
    cfg.lr = 1e-2;
    cfg.negatives = 0;
    cfg.corpus = {4, 9, 3, 0};
    auto model = VasgModel::init(hin, 4, cfg);
    auto stats = train(model, hin, feats);
    REQUIRE(stats.size() == 5);
    int drops = 0;
    for (std::size_t e = 1; e < 5; ++e)
        drops += stats[e].skipgram + stats[e].reconstruction < stats[e - 1].skipgram + stats[e - 1].reconstruction;
    CHECK(drops >= 3);
    CHECK(model.embeddings.allFinite());
}

TEST_CASE("planted clusters separate after training") {
    SynthConfig sc;
    auto data = generate_synth(sc);
    const Hin hin = Hin::build(data.interactions);
    auto cfg = small_config();
    cfg.dim = 16;
    cfg.decoder_hidden = {16};
    cfg.dropout = 0.0;
    cfg.epochs = 3;
    cfg.negatives = 5;
    cfg.negative_power = 0.25;
    cfg.corpus = {5, 15, 7, 0};
    auto model = VasgModel::init(hin, 64, cfg);
    train(model, hin, data.features.subset(hin.product_ids().ids()));

    auto cluster = [](const std::string& id) { return std::stoul(id.substr(1)) % 3; };
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t u = 0; u < model.users.size(); ++u) {
        const Eigen::VectorXd x = model.embeddings.col(static_cast<Eigen::Index>(u)).normalized();
        for (std::size_t p = 0; p < model.products.size(); ++p) {
            const double c = x.dot(model.vec({NodeType::Product, static_cast<std::uint32_t>(p)}).normalized());
            if (cluster(model.users.id(u)) == cluster(model.products.id(p))) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    CHECK(intra / static_cast<double>(n_intra) > inter / static_cast<double>(n_inter));
}
