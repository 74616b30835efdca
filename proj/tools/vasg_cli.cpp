#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vasg/error.hpp"
#include "vasg/pipeline.hpp"
#include "vasg/synth.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string interactions;
    std::string features;
    std::string out;
    bool no_decoder = false;
    std::optional<double> noise;
    std::optional<std::size_t> negatives;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> dim;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "INI config file");
    app->add_option("--seed", c.seed, "Global seed");
    app->add_option("--threads", c.threads, "Worker threads for walks and evaluation");
    app->add_option("--interactions", c.interactions, "Interactions CSV");
    app->add_option("--features", c.features, "Feature manifest (JSON)");
    app->add_option("--out", c.out, "Artifact directory");
}

vasg::PipelineConfig resolve(const Common& c) {
    vasg::PipelineConfig cfg = c.config.empty() ? vasg::PipelineConfig{} : vasg::load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    if (!c.interactions.empty()) cfg.interactions = c.interactions;
    if (!c.features.empty()) cfg.features = c.features;
    if (!c.out.empty()) cfg.out = c.out;
    if (c.no_decoder) cfg.train.use_decoder = false;
    if (c.noise) cfg.mapper.noise_std_scale = *c.noise;
    if (c.negatives) cfg.train.negatives = *c.negatives;
    if (c.epochs) cfg.train.epochs = *c.epochs;
    if (c.dim) cfg.train.dim = *c.dim;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visually aware skip-gram embeddings for image-based recommendation"};
    app.require_subcommand(1);
    Common common;

    auto* prepare = app.add_subcommand("prepare", "Filter interactions and write the train/test split");
    add_common(prepare, common);

    auto* train = app.add_subcommand("train", "Train embeddings and the feature decoder");
    add_common(train, common);
    train->add_flag("--no-decoder", common.no_decoder, "Plain Skip-Gram without reconstruction");
    train->add_option("--negatives", common.negatives, "Negative samples per pair");
    train->add_option("--epochs", common.epochs, "Training epochs");
    train->add_option("--dim", common.dim, "Embedding dimension");

    auto* map = app.add_subcommand("map", "Train the feature-to-embedding encoder");
    add_common(map, common);
    map->add_option("--noise", common.noise, "Input noise as a fraction of feature std");

    auto* evaluate = app.add_subcommand("evaluate", "Write report.json with AUC, relation and distribution metrics");
    add_common(evaluate, common);

    vasg::RecommendRequest request;
    std::vector<std::string> analogy;
    auto* recommend = app.add_subcommand("recommend", "Top-k products for a user, as CSV on stdout");
    add_common(recommend, common);
    recommend->add_option("--user", request.user, "User id");
    recommend->add_option("--k", request.k, "Number of products")->check(CLI::PositiveNumber);
    recommend->add_option("--analogy", analogy, "P1 U1 U2: recommend for U2 from U1's purchase P1")->expected(3);
    recommend->add_flag("--exclude-seen", request.exclude_seen, "Skip products the user bought in training");

    vasg::SynthConfig sc;
    std::string synth_dir = "synth";
    auto* synth = app.add_subcommand("synth", "Generate a planted-cluster dataset");
    synth->add_option("--out", synth_dir, "Output directory");
    synth->add_option("--users", sc.n_users);
    synth->add_option("--products", sc.n_products);
    synth->add_option("--clusters", sc.n_clusters);
    synth->add_option("--in-cluster-prob", sc.in_cluster_prob);
    synth->add_option("--purchases", sc.purchases, "Distinct purchases per user");
    synth->add_option("--feature-dim", sc.feature_dim);
    synth->add_option("--noise", sc.feature_noise_std, "Feature noise std");
    synth->add_option("--skew", sc.popularity_skew, "Zipf exponent of in-cluster popularity");
    synth->add_option("--seed", sc.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            vasg::write_synth(synth_dir, vasg::generate_synth(sc));
            return 0;
        }
        const vasg::PipelineConfig cfg = resolve(common);
        if (*prepare) {
            vasg::cmd_prepare(cfg);
        } else if (*train) {
            vasg::cmd_train(cfg, &std::cerr);
        } else if (*map) {
            vasg::cmd_map(cfg, &std::cerr);
        } else if (*evaluate) {
            vasg::cmd_evaluate(cfg, &std::cerr);
        } else if (*recommend) {
            if (!analogy.empty()) {
                request.analogy = std::array<std::string, 3>{analogy[0], analogy[1], analogy[2]};
            } else if (request.user.empty()) {
                std::cerr << "error: recommend needs --user or --analogy\n";
                return 2;
            }
            vasg::cmd_recommend(cfg, request, std::cout);
        }
        return 0;
    } catch (const vasg::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const vasg::QueryError& e) {
        std::cerr << "query error: " << e.what() << '\n';
        return 3;
    } catch (const vasg::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
