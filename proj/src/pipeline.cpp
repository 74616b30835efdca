#include "vasg/pipeline.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vasg/error.hpp"
#include "vasg/hin.hpp"
#include "vasg/recsys.hpp"
#include "vasg/serialize.hpp"
#include "vasg/trainer.hpp"

namespace vasg {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t PipelineConfig::module_seed(const char* module) const { return derive_seed(seed, module); }

namespace {

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(std::stoul(item.substr(b)));
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("not a boolean: " + v);
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"paths.interactions", [](auto& c, auto& v) { c.interactions = v; }},
        {"paths.features", [](auto& c, auto& v) { c.features = v; }},
        {"paths.out", [](auto& c, auto& v) { c.out = v; }},
        {"run.seed", [](auto& c, auto& v) { c.seed = std::stoull(v); }},
        {"run.threads", [](auto& c, auto& v) { c.threads = static_cast<unsigned>(std::stoul(v)); }},
        {"data.min_history", [](auto& c, auto& v) { c.min_history = std::stoul(v); }},
        {"data.filter_iterate", [](auto& c, auto& v) { c.filter_iterate = parse_bool(v); }},
        {"data.cold_fraction", [](auto& c, auto& v) { c.split.cold_fraction = std::stod(v); }},
        {"data.min_train", [](auto& c, auto& v) { c.split.min_train = std::stoul(v); }},
        {"corpus.walks_per_node", [](auto& c, auto& v) { c.train.corpus.walks_per_node = std::stoul(v); }},
        {"corpus.walk_length", [](auto& c, auto& v) { c.train.corpus.walk_length = std::stoul(v); }},
        {"corpus.window", [](auto& c, auto& v) { c.train.corpus.window = std::stoul(v); }},
        {"train.dim", [](auto& c, auto& v) { c.train.dim = std::stoul(v); }},
        {"train.epochs", [](auto& c, auto& v) { c.train.epochs = std::stoul(v); }},
        {"train.batch_size", [](auto& c, auto& v) { c.train.batch_size = std::stoul(v); }},
        {"train.lr", [](auto& c, auto& v) { c.train.lr = std::stod(v); }},
        {"train.dropout", [](auto& c, auto& v) { c.train.dropout = std::stod(v); }},
        {"train.decoder_hidden", [](auto& c, auto& v) { c.train.decoder_hidden = parse_widths(v); }},
        {"train.negatives", [](auto& c, auto& v) { c.train.negatives = std::stoul(v); }},
        {"train.negative_power", [](auto& c, auto& v) { c.train.negative_power = std::stod(v); }},
        {"train.l2", [](auto& c, auto& v) { c.train.l2 = std::stod(v); }},
        {"train.use_decoder", [](auto& c, auto& v) { c.train.use_decoder = parse_bool(v); }},
        {"train.reuse_corpus", [](auto& c, auto& v) { c.train.reuse_corpus = parse_bool(v); }},
        {"train.async_workers", [](auto& c, auto& v) { c.train.async_workers = static_cast<unsigned>(std::stoul(v)); }},
        {"mapper.noise", [](auto& c, auto& v) { c.mapper.noise_std_scale = std::stod(v); }},
        {"mapper.epochs", [](auto& c, auto& v) { c.mapper.epochs = std::stoul(v); }},
        {"mapper.batch_size", [](auto& c, auto& v) { c.mapper.batch_size = std::stoul(v); }},
        {"mapper.lr", [](auto& c, auto& v) { c.mapper.lr = std::stod(v); }},
        {"mapper.dropout", [](auto& c, auto& v) { c.mapper.dropout = std::stod(v); }},
        {"mapper.hidden", [](auto& c, auto& v) { c.mapper.hidden = parse_widths(v); }},
        {"mapper.regress_embeddings", [](auto& c, auto& v) { c.mapper.regress_embeddings = parse_bool(v); }},
        {"eval.auc_negatives", [](auto& c, auto& v) { c.eval.auc_negatives = std::stoul(v); }},
        {"eval.pool",
         [](auto& c, auto& v) {
             if (v == "subset")
                 c.eval.pool = CandidatePool::SameSubset;
             else if (v == "all")
                 c.eval.pool = CandidatePool::All;
             else
                 throw std::invalid_argument("pool must be subset or all");
         }},
        {"eval.relation_cap", [](auto& c, auto& v) { c.eval.relation_cap = std::stoul(v); }},
        {"eval.threshold",
         [](auto& c, auto& v) {
             if (v == "auto")
                 c.eval.threshold.reset();
             else
                 c.eval.threshold = std::stod(v);
         }},
        {"eval.similarity_pairs", [](auto& c, auto& v) { c.eval.similarity_pairs = std::stoul(v); }},
        {"eval.pca_components", [](auto& c, auto& v) { c.eval.pca_components = std::stoul(v); }},
        {"eval.analogy_queries", [](auto& c, auto& v) { c.eval.analogy_queries = std::stoul(v); }},
        {"eval.analogy_k", [](auto& c, auto& v) { c.eval.analogy_k = std::stoul(v); }},
    };
    return table;
}

void log_line(std::ostream* log, const std::string& line) {
    if (log) *log << line << '\n';
}

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw InputError(std::string("no ") + what + " path configured");
    if (!fs::exists(p)) throw InputError(std::string(what) + " not found: " + p.string());
}

Split read_split(const PipelineConfig& cfg) {
    const fs::path p = cfg.out / "split.json";
    require_file(p, "split file (run prepare first)");
    return split_from_json(read_text(p));
}

TrainConfig effective_train(const PipelineConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = cfg.module_seed("train");
    t.threads = cfg.threads;
    return t;
}

MapperConfig effective_mapper(const PipelineConfig& cfg) {
    MapperConfig m = cfg.mapper;
    m.seed = cfg.module_seed("mapper");
    return m;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stats_json(const SimilarityStats& s) {
    return {{"pairs", s.pairs},
            {"mean", s.mean},
            {"std", s.std},
            {"kurtosis_pearson", nullable(s.kurtosis_pearson)},
            {"kurtosis_excess", nullable(s.kurtosis_excess)}};
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
    require_file(path, "config file");
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    PipelineConfig cfg;
    const auto& table = setters();
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw InputError(path.string() + ": key outside a section: " + section);
        for (const auto& [key, value] : body) {
            const std::string name = section + "." + key;
            const auto it = table.find(name);
            if (it == table.end()) throw InputError(path.string() + ": unknown key " + name);
            try {
                it->second(cfg, value.data());
            } catch (const std::exception& e) {
                throw InputError(path.string() + ": bad value for " + name + ": " + e.what());
            }
        }
    }
    return cfg;
}

json to_json(const PipelineConfig& cfg) {
    return {{"paths", {{"interactions", cfg.interactions.string()}, {"features", cfg.features.string()}, {"out", cfg.out.string()}}},
            {"seed", cfg.seed},
            {"threads", cfg.threads},
            {"data",
             {{"min_history", cfg.min_history},
              {"filter_iterate", cfg.filter_iterate},
              {"cold_fraction", cfg.split.cold_fraction},
              {"min_train", cfg.split.min_train}}},
            {"train", to_json(effective_train(cfg))},
            {"mapper", to_json(effective_mapper(cfg))},
            {"eval",
             {{"auc_negatives", cfg.eval.auc_negatives},
              {"pool", cfg.eval.pool == CandidatePool::All ? "all" : "subset"},
              {"relation_cap", cfg.eval.relation_cap},
              {"threshold", cfg.eval.threshold ? json(*cfg.eval.threshold) : json("auto")},
              {"similarity_pairs", cfg.eval.similarity_pairs},
              {"pca_components", cfg.eval.pca_components},
              {"analogy_queries", cfg.eval.analogy_queries},
              {"analogy_k", cfg.eval.analogy_k}}}};
}

void cmd_prepare(const PipelineConfig& cfg) {
    require_file(cfg.interactions, "interactions file");
    require_file(cfg.features, "features file");
    const InteractionSet raw = load_interactions(cfg.interactions);
    const InteractionSet kept = filter_min_history(raw, cfg.min_history, cfg.filter_iterate);
    const Split split = leave_one_out_split(kept, cfg.module_seed("split"), cfg.split);
    const std::vector<std::string> catalog = split.catalog();
    load_features(cfg.features, catalog);
    const Hin hin = Hin::build(split.train);

    fs::create_directories(cfg.out);
    write_text(cfg.out / "split.json", split_to_json(split));
    const json config = to_json(cfg);
    json stats = {{"products", kept.products().size()},
                  {"users", kept.users().size()},
                  {"ratings", kept.size()},
                  {"raw_ratings", raw.size()},
                  {"train_ratings", split.train.size()},
                  {"warm_products", split.warm_products.size()},
                  {"cold_products", split.cold_products.size()},
                  {"test", split.test.size()},
                  {"t_warm", split.t_warm.size()},
                  {"t_cold", split.t_cold.size()},
                  {"config", config}};
    write_text(cfg.out / "stats.json", stats.dump(2) + "\n");
    json h = {{"users", hin.num_users()},
              {"products", hin.num_products()},
              {"edges", hin.num_edges()},
              {"isolated", hin.isolated()},
              {"start_nodes", hin.start_nodes().size()},
              {"config", config}};
    write_text(cfg.out / "hin.json", h.dump(2) + "\n");
}

void cmd_train(const PipelineConfig& cfg, std::ostream* log) {
    const Split split = read_split(cfg);
    require_file(cfg.features, "features file");
    const FeatureMatrix features = load_features(cfg.features, split.warm_products);
    const Hin hin = Hin::build(split.train);
    const TrainConfig tc = effective_train(cfg);
    VasgModel model = VasgModel::init(hin, features.dim, tc);

    std::string csv = "epoch,skipgram,reconstruction,w1,w2\n";
    Trainer trainer(model, hin, features);
    trainer.run([&](const EpochStats& s) {
        csv += std::to_string(s.epoch + 1) + "," + fmt(s.skipgram) + "," + fmt(s.reconstruction) + "," + fmt(s.w1) +
               "," + fmt(s.w2) + "\n";
        log_line(log, "epoch " + std::to_string(s.epoch + 1) + " L_sg " + fmt(s.skipgram) + " L_mse " +
                          fmt(s.reconstruction) + " w1 " + fmt(s.w1) + " w2 " + fmt(s.w2));
    });
    fs::create_directories(cfg.out);
    save_model(cfg.out / "model.json", model, {{"effective_config", to_json(cfg)}});
    write_text(cfg.out / "train_loss.csv", csv);
}

void cmd_map(const PipelineConfig& cfg, std::ostream* log) {
    const fs::path model_path = cfg.out / "model.json";
    require_file(model_path, "model (run train first)");
    const VasgModel model = load_model(model_path);
    const std::string checksum = decoder_checksum(model.decoder);
    const json manifest = json::parse(read_text(model_path));
    if (manifest.at("decoder_checksum").get<std::string>() != checksum)
        throw InputError("decoder checksum in " + model_path.string() + " does not match its blob");
    if (!model.config.use_decoder && !cfg.mapper.regress_embeddings)
        log_line(log, "warning: model was trained without the decoder; the encoder maps through an untrained decoder");

    require_file(cfg.features, "features file");
    const FeatureMatrix features = load_features(cfg.features, model.products.ids()).subset(model.products.ids());
    const MapperConfig mc = effective_mapper(cfg);
    Eigen::MatrixXd targets;
    if (mc.regress_embeddings) targets = model.product_matrix();
    const MapperResult result = train_mapper(model.decoder, features, mc, mc.regress_embeddings ? &targets : nullptr);
    if (decoder_checksum(model.decoder) != checksum) throw std::logic_error("decoder changed during mapper training");

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        csv += std::to_string(e + 1) + "," + fmt(result.loss_history[e]) + "\n";
    if (!result.loss_history.empty())
        log_line(log, "mapper loss " + fmt(result.loss_history.front()) + " -> " + fmt(result.loss_history.back()));
    save_encoder(cfg.out / "encoder.json", result.encoder,
                 {{"decoder_checksum", checksum}, {"effective_config", to_json(cfg)}});
    write_text(cfg.out / "mapper_loss.csv", csv);
}

json cmd_evaluate(const PipelineConfig& cfg, std::ostream* log) {
    const Split split = read_split(cfg);
    const fs::path model_path = cfg.out / "model.json";
    require_file(model_path, "model (run train first)");
    const VasgModel model = load_model(model_path);
    require_file(cfg.features, "features file");
    const FeatureMatrix features = load_features(cfg.features, split.catalog());

    std::optional<Encoder> encoder;
    const fs::path encoder_path = cfg.out / "encoder.json";
    if (fs::exists(encoder_path)) {
        json enc_manifest;
        encoder = load_encoder(encoder_path, &enc_manifest);
        if (enc_manifest.value("decoder_checksum", std::string()) != decoder_checksum(model.decoder))
            throw InputError("encoder " + encoder_path.string() + " was trained against a different decoder");
    } else {
        log_line(log, "warning: no encoder found at " + encoder_path.string() + "; cold metrics are null");
    }

    const std::uint64_t eval_seed = cfg.module_seed("eval");
    AucOptions ao;
    ao.negatives = cfg.eval.auc_negatives;
    ao.pool = cfg.eval.pool;
    ao.seed = derive_seed(eval_seed, "auc");
    ao.threads = cfg.threads;
    if (ao.pool == CandidatePool::All && !encoder)
        log_line(log, "warning: pool=all needs an encoder for cold candidates; using subset pools");
    if (!encoder) ao.pool = CandidatePool::SameSubset;

    const Scorer vasg = embedding_scorer(model, &features, encoder ? &*encoder : nullptr);
    const Scorer rnd = rand_scorer(derive_seed(eval_seed, "rand"));
    const Scorer wboi = wboi_scorer(split.train, features);
    const auto auc_or_null = [&](const Scorer& s, Subset sub) -> json {
        const auto& t = sub == Subset::Warm ? split.t_warm : split.t_cold;
        if (t.empty()) return nullptr;
        return auc(s, split, sub, ao);
    };

    json report;
    report["auc_warm"] = auc_or_null(vasg, Subset::Warm);
    report["auc_cold"] = encoder ? auc_or_null(vasg, Subset::Cold) : json(nullptr);
    report["baselines"] = {
        {"rand", {{"auc_warm", auc_or_null(rnd, Subset::Warm)}, {"auc_cold", auc_or_null(rnd, Subset::Cold)}}},
        {"wboi", {{"auc_warm", auc_or_null(wboi, Subset::Warm)}, {"auc_cold", auc_or_null(wboi, Subset::Cold)}}}};

    const EmbeddingIndex emb = EmbeddingIndex::from_model(model);
    const FeatureMatrix warm_features = features.subset(model.products.ids());
    const EmbeddingIndex raw(Eigen::MatrixXd(warm_features.rows.transpose()), model.products.ids());
    const RelationSets sets = build_relation_sets(split.train, derive_seed(eval_seed, "relations"), cfg.eval.relation_cap);
    const RelationResult rel = relation_accuracy(emb, sets, cfg.eval.threshold, derive_seed(eval_seed, "threshold"));
    const RelationResult inn = relation_accuracy(raw, sets, cfg.eval.threshold, derive_seed(eval_seed, "threshold"));
    report["relation_accuracy"] = rel.accuracy;
    report["threshold_used"] = rel.threshold;
    report["relation_pairs"] = sets.positive.size() + sets.negative.size();
    report["baselines"]["inn"] = {{"relation_accuracy", inn.accuracy}, {"threshold_used", inn.threshold}};

    const AnalogyResult an = analogy_precision(model, split, emb, cfg.eval.analogy_queries, cfg.eval.analogy_k,
                                               derive_seed(eval_seed, "analogy"));
    report["precision_at_k"] = an.precision;
    report["analogy"] = {{"k", cfg.eval.analogy_k},
                         {"queries", an.queries},
                         {"precision_all_purchases", an.precision},
                         {"heldout_hit_rate", an.heldout_hit_rate}};

    const SimilarityStats sim = similarity_distribution(emb, cfg.eval.similarity_pairs, derive_seed(eval_seed, "similarity"));
    const SimilarityStats sim_raw =
        similarity_distribution(raw, cfg.eval.similarity_pairs, derive_seed(eval_seed, "similarity"));
    report["distribution_stats"] = stats_json(sim);
    report["baselines"]["raw_features"] = {{"distribution_stats", stats_json(sim_raw)}};

    fs::create_directories(cfg.out);
    write_histogram_csv(cfg.out / "similarity_hist.csv", sim);
    if (cfg.eval.pca_components > 0) {
        const Pca p = pca(model.product_matrix(), cfg.eval.pca_components, derive_seed(eval_seed, "pca"));
        write_pca_csv(cfg.out / "pca.csv", model.products.ids(), p);
    }
    report["config"] = to_json(cfg);
    write_text(cfg.out / "report.json", report.dump(2) + "\n");
    return report;
}

void cmd_recommend(const PipelineConfig& cfg, const RecommendRequest& request, std::ostream& out) {
    const fs::path model_path = cfg.out / "model.json";
    require_file(model_path, "model (run train first)");
    const VasgModel model = load_model(model_path);
    const EmbeddingIndex index = EmbeddingIndex::from_model(model);
    if (request.k == 0) throw std::invalid_argument("k must be at least 1");
    if (request.analogy) {
        const auto& [p1, u1, u2] = *request.analogy;
        write_recommendations(out, u2, analogy_recommend(model, p1, u1, u2, index, request.k));
        return;
    }
    const Eigen::VectorXd user = model.user_vector(request.user);
    std::unordered_set<std::string> exclude;
    if (request.exclude_seen) {
        for (const auto& x : read_split(cfg).train.interactions())
            if (x.user_id == request.user) exclude.insert(x.product_id);
    }
    write_recommendations(out, request.user, rank_products(user, index, exclude, request.k));
}

}  // namespace vasg
