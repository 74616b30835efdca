#include "vasg/model.hpp"

#include <stdexcept>

#include "vasg/error.hpp"
#include "vasg/serialize.hpp"

namespace vasg {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::vector<std::size_t> decoder_widths(std::size_t dim, const std::vector<std::size_t>& hidden,
                                        std::size_t feature_dim) {
    std::vector<std::size_t> widths{dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(feature_dim);
    return widths;
}

std::filesystem::path sibling(const std::filesystem::path& manifest, const std::string& suffix) {
    return manifest.parent_path() / (manifest.stem().string() + suffix);
}

json read_manifest(const std::filesystem::path& manifest) {
    if (!std::filesystem::exists(manifest)) throw InputError("manifest not found: " + manifest.string());
    try {
        return json::parse(read_text(manifest));
    } catch (const json::exception& e) {
        throw InputError("malformed manifest " + manifest.string() + ": " + e.what());
    }
}

std::vector<double> read_blob(const std::filesystem::path& manifest, const json& entry) {
    const auto file = manifest.parent_path() / entry.at("file").get<std::string>();
    const auto count = entry.at("count").get<std::size_t>();
    auto values = decode_f32le(read_bytes(file));
    if (values.size() != count)
        throw InputError("blob " + file.string() + " holds " + std::to_string(values.size()) +
                         " values, manifest declares " + std::to_string(count));
    return values;
}

const json& find_blob(const json& manifest, const std::string& name) {
    for (const auto& entry : manifest.at("blobs"))
        if (entry.at("name") == name) return entry;
    throw InputError("manifest has no blob named " + name);
}

}  // namespace

void TrainConfig::validate() const {
    if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
    if (negative_power < 0.0) throw std::invalid_argument("negative sampling power must be non-negative");
    if (l2 < 0.0) throw std::invalid_argument("l2 penalty must be non-negative");
    for (auto w : decoder_hidden)
        if (w == 0) throw std::invalid_argument("decoder widths must be positive");
    corpus.validate();
}

json to_json(const TrainConfig& cfg) {
    return {{"dim", cfg.dim},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"dropout", cfg.dropout},
            {"decoder_hidden", cfg.decoder_hidden},
            {"negatives", cfg.negatives},
            {"negative_power", cfg.negative_power},
            {"l2", cfg.l2},
            {"use_decoder", cfg.use_decoder},
            {"reuse_corpus", cfg.reuse_corpus},
            {"walks_per_node", cfg.corpus.walks_per_node},
            {"walk_length", cfg.corpus.walk_length},
            {"window", cfg.corpus.window},
            {"seed", cfg.seed},
            {"async_workers", cfg.async_workers}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.dim = j.at("dim").get<std::size_t>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.lr = j.at("lr").get<double>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    cfg.negatives = j.at("negatives").get<std::size_t>();
    cfg.negative_power = j.value("negative_power", 0.75);
    cfg.l2 = j.at("l2").get<double>();
    cfg.use_decoder = j.at("use_decoder").get<bool>();
    cfg.reuse_corpus = j.at("reuse_corpus").get<bool>();
    cfg.corpus.walks_per_node = j.at("walks_per_node").get<std::size_t>();
    cfg.corpus.walk_length = j.at("walk_length").get<std::size_t>();
    cfg.corpus.window = j.at("window").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.async_workers = j.value("async_workers", 0u);
    return cfg;
}

VasgModel VasgModel::init(const Hin& hin, std::size_t feature_dim, const TrainConfig& cfg) {
    cfg.validate();
    if (feature_dim == 0) throw std::invalid_argument("feature dimension must be positive");
    VasgModel model;
    model.dim = cfg.dim;
    model.feature_dim = feature_dim;
    model.users = hin.user_ids();
    model.products = hin.product_ids();
    model.config = cfg;

    Rng rng(derive_seed(cfg.seed, "init"));
    const double range = 0.5 / static_cast<double>(cfg.dim);
    model.embeddings.resize(static_cast<Eigen::Index>(cfg.dim), static_cast<Eigen::Index>(hin.num_nodes()));
    for (Eigen::Index i = 0; i < model.embeddings.size(); ++i)
        model.embeddings.data()[i] = rng.uniform(-range, range);
    model.decoder = nn::Mlp::glorot(decoder_widths(cfg.dim, cfg.decoder_hidden, feature_dim), cfg.dropout, rng);
    return model;
}

Eigen::VectorXd VasgModel::user_vector(const std::string& id) const {
    auto i = users.find(id);
    if (!i) throw QueryError("unknown user " + id);
    return vec({NodeType::User, static_cast<std::uint32_t>(*i)});
}

Eigen::VectorXd VasgModel::product_vector(const std::string& id) const {
    auto i = products.find(id);
    if (!i) throw QueryError("unknown product " + id);
    return vec({NodeType::Product, static_cast<std::uint32_t>(*i)});
}

Eigen::MatrixXd VasgModel::product_matrix() const {
    return embeddings.rightCols(static_cast<Eigen::Index>(products.size()));
}

PairLoss skipgram_pair_loss(const Eigen::Ref<const Eigen::VectorXd>& center,
                            const Eigen::Ref<const Eigen::VectorXd>& context) {
    const double dot = center.dot(context);
    const double coef = -(1.0 - nn::sigmoid(dot));
    return {-nn::log_sigmoid(dot), coef * context, coef * center};
}

PairLoss user_step_loss(const VasgModel& model, Node center, Node context) {
    if (center.type != NodeType::User) throw std::invalid_argument("user_step_loss: centre must be a user");
    return skipgram_pair_loss(model.vec(center), model.vec(context));
}

ProductStepLoss product_step_loss(const VasgModel& model, Node center, Node context,
                                  std::span<const double> features, Rng& rng) {
    if (center.type != NodeType::Product)
        throw std::invalid_argument("product_step_loss: centre must be a product");
    if (features.size() != model.feature_dim)
        throw InputError("feature row has length " + std::to_string(features.size()) + ", expected " +
                         std::to_string(model.feature_dim));
    const auto sg = skipgram_pair_loss(model.vec(center), model.vec(context));
    const double w1 = model.weights.w1();
    const double w2 = model.weights.w2();

    auto [out, tape] = nn::mlp_forward(model.decoder, Eigen::VectorXd(model.vec(center)), nn::Mode::Train, &rng);
    const Eigen::Map<const Eigen::VectorXd> target(features.data(), static_cast<Eigen::Index>(features.size()));
    const double rec = nn::mse({out.data(), static_cast<std::size_t>(out.size())}, features);
    const Eigen::MatrixXd grad_out = (2.0 * w2 / static_cast<double>(features.size())) * (out - target);

    ProductStepLoss result;
    result.skipgram = sg.loss;
    result.reconstruction = rec;
    result.total = w1 * sg.loss + w2 * rec + model.weights.s1 + model.weights.s2;
    result.grad_decoder.assign(model.decoder.num_params(), 0.0);
    const Eigen::MatrixXd grad_in = nn::mlp_backward(model.decoder, tape, grad_out, result.grad_decoder);
    result.grad_center = w1 * sg.grad_center + grad_in.col(0);
    result.grad_context = w1 * sg.grad_context;
    result.grad_s1 = 1.0 - w1 * sg.loss;
    result.grad_s2 = 1.0 - w2 * rec;
    return result;
}

std::string decoder_checksum(const nn::Mlp& decoder) { return fnv1a_hex(encode_f32le(decoder.params())); }

void save_model(const std::filesystem::path& manifest, const VasgModel& model, const json& extra) {
    const auto emb_path = sibling(manifest, ".embeddings.bin");
    const auto dec_path = sibling(manifest, ".decoder.bin");
    const auto emb_bytes = encode_f32le({model.embeddings.data(), static_cast<std::size_t>(model.embeddings.size())});
    const auto dec_bytes = encode_f32le(model.decoder.params());

    json j = extra.is_object() ? extra : json::object();
    j["format_version"] = kFormatVersion;
    j["role"] = "vasg";
    j["dim"] = model.dim;
    j["feature_dim"] = model.feature_dim;
    j["decoder_widths"] = model.decoder.widths();
    j["decoder_dropout"] = model.decoder.dropout();
    j["s1"] = model.weights.s1;
    j["s2"] = model.weights.s2;
    j["config"] = to_json(model.config);
    j["user_ids"] = model.users.ids();
    j["product_ids"] = model.products.ids();
    j["decoder_checksum"] = fnv1a_hex(dec_bytes);
    j["blobs"] = json::array({
        {{"name", "embeddings"}, {"file", emb_path.filename().string()}, {"count", model.embeddings.size()},
         {"layout", "column per node, users then products"}},
        {{"name", "decoder"}, {"file", dec_path.filename().string()}, {"count", model.decoder.num_params()},
         {"layout", "per layer: column-major weights then bias"}},
    });
    write_bytes(emb_path, emb_bytes);
    write_bytes(dec_path, dec_bytes);
    write_text(manifest, j.dump(2) + "\n");
}

VasgModel load_model(const std::filesystem::path& manifest) {
    const json j = read_manifest(manifest);
    VasgModel model;
    try {
        if (j.at("role") != "vasg") throw InputError(manifest.string() + " is not a VASG model manifest");
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw InputError("unsupported model format version in " + manifest.string());
        model.dim = j.at("dim").get<std::size_t>();
        model.feature_dim = j.at("feature_dim").get<std::size_t>();
        model.weights.s1 = j.at("s1").get<double>();
        model.weights.s2 = j.at("s2").get<double>();
        model.config = train_config_from_json(j.at("config"));
        for (const auto& id : j.at("user_ids")) model.users.intern(id.get<std::string>());
        for (const auto& id : j.at("product_ids")) model.products.intern(id.get<std::string>());
        model.decoder = nn::Mlp(j.at("decoder_widths").get<std::vector<std::size_t>>(),
                                j.at("decoder_dropout").get<double>());

        const auto emb = read_blob(manifest, find_blob(j, "embeddings"));
        const auto nodes = model.users.size() + model.products.size();
        if (emb.size() != nodes * model.dim) throw InputError("embedding blob size does not match the id lists");
        model.embeddings = Eigen::Map<const Eigen::MatrixXd>(emb.data(), static_cast<Eigen::Index>(model.dim),
                                                             static_cast<Eigen::Index>(nodes));
        const auto dec = read_blob(manifest, find_blob(j, "decoder"));
        if (dec.size() != model.decoder.num_params()) throw InputError("decoder blob size does not match its widths");
        std::copy(dec.begin(), dec.end(), model.decoder.params().begin());
    } catch (const json::exception& e) {
        throw InputError("malformed model manifest " + manifest.string() + ": " + e.what());
    }
    return model;
}

void save_mlp(const std::filesystem::path& manifest, const nn::Mlp& mlp, const std::string& role, const json& extra) {
    const auto blob = sibling(manifest, ".params.bin");
    json j = extra.is_object() ? extra : json::object();
    j["format_version"] = kFormatVersion;
    j["role"] = role;
    j["widths"] = mlp.widths();
    j["dropout"] = mlp.dropout();
    j["blobs"] = json::array({{{"name", "params"}, {"file", blob.filename().string()}, {"count", mlp.num_params()},
                               {"layout", "per layer: column-major weights then bias"}}});
    write_bytes(blob, encode_f32le(mlp.params()));
    write_text(manifest, j.dump(2) + "\n");
}

nn::Mlp load_mlp(const std::filesystem::path& manifest, const std::string& role, json* manifest_out) {
    const json j = read_manifest(manifest);
    try {
        if (j.at("role") != role) throw InputError(manifest.string() + " does not hold a " + role);
        nn::Mlp mlp(j.at("widths").get<std::vector<std::size_t>>(), j.at("dropout").get<double>());
        const auto values = read_blob(manifest, find_blob(j, "params"));
        if (values.size() != mlp.num_params()) throw InputError("parameter blob size does not match widths");
        std::copy(values.begin(), values.end(), mlp.params().begin());
        if (manifest_out) *manifest_out = j;
        return mlp;
    } catch (const json::exception& e) {
        throw InputError("malformed manifest " + manifest.string() + ": " + e.what());
    }
}

}  // namespace vasg
