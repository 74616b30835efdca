#include "vasg/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>
#include <unordered_map>

#include "vasg/error.hpp"

namespace vasg {

NegativeSampler::NegativeSampler(std::span<const double> counts) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (double c : counts) {
        if (c < 0.0) throw std::invalid_argument("negative sampling counts must be non-negative");
        total += c;
        cumulative_.push_back(total);
    }
}

NegativeSampler NegativeSampler::from_corpus(const Corpus& corpus, const VasgModel& model, double power) {
    std::vector<double> counts(model.num_nodes(), 0.0);
    corpus.for_each([&](const Walk& w) {
        for (const Node& v : w) counts[model.column(v)] += 1.0;
    });
    if (power != 1.0)
        for (auto& c : counts) c = c > 0.0 ? std::pow(c, power) : 0.0;
    return NegativeSampler(counts);
}

std::vector<std::size_t> NegativeSampler::sample(Rng& rng, std::size_t k, std::span<const std::size_t> exclude) const {
    std::vector<std::size_t> out;
    if (k == 0) return out;
    if (empty()) throw std::logic_error("negative sampler has no mass");
    std::vector<std::size_t> distinct(exclude.begin(), exclude.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double excluded = 0.0;
    for (std::size_t e : distinct)
        if (e < cumulative_.size()) excluded += cumulative_[e] - (e ? cumulative_[e - 1] : 0.0);
    if (excluded >= cumulative_.back()) throw std::logic_error("every node is excluded from negative sampling");
    out.reserve(k);
    while (out.size() < k) {
        const double target = rng.uniform() * cumulative_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
        const auto pick = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                                          static_cast<std::ptrdiff_t>(size() - 1)));
        if (std::find(exclude.begin(), exclude.end(), pick) != exclude.end()) continue;
        out.push_back(pick);
    }
    return out;
}

Trainer::Trainer(VasgModel& model, const Hin& hin, const FeatureMatrix& features)
    : model_(model), hin_(hin), features_(features) {
    model_.config.validate();
    if (model_.users.size() != hin.num_users() || model_.products.size() != hin.num_products())
        throw std::invalid_argument("model node set does not match the graph");
    if (model_.config.use_decoder) {
        if (features.dim != model_.feature_dim)
            throw InputError("feature dimension " + std::to_string(features.dim) + " does not match decoder output " +
                             std::to_string(model_.feature_dim));
        std::vector<std::string> missing;
        for (const auto& id : model_.products.ids()) {
            auto row = features.ids.find(id);
            if (!row) {
                missing.push_back(id);
                continue;
            }
            feature_row_.push_back(*row);
        }
        if (!missing.empty())
            throw InputError(std::to_string(missing.size()) + " warm products lack feature rows, e.g. " + missing.front());
    }
    nn::AdamConfig adam;
    adam.lr = model_.config.lr;
    embedding_state_ = nn::AdamState(static_cast<std::size_t>(model_.embeddings.size()), adam);
    decoder_state_ = nn::AdamState(model_.decoder.num_params(), adam);
    weight_state_ = nn::AdamState(2, adam);
}

Trainer::Gradients Trainer::compute(std::span<const ContextPair> batch, Rng& rng,
                                    const NegativeSampler* negatives) const {
    Gradients out;
    if (batch.empty()) return out;
    const NodeType centre_type = batch.front().first.type;
    for (const auto& pair : batch)
        if (pair.first.type != centre_type) throw std::invalid_argument("batch mixes user and product centres");

    const auto& cfg = model_.config;
    const std::size_t dim = model_.dim;
    const bool product = centre_type == NodeType::Product && cfg.use_decoder;
    const double inv = 1.0 / static_cast<double>(batch.size());
    const double w1 = product ? model_.weights.w1() : 1.0;
    const double w2 = model_.weights.w2();
    out.product_batch = product;

    std::unordered_map<std::size_t, std::size_t> slot;  // column -> index into rows
    auto grad_of = [&](std::size_t column) -> Eigen::Map<Eigen::VectorXd> {
        auto [it, inserted] = slot.try_emplace(column, out.rows.size());
        if (inserted) {
            out.rows.push_back(column);
            out.row_grads.resize(out.row_grads.size() + dim, 0.0);
        }
        return {out.row_grads.data() + it->second * dim, static_cast<Eigen::Index>(dim)};
    };

    double sum_sg = 0.0;
    double penalty = 0.0;
    std::vector<std::size_t> exclude(2);
    for (const auto& [centre, context] : batch) {
        const std::size_t cc = model_.column(centre);
        const std::size_t xc = model_.column(context);
        const auto xv = model_.vec(centre);
        const auto xx = model_.vec(context);
        const double dot = xv.dot(xx);
        sum_sg += -nn::log_sigmoid(dot);
        const double coef = -(1.0 - nn::sigmoid(dot)) * w1 * inv;
        grad_of(cc) += coef * xx;
        grad_of(xc) += coef * xv;
        if (negatives && cfg.negatives > 0) {
            exclude[0] = cc;
            exclude[1] = xc;
            for (std::size_t n : negatives->sample(rng, cfg.negatives, exclude)) {
                const auto xn = model_.embeddings.col(static_cast<Eigen::Index>(n));
                const double d = xn.dot(xv);
                sum_sg += nn::softplus(d);
                const double ncoef = nn::sigmoid(d) * w1 * inv;
                grad_of(cc) += ncoef * xn;
                grad_of(n) += ncoef * xv;
            }
        }
        if (cfg.l2 > 0.0) {
            penalty += cfg.l2 * (xv.squaredNorm() + xx.squaredNorm());
            grad_of(cc) += (2.0 * cfg.l2 * inv) * xv;
            grad_of(xc) += (2.0 * cfg.l2 * inv) * xx;
        }
    }
    out.outcome.pairs = batch.size();
    out.outcome.sum_skipgram = sum_sg;

    if (!product) {
        out.outcome.loss = (sum_sg + penalty) * inv;
        return out;
    }

    // Reconstruction runs once per distinct centre, weighted by how many pairs
    // share it.
    std::vector<std::size_t> centres;
    std::vector<double> multiplicity;
    {
        std::unordered_map<std::uint32_t, std::size_t> seen;
        for (const auto& pair : batch) {
            auto [it, inserted] = seen.try_emplace(pair.first.index, centres.size());
            if (inserted) {
                centres.push_back(pair.first.index);
                multiplicity.push_back(0.0);
            }
            multiplicity[it->second] += 1.0;
        }
    }
    const auto k = static_cast<Eigen::Index>(centres.size());
    const auto feat = static_cast<Eigen::Index>(model_.feature_dim);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), k);
    Eigen::MatrixXd target(feat, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Node p{NodeType::Product, static_cast<std::uint32_t>(centres[static_cast<std::size_t>(i)])};
        x.col(i) = model_.vec(p);
        target.col(i) = features_.row(feature_row_[p.index]);
    }
    nn::MlpTape tape;
    const Eigen::MatrixXd recon = nn::mlp_forward(model_.decoder, x, nn::Mode::Train, &rng, &tape);
    Eigen::MatrixXd grad_out = recon - target;
    double sum_mse = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double count = multiplicity[static_cast<std::size_t>(i)];
        sum_mse += count * grad_out.col(i).squaredNorm() / static_cast<double>(feat);
        grad_out.col(i) *= 2.0 * w2 * count * inv / static_cast<double>(feat);
    }
    out.decoder.assign(model_.decoder.num_params(), 0.0);
    const Eigen::MatrixXd grad_in = nn::mlp_backward(model_.decoder, tape, grad_out, out.decoder);
    for (Eigen::Index i = 0; i < k; ++i)
        grad_of(model_.column({NodeType::Product, static_cast<std::uint32_t>(centres[static_cast<std::size_t>(i)])})) +=
            grad_in.col(i);

    const double mean_sg = sum_sg * inv;
    const double mean_mse = sum_mse * inv;
    out.s1 = 1.0 - w1 * mean_sg;
    out.s2 = 1.0 - w2 * mean_mse;
    out.outcome.sum_reconstruction = sum_mse;
    out.outcome.loss = w1 * mean_sg + w2 * mean_mse + model_.weights.s1 + model_.weights.s2 + penalty * inv;
    return out;
}

void Trainer::apply(const Gradients& grads) {
    if (grads.rows.empty()) return;
    nn::adam_step_rows(embedding_state_, {model_.embeddings.data(), static_cast<std::size_t>(model_.embeddings.size())},
                       model_.dim, grads.rows, grads.row_grads);
    if (!grads.product_batch) return;
    nn::adam_step(decoder_state_, model_.decoder.params(), grads.decoder);
    std::array<double, 2> s{model_.weights.s1, model_.weights.s2};
    const std::array<double, 2> g{grads.s1, grads.s2};
    nn::adam_step(weight_state_, s, g);
    model_.weights.s1 = s[0];
    model_.weights.s2 = s[1];
}

BatchOutcome Trainer::step(std::span<const ContextPair> batch, Rng& rng, const NegativeSampler* negatives) {
    auto grads = compute(batch, rng, negatives);
    if (!std::isfinite(grads.outcome.loss)) throw NumericError("non-finite batch loss");
    apply(grads);
    return grads.outcome;
}

namespace {

constexpr std::size_t kWalkChunk = 2048;

CorpusConfig epoch_corpus(const TrainConfig& cfg, std::size_t epoch) {
    CorpusConfig c = cfg.corpus;
    c.seed = derive_seed(derive_seed(cfg.seed, "corpus"), cfg.reuse_corpus ? 0 : epoch);
    return c;
}

/// Streams an epoch's context pairs into homogeneous batches, handing each
/// full batch (and the final partial ones, users first) to `sink`.
template <typename Sink>
void stream_batches(const Corpus& corpus, const TrainConfig& cfg, Sink&& sink) {
    std::array<std::vector<ContextPair>, 2> pending;
    for (auto& p : pending) p.reserve(cfg.batch_size);
    for (std::size_t begin = 0; begin < corpus.size(); begin += kWalkChunk) {
        for (const auto& walk : corpus.materialize(begin, begin + kWalkChunk, cfg.threads)) {
            for (const auto& pair : context_pairs(walk, cfg.corpus.window)) {
                auto& bucket = pending[pair.first.type == NodeType::User ? 0 : 1];
                bucket.push_back(pair);
                if (bucket.size() == cfg.batch_size) {
                    sink(bucket);
                    bucket.clear();
                }
            }
        }
    }
    for (auto& bucket : pending)
        if (!bucket.empty()) sink(bucket);
}

struct EpochAccumulator {
    double sum_sg = 0.0;
    double sum_mse = 0.0;
    std::size_t user_pairs = 0;
    std::size_t product_pairs = 0;
    std::size_t batches = 0;

    void add(NodeType centre, const BatchOutcome& o) {
        sum_sg += o.sum_skipgram;
        sum_mse += o.sum_reconstruction;
        (centre == NodeType::User ? user_pairs : product_pairs) += o.pairs;
        ++batches;
    }

    EpochStats finish(std::size_t epoch, const VasgModel& model) const {
        EpochStats s;
        s.epoch = epoch;
        const auto pairs = user_pairs + product_pairs;
        s.skipgram = pairs ? sum_sg / static_cast<double>(pairs) : 0.0;
        s.reconstruction = product_pairs && model.config.use_decoder ? sum_mse / static_cast<double>(product_pairs) : 0.0;
        s.w1 = model.weights.w1();
        s.w2 = model.weights.w2();
        s.user_pairs = user_pairs;
        s.product_pairs = product_pairs;
        s.batches = batches;
        return s;
    }
};

std::string describe(std::size_t epoch, std::size_t batch, NodeType type) {
    return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + " (" +
           (type == NodeType::User ? "user" : "product") + " centres)";
}

}  // namespace

std::vector<EpochStats> Trainer::run(const std::function<void(const EpochStats&)>& on_epoch) {
    if (model_.config.async_workers > 1) return run_async(on_epoch);
    const auto& cfg = model_.config;
    const std::uint64_t batch_seed = derive_seed(cfg.seed, "batches");
    std::vector<EpochStats> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Corpus corpus(hin_, epoch_corpus(cfg, epoch));
        std::optional<NegativeSampler> sampler;
        if (cfg.negatives > 0) sampler = NegativeSampler::from_corpus(corpus, model_, cfg.negative_power);
        EpochAccumulator acc;
        stream_batches(corpus, cfg, [&](const std::vector<ContextPair>& batch) {
            const NodeType type = batch.front().first.type;
            Rng rng(derive_seed(batch_seed, epoch, acc.batches));
            auto grads = compute(batch, rng, sampler ? &*sampler : nullptr);
            if (!std::isfinite(grads.outcome.loss))
                throw NumericError("non-finite loss at " + describe(epoch, acc.batches, type));
            try {
                apply(grads);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at " + describe(epoch, acc.batches, type));
            }
            acc.add(type, grads.outcome);
        });
        history.push_back(acc.finish(epoch, model_));
        if (on_epoch) on_epoch(history.back());
    }
    return history;
}

// Workers compute gradients concurrently against the live parameters and
// apply them one at a time; the order of application is not fixed.
std::vector<EpochStats> Trainer::run_async(const std::function<void(const EpochStats&)>& on_epoch) {
    const auto& cfg = model_.config;
    const std::uint64_t batch_seed = derive_seed(cfg.seed, "batches");
    std::vector<EpochStats> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Corpus corpus(hin_, epoch_corpus(cfg, epoch));
        std::optional<NegativeSampler> sampler;
        if (cfg.negatives > 0) sampler = NegativeSampler::from_corpus(corpus, model_, cfg.negative_power);

        std::shared_mutex params;
        std::mutex queue_mutex;
        std::condition_variable ready;
        std::condition_variable space;
        std::deque<std::pair<std::size_t, std::vector<ContextPair>>> queue;
        bool done = false;
        std::exception_ptr failure;
        EpochAccumulator acc;

        auto worker = [&] {
            while (true) {
                std::pair<std::size_t, std::vector<ContextPair>> job;
                {
                    std::unique_lock lock(queue_mutex);
                    ready.wait(lock, [&] { return done || !queue.empty(); });
                    if (queue.empty()) return;
                    job = std::move(queue.front());
                    queue.pop_front();
                }
                space.notify_one();
                try {
                    const NodeType type = job.second.front().first.type;
                    Rng rng(derive_seed(batch_seed, epoch, job.first));
                    Gradients grads;
                    {
                        std::shared_lock read(params);
                        grads = compute(job.second, rng, sampler ? &*sampler : nullptr);
                    }
                    if (!std::isfinite(grads.outcome.loss))
                        throw NumericError("non-finite loss at " + describe(epoch, job.first, type));
                    std::unique_lock write(params);
                    apply(grads);
                    std::lock_guard qlock(queue_mutex);
                    acc.add(type, grads.outcome);
                } catch (...) {
                    std::lock_guard qlock(queue_mutex);
                    if (!failure) failure = std::current_exception();
                    done = true;
                    ready.notify_all();
                    space.notify_all();
                }
            }
        };

        std::vector<std::thread> pool;
        for (unsigned i = 0; i < cfg.async_workers; ++i) pool.emplace_back(worker);
        std::size_t submitted = 0;
        try {
            stream_batches(corpus, cfg, [&](const std::vector<ContextPair>& batch) {
                std::unique_lock lock(queue_mutex);
                space.wait(lock, [&] { return failure || queue.size() < 2 * cfg.async_workers; });
                if (failure) return;
                queue.emplace_back(submitted++, batch);
                ready.notify_one();
            });
        } catch (...) {
            std::lock_guard lock(queue_mutex);
            if (!failure) failure = std::current_exception();
        }
        {
            std::lock_guard lock(queue_mutex);
            done = true;
        }
        ready.notify_all();
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);

        history.push_back(acc.finish(epoch, model_));
        if (on_epoch) on_epoch(history.back());
    }
    return history;
}

}  // namespace vasg
