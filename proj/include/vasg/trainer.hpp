#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vasg/data.hpp"
#include "vasg/hin.hpp"
#include "vasg/model.hpp"
#include "vasg/nn.hpp"

namespace vasg {

/// Unigram sampler over model columns (node occurrence counts in a corpus).
class NegativeSampler {
public:
    NegativeSampler() = default;
    explicit NegativeSampler(std::span<const double> counts);

    /// Node occurrence counts of the corpus raised to `power`.
    static NegativeSampler from_corpus(const Corpus& corpus, const VasgModel& model, double power = 1.0);

    bool empty() const { return cumulative_.empty() || cumulative_.back() <= 0.0; }
    std::size_t size() const { return cumulative_.size(); }

    /// k columns drawn with probability proportional to their counts, never
    /// returning an excluded column. k = 0 gives an empty result.
    std::vector<std::size_t> sample(Rng& rng, std::size_t k, std::span<const std::size_t> exclude) const;

private:
    std::vector<double> cumulative_;
};

struct EpochStats {
    std::size_t epoch = 0;
    double skipgram = 0.0;        // mean over all pairs
    double reconstruction = 0.0;  // mean over product-centred pairs
    double w1 = 1.0;
    double w2 = 1.0;
    std::size_t user_pairs = 0;
    std::size_t product_pairs = 0;
    std::size_t batches = 0;
};

struct BatchOutcome {
    double loss = 0.0;
    double sum_skipgram = 0.0;
    double sum_reconstruction = 0.0;
    std::size_t pairs = 0;
};

/// Runs the multitask Skip-Gram over context pairs, batching them so that
/// each batch holds only user-centred or only product-centred pairs. User
/// batches update embeddings only; product batches also update the decoder
/// and the task weights.
class Trainer {
public:
    /// Product features must cover every warm product when the decoder is on.
    Trainer(VasgModel& model, const Hin& hin, const FeatureMatrix& features);

    /// Computes gradients for one homogeneous batch and applies Adam.
    BatchOutcome step(std::span<const ContextPair> batch, Rng& rng, const NegativeSampler* negatives = nullptr);

    /// Full training; calls on_epoch after each epoch.
    std::vector<EpochStats> run(const std::function<void(const EpochStats&)>& on_epoch = {});

    struct Gradients {
        bool product_batch = false;
        std::vector<std::size_t> rows;  // touched embedding columns
        std::vector<double> row_grads;  // rows.size() * dim
        std::vector<double> decoder;    // empty for user batches
        double s1 = 0.0;
        double s2 = 0.0;
        BatchOutcome outcome;
    };

    /// Batch loss gradients without applying them.
    Gradients compute(std::span<const ContextPair> batch, Rng& rng, const NegativeSampler* negatives) const;
    void apply(const Gradients& grads);

private:
    std::vector<EpochStats> run_async(const std::function<void(const EpochStats&)>& on_epoch);

    VasgModel& model_;
    const Hin& hin_;
    const FeatureMatrix& features_;
    std::vector<std::size_t> feature_row_;  // per warm product
    nn::AdamState embedding_state_;
    nn::AdamState decoder_state_;
    nn::AdamState weight_state_;
};

inline std::vector<EpochStats> train(VasgModel& model, const Hin& hin, const FeatureMatrix& features,
                                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
    return Trainer(model, hin, features).run(on_epoch);
}

}  // namespace vasg
