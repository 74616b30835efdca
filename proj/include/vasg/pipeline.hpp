#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "vasg/data.hpp"
#include "vasg/eval.hpp"
#include "vasg/mapper.hpp"
#include "vasg/model.hpp"

namespace vasg {

struct EvalConfig {
    std::size_t auc_negatives = 500;
    CandidatePool pool = CandidatePool::SameSubset;
    std::size_t relation_cap = 10000;
    std::optional<double> threshold;  // empty = tuned
    std::size_t similarity_pairs = 100000;
    std::size_t pca_components = 2;
    std::size_t analogy_queries = 1000;
    std::size_t analogy_k = 5;
};

struct PipelineConfig {
    std::filesystem::path interactions;
    std::filesystem::path features;
    std::filesystem::path out = "vasg_out";
    std::size_t min_history = 5;
    bool filter_iterate = false;
    SplitOptions split;
    TrainConfig train;
    MapperConfig mapper;
    EvalConfig eval;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    /// Module seeds: derive_seed(seed, "<module>").
    std::uint64_t module_seed(const char* module) const;
};

/// Reads a sectioned key = value file. Unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);

/// Effective configuration, echoed into every artifact.
nlohmann::json to_json(const PipelineConfig& cfg);

/// Filters, splits and writes split.json, stats.json and hin.json.
void cmd_prepare(const PipelineConfig& cfg);
/// Trains on the prepared split; writes model.json (+ blobs) and train_loss.csv.
void cmd_train(const PipelineConfig& cfg, std::ostream* log = nullptr);
/// Trains the encoder against the frozen decoder; writes encoder.json and
/// mapper_loss.csv.
void cmd_map(const PipelineConfig& cfg, std::ostream* log = nullptr);
/// Writes report.json, similarity_hist.csv and pca.csv; returns the report.
nlohmann::json cmd_evaluate(const PipelineConfig& cfg, std::ostream* log = nullptr);

struct RecommendRequest {
    std::string user;
    std::size_t k = 10;
    /// p1, u1, u2; recommends for u2 when set.
    std::optional<std::array<std::string, 3>> analogy;
    /// Drop products the user bought in training.
    bool exclude_seen = false;
};

/// CSV rows to out. Unknown ids raise QueryError.
void cmd_recommend(const PipelineConfig& cfg, const RecommendRequest& request, std::ostream& out);

}  // namespace vasg
