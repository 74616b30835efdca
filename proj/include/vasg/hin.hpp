#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vasg/data.hpp"
#include "vasg/rng.hpp"

namespace vasg {

enum class NodeType : std::uint8_t { User, Product };

struct Node {
    NodeType type = NodeType::User;
    std::uint32_t index = 0;

    friend bool operator==(const Node&, const Node&) = default;
    friend auto operator<=>(const Node&, const Node&) = default;
};

/// Bipartite user-product graph over the training interactions. Nodes are
/// numbered globally as users [0, U) followed by products [U, U + P).
class Hin {
public:
    /// Throws InputError on an empty training set.
    static Hin build(const InteractionSet& train);

    std::size_t num_users() const { return user_adj_.size(); }
    std::size_t num_products() const { return product_adj_.size(); }
    std::size_t num_nodes() const { return num_users() + num_products(); }
    std::size_t num_edges() const { return num_edges_; }
    /// Nodes without edges; they are never used as walk starts.
    std::size_t isolated() const { return isolated_; }

    const std::vector<std::uint32_t>& neighbours(Node v) const {
        return v.type == NodeType::User ? user_adj_[v.index] : product_adj_[v.index];
    }
    const std::vector<std::uint32_t>& user_adj(std::size_t u) const { return user_adj_[u]; }
    const std::vector<std::uint32_t>& product_adj(std::size_t p) const { return product_adj_[p]; }

    std::size_t global(Node v) const {
        return v.type == NodeType::User ? v.index : num_users() + v.index;
    }
    Node node(std::size_t global_id) const;

    /// Non-isolated nodes in global order.
    const std::vector<Node>& start_nodes() const { return starts_; }

    const IdIndex& user_ids() const { return users_; }
    const IdIndex& product_ids() const { return products_; }

    /// `u:<id>` or `p:<id>`.
    std::string token(Node v) const;

private:
    std::vector<std::vector<std::uint32_t>> user_adj_;
    std::vector<std::vector<std::uint32_t>> product_adj_;
    std::vector<Node> starts_;
    IdIndex users_;
    IdIndex products_;
    std::size_t num_edges_ = 0;
    std::size_t isolated_ = 0;
};

using Walk = std::vector<Node>;

/// Uniform random walk of exactly `length` nodes starting at `start`.
Walk random_walk(const Hin& hin, Node start, std::size_t length, Rng& rng);

struct CorpusConfig {
    std::size_t walks_per_node = 10;
    std::size_t walk_length = 15;
    std::size_t window = 7;  // full width, centre inclusive
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

/// Streamed random-walk corpus. Walk i belongs to round i / |starts| and its
/// start node is a per-round permutation of start_nodes(); every walk has its
/// own RNG stream keyed by (seed, start, round), so any walk can be
/// regenerated independently and in parallel.
class Corpus {
public:
    Corpus(const Hin& hin, CorpusConfig cfg);

    std::size_t size() const { return cfg_.walks_per_node * hin_->start_nodes().size(); }
    const CorpusConfig& config() const { return cfg_; }
    const Hin& hin() const { return *hin_; }

    Walk walk(std::size_t i) const;

    void for_each(const std::function<void(const Walk&)>& fn) const;

    /// All walks in corpus order, generated on `threads` workers.
    std::vector<Walk> materialize(unsigned threads = 1) const;
    /// Walks [begin, end) in corpus order.
    std::vector<Walk> materialize(std::size_t begin, std::size_t end, unsigned threads = 1) const;

    /// One walk per line, space-separated typed tokens.
    void dump(const std::filesystem::path& path, unsigned threads = 1) const;

private:
    const Hin* hin_;
    CorpusConfig cfg_;
    std::vector<std::vector<std::uint32_t>> order_;  // per-round start permutation
};

Corpus generate_corpus(const Hin& hin, const CorpusConfig& cfg);

using ContextPair = std::pair<Node, Node>;  // (centre, context)

/// Pairs (w[i], w[j]) with 0 < |i - j| <= (window - 1) / 2, in order of i
/// then j.
std::vector<ContextPair> context_pairs(const Walk& walk, std::size_t window);

}  // namespace vasg
