#include "vasg/hin.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "vasg/error.hpp"

namespace vasg {

Hin Hin::build(const InteractionSet& train) {
    if (train.empty()) throw InputError("cannot build a graph from an empty training set");
    Hin h;
    h.users_ = train.users();
    h.products_ = train.products();
    h.user_adj_.resize(h.users_.size());
    h.product_adj_.resize(h.products_.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto u = static_cast<std::uint32_t>(train.user_of(i));
        const auto p = static_cast<std::uint32_t>(train.product_of(i));
        h.user_adj_[u].push_back(p);
        h.product_adj_[p].push_back(u);
    }
    for (auto& adj : h.user_adj_) std::sort(adj.begin(), adj.end());
    for (auto& adj : h.product_adj_) std::sort(adj.begin(), adj.end());
    h.num_edges_ = train.size();

    for (std::uint32_t u = 0; u < h.user_adj_.size(); ++u) {
        if (h.user_adj_[u].empty())
            ++h.isolated_;
        else
            h.starts_.push_back({NodeType::User, u});
    }
    for (std::uint32_t p = 0; p < h.product_adj_.size(); ++p) {
        if (h.product_adj_[p].empty())
            ++h.isolated_;
        else
            h.starts_.push_back({NodeType::Product, p});
    }
    return h;
}

Node Hin::node(std::size_t global_id) const {
    if (global_id < num_users()) return {NodeType::User, static_cast<std::uint32_t>(global_id)};
    return {NodeType::Product, static_cast<std::uint32_t>(global_id - num_users())};
}

std::string Hin::token(Node v) const {
    return v.type == NodeType::User ? "u:" + users_.id(v.index) : "p:" + products_.id(v.index);
}

Walk random_walk(const Hin& hin, Node start, std::size_t length, Rng& rng) {
    Walk walk;
    walk.reserve(length);
    Node current = start;
    for (std::size_t step = 0; step < length; ++step) {
        walk.push_back(current);
        if (step + 1 == length) break;
        const auto& adj = hin.neighbours(current);
        const auto next = adj[rng.index(adj.size())];
        current = {current.type == NodeType::User ? NodeType::Product : NodeType::User, next};
    }
    return walk;
}

void CorpusConfig::validate() const {
    if (walks_per_node < 1) throw std::invalid_argument("walks per node must be at least 1");
    if (walk_length < 2) throw std::invalid_argument("walk length must be at least 2");
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("window must be odd and at least 3");
}

Corpus::Corpus(const Hin& hin, CorpusConfig cfg) : hin_(&hin), cfg_(cfg) {
    cfg_.validate();
    const auto n = static_cast<std::uint32_t>(hin.start_nodes().size());
    order_.resize(cfg_.walks_per_node);
    for (std::size_t round = 0; round < cfg_.walks_per_node; ++round) {
        auto& perm = order_[round];
        perm.resize(n);
        std::iota(perm.begin(), perm.end(), 0u);
        Rng rng(derive_seed(cfg_.seed, 0x6f72646572ULL, round));
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    }
}

Walk Corpus::walk(std::size_t i) const {
    const std::size_t n = hin_->start_nodes().size();
    const std::size_t round = i / n;
    const Node start = hin_->start_nodes()[order_[round][i % n]];
    Rng rng(derive_seed(cfg_.seed, hin_->global(start), round, 0x77616c6bULL));
    return random_walk(*hin_, start, cfg_.walk_length, rng);
}

void Corpus::for_each(const std::function<void(const Walk&)>& fn) const {
    for (std::size_t i = 0; i < size(); ++i) fn(walk(i));
}

std::vector<Walk> Corpus::materialize(unsigned threads) const { return materialize(0, size(), threads); }

std::vector<Walk> Corpus::materialize(std::size_t begin, std::size_t end, unsigned threads) const {
    end = std::min(end, size());
    if (begin >= end) return {};
    std::vector<Walk> walks(end - begin);
    threads = std::max(1u, threads);
    if (threads == 1 || walks.size() < 2) {
        for (std::size_t i = 0; i < walks.size(); ++i) walks[i] = walk(begin + i);
        return walks;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < walks.size(); i += threads) walks[i] = walk(begin + i);
        });
    }
    for (auto& th : pool) th.join();
    return walks;
}

void Corpus::dump(const std::filesystem::path& path, unsigned threads) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    for (const auto& w : materialize(threads)) {
        for (std::size_t i = 0; i < w.size(); ++i) out << (i ? " " : "") << hin_->token(w[i]);
        out << '\n';
    }
}

Corpus generate_corpus(const Hin& hin, const CorpusConfig& cfg) { return Corpus(hin, cfg); }

std::vector<ContextPair> context_pairs(const Walk& walk, std::size_t window) {
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("window must be odd and at least 3");
    const std::size_t half = (window - 1) / 2;
    std::vector<ContextPair> pairs;
    pairs.reserve(walk.size() * 2 * half);
    for (std::size_t i = 0; i < walk.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + half);
        for (std::size_t j = lo; j <= hi; ++j)
            if (j != i) pairs.emplace_back(walk[i], walk[j]);
    }
    return pairs;
}

}  // namespace vasg
