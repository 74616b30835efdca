#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vasg {

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a string key
/// (module names such as "split" or "corpus").
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

/// Derives a stream seed from a base seed and up to three integer keys.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// mt19937_64 with hand-rolled distributions, so draws are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t index(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace vasg
