#pragma once

#include <cstdint>
#include <random>

namespace hybridlm {

/// Deterministic generator used for every weight and synthetic input in the
/// project. Backed by std::mt19937_64, whose output sequence is fully
/// specified by the standard, with a fixed 53-bit mapping to doubles, so the
/// same seed reproduces the same values bit-for-bit on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Simple modulo; the tiny bias is irrelevant
    /// for synthetic-data purposes and keeps the draw count predictable.
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

private:
    std::mt19937_64 gen_;
};

}  // namespace hybridlm
