#pragma once

#include <cstdint>
#include <random>

namespace driftgce {

/// Portable seeded generator.
///
/// The raw stream is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniform and normal variates are derived here rather than
/// through std::*_distribution (whose algorithms are implementation-defined):
///   uniform() = (next() >> 11) * 2^-53            in [0, 1)
///   normal()  = Box-Muller on u1 = 1 - uniform(), u2 = uniform();
///               returns r*cos(2*pi*u2), then the cached r*sin(2*pi*u2).
///   index(n)  = floor(uniform() * n)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();
    double normal();
    std::size_t index(std::size_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer over (seed, stream); used to give independent
/// streams to the pre/post windows and to per-stage generators.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace driftgce
