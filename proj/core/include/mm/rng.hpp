#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mm {

/// Deterministic named sub-stream RNG: one master seed, independent streams
/// keyed by name ("datagen", "init", "batching", ...). Same (seed, name) gives
/// the same sequence on every platform.
class Rng {
public:
    Rng(uint64_t seed, std::string_view stream);

    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);
    int uniform_int(int lo, int hi);  // inclusive bounds
    uint64_t next_u64();

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mm
