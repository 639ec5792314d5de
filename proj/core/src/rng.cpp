#include "mm/rng.hpp"

#include <cmath>

namespace mm {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

Rng::Rng(uint64_t seed, std::string_view stream) {
    uint64_t state = seed ^ fnv1a(stream);
    // warm through splitmix so nearby seeds decorrelate
    std::seed_seq seq{splitmix64(state), splitmix64(state), splitmix64(state), splitmix64(state)};
    engine_.seed(seq);
}

uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform(double lo, double hi) {
    // 53-bit mantissa draw, bit-stable across platforms
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller on the deterministic uniform (avoids libstdc++-specific
    // std::normal_distribution state)
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
}

}  // namespace mm
