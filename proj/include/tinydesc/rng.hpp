#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace tinydesc {

// splitmix64 finalizer; used for seed derivation and stateless lattice hashing.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random source. The engine is std::mt19937_64 (bit-exact by the
// standard); every distribution here is spelled out explicitly so the value
// stream never depends on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Independent sub-generator for stream `stream` of generator `seed`.
    // Used to make per-batch / per-image randomness order-independent.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        return Rng(splitmix64(seed ^ splitmix64(stream + 0x517cc1b727220a95ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1), 53 bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    std::size_t index(std::size_t n) { return std::size_t(below(n)); }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) { return lo + int(below(std::uint64_t(hi - lo + 1))); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (two engine draws per call, no cached spare).
    double normal() {
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace tinydesc
