#pragma once

#include <cstdint>
#include <random>

namespace copfrail {

// Deterministic random stream. All distribution draws are implemented on top
// of uniform01() so the draw sequence is fixed by the seed alone, independent
// of standard-library internals and of how work is split across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix(seed)) {}

    // Independent child stream, e.g. one per subject or per replicate.
    static Rng stream(std::uint64_t master_seed, std::uint64_t index) {
        return Rng(mix(master_seed) ^ mix(index + 0x9e3779b97f4a7c15ULL));
    }

    // Strictly inside (0,1); safe for log() and quantile transforms.
    double uniform01() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal();                          // standard normal
    double exponential(double rate) { return -std::log(uniform01()) / rate; }
    double gamma(double shape, double scale); // Marsaglia-Tsang
    bool bernoulli(double p) { return uniform01() < p; }

    std::uint64_t raw() { return gen_(); }

private:
    // splitmix64 finalizer; decorrelates consecutive seeds.
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 gen_;
};

}  // namespace copfrail
