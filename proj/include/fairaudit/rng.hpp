#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fairaudit {

// Deterministic random source. std::mt19937_64 output is fixed by the
// standard; the distribution helpers below are hand-rolled because the
// standard library distributions are implementation-defined and would
// break bit-reproducibility of generated cohorts and protocols.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % bound;
    }

    std::size_t index(std::size_t bound) { return static_cast<std::size_t>(next_below(bound)); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one value per call keeps the stream
    // layout independent of call pairing.
    double normal() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Root of a seed tree: every consumer derives its stream from (root, label)
// via splitmix64 mixing, so adding a stage never shifts another stage's
// randomness and substreams stay decorrelated for adjacent labels.
class RngFactory {
public:
    explicit RngFactory(std::uint64_t root_seed) : root_(root_seed) {}

    std::uint64_t derive(std::uint64_t label) const {
        std::uint64_t z = root_ + label * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    Rng stream(std::uint64_t label) const { return Rng(derive(label)); }

    RngFactory child(std::uint64_t label) const { return RngFactory(derive(label)); }

private:
    std::uint64_t root_;
};

} // namespace fairaudit
