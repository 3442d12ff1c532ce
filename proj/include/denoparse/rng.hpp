#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace denoparse {

// Deterministic random source. mt19937_64's raw output is pinned by the
// standard, but std::uniform_*_distribution and std::shuffle are not, so the
// mappings below are done by hand to keep runs reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Uniform in {0, ..., n-1}, unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t x = next();
            if (x >= threshold) return x % n;
        }
    }

    // Fisher-Yates with our own index draws (std::shuffle is
    // implementation-defined).
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace denoparse
