#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fusionnet {

/// Seeded RNG with fully specified output conversions, so a given seed
/// reproduces the same stream on every platform and stdlib.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0,1), 53 significant bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
    int64_t uniform_int(int64_t n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    /// Standard normal via Box-Muller; second deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream derived from (seed, stream id).
    Rng fork(uint64_t stream) const { return Rng(mix(seed_, stream)); }

    uint64_t seed() const { return seed_; }

    static uint64_t mix(uint64_t a, uint64_t b) {
        // splitmix64 finalization over the combined words
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by Rng::uniform_int.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (int64_t i = static_cast<int64_t>(items.size()) - 1; i > 0; --i) {
        int64_t j = rng.uniform_int(i + 1);
        std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)]);
    }
}

}  // namespace fusionnet
