#pragma once
// tissue/rng.hpp: the single seeded random stream an engine run consumes.
// Interactions in the framework are stochastic; determinism comes from one
// stream drawn in a fixed order (cells in permutation order, receptors in
// index order). The generator is pinned: mt19937_64 plus the reductions
// below, so identical seed + identical input events = identical transcript.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace tissue {

class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, bound). Lemire multiply-shift reduction; the bias at
    // 64 bits is far below anything observable here.
    std::size_t index(std::size_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(gen_()) * bound;
        return static_cast<std::size_t>(m >> 64);
    }

    // Uniform antigen value in [0, universe).
    std::uint32_t lock_value(std::uint32_t universe) {
        return static_cast<std::uint32_t>(index(universe));
    }

    // Uniform in [0, 1).
    double real01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double real(double lo, double hi) { return lo + (hi - lo) * real01(); }

    // Knuth's product method, split so the exponential never underflows.
    std::uint64_t poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 500.0) {
            total += poisson_small(500.0);
            mean -= 500.0;
        }
        if (mean > 0.0) total += poisson_small(mean);
        return total;
    }

    // Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = index(i);
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

  private:
    std::uint64_t poisson_small(double mean) {
        const double limit = std::exp(-mean);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            ++k;
            p *= real01();
        } while (p > limit);
        return k - 1;
    }

    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace tissue
