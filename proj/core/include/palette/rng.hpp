#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace palette {

/// Seeded random source. All draws go through explicit transforms of the
/// mt19937_64 stream (no std::*_distribution), so equal seeds give equal
/// sequences at equal draw order on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n >= 1.
    int below(int n);

    // Gaussian via Box-Muller; two uniforms per draw, nothing cached.
    double normal(double mean = 0.0, double stddev = 1.0);

    void fill_normal(std::vector<double>& out, double mean, double stddev);

    // Independent stream derived from a base seed and a stream index.
    static Rng derive(std::uint64_t base_seed, std::uint64_t stream);

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace palette
