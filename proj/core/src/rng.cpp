#include "palette/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace palette {

int Rng::below(int n) {
    if (n <= 0) {
        throw std::invalid_argument("Rng::below requires n >= 1");
    }
    // Rejection sampling over the top of the range keeps the draw unbiased
    // without widening arithmetic.
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

double Rng::normal(double mean, double stddev) {
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    return mean + stddev * r * std::cos(theta);
}

void Rng::fill_normal(std::vector<double>& out, double mean, double stddev) {
    for (double& v : out) {
        v = normal(mean, stddev);
    }
}

Rng Rng::derive(std::uint64_t base_seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream) so derived streams do not
    // overlap for nearby seeds.
    std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z = z ^ (z >> 31);
    return Rng(z);
}

}  // namespace palette
