#include "minegan/rng.hpp"

namespace minegan {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor normal(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    Tensor out({rows, cols});
    for (auto& v : out.values()) v = dist(rng);
    return out;
}

Tensor uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor out({rows, cols});
    for (auto& v : out.values()) v = dist(rng);
    return out;
}

} // namespace minegan
