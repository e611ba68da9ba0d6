#pragma once

#include "minegan/tensor.hpp"

#include <cstdint>
#include <random>

namespace minegan {

using Rng = std::mt19937_64;

// Independent stream seed for a (seed, stream) pair (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

Tensor normal(Rng& rng, std::size_t rows, std::size_t cols, double mean = 0.0, double stddev = 1.0);
Tensor uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0);

} // namespace minegan
