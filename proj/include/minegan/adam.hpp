#pragma once

#include "minegan/network.hpp"
#include "minegan/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace minegan {

struct AdamConfig {
    double learning_rate = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::int64_t step = 0;

    static AdamState for_parameters(std::span<const Tensor* const> params, AdamConfig config = {});
    static AdamState for_network(const DenseNetwork& net, AdamConfig config = {});
};

// Bias-corrected Adam update, in place. Entries whose `trainable` flag is
// false keep both their value and their moments; the step counter still
// advances once per call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const std::vector<bool>& trainable = {});

// Convenience over a network: consults the per-layer frozen flags.
void adam_step(DenseNetwork& net, std::span<const Tensor> grads, AdamState& state);

} // namespace minegan
