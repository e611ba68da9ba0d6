#include "minegan/adam.hpp"

#include "minegan/errors.hpp"

#include <cmath>

namespace minegan {

AdamState AdamState::for_parameters(std::span<const Tensor* const> params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto* p : params) {
        s.first_moment.emplace_back(p->shape());
        s.second_moment.emplace_back(p->shape());
    }
    return s;
}

AdamState AdamState::for_network(const DenseNetwork& net, AdamConfig config) {
    const auto params = net.parameters();
    return for_parameters(params, config);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const std::vector<bool>& trainable) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                             std::to_string(grads.size()) + " gradients, " +
                             std::to_string(state.first_moment.size()) + " moment slots");
    }
    if (!trainable.empty() && trainable.size() != params.size()) {
        throw DimensionError("adam_step: trainable mask length mismatch");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p]->size() != grads[p].size() || params[p]->shape() != state.first_moment[p].shape()) {
            throw DimensionError("adam_step: parameter " + std::to_string(p) + " shape " +
                                 to_string(params[p]->shape()) + " vs gradient " + to_string(grads[p].shape()));
        }
    }

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!trainable.empty() && !trainable[p]) continue;
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        auto& w = *params[p];
        const auto& g = grads[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

void adam_step(DenseNetwork& net, std::span<const Tensor> grads, AdamState& state) {
    const auto params = net.parameters();
    adam_step(params, grads, state, net.trainable());
}

} // namespace minegan
