#pragma once

#include "minegan/rng.hpp"
#include "minegan/tape.hpp"
#include "minegan/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace minegan {

enum class Activation : std::uint8_t { relu, leaky_relu, tanh, linear };

std::string_view activation_name(Activation a);
std::optional<Activation> parse_activation(std::string_view text);

ad::Var activate(ad::Var x, Activation a);

struct Layer {
    Tensor weight;  // out x in
    Tensor bias;    // 1 x out
    Activation activation = Activation::linear;
    bool frozen = false;

    std::size_t input_dim() const noexcept { return weight.cols(); }
    std::size_t output_dim() const noexcept { return weight.rows(); }

    friend bool operator==(const Layer&, const Layer&) = default;
};

// Stack of affine + activation layers. Parameters enumerate as
// weight0, bias0, weight1, bias1, ... in that order everywhere (optimizer
// state, checkpoints, gradient maps).
class DenseNetwork {
public:
    DenseNetwork() = default;
    explicit DenseNetwork(std::vector<Layer> layers);

    // Zero-initialised MLP; widths = {input, hidden..., output}.
    static DenseNetwork mlp(std::span<const std::size_t> widths, Activation hidden, Activation output);

    std::size_t input_dim() const noexcept;
    std::size_t output_dim() const noexcept;
    std::size_t depth() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    Layer& layer(std::size_t i) { return layers_.at(i); }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }

    // With as_constants the parameters are bound without adjoints; gradients
    // still reach `input`.
    ad::Var forward(ad::Binding& binding, ad::Var input, bool as_constants = false) const;
    // Tape-free inference; bit-identical to forward() under the same kernels.
    Tensor evaluate(const Tensor& input) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    // Per entry of parameters(): false when the owning layer is frozen.
    std::vector<bool> trainable() const;
    std::size_t parameter_count() const noexcept;

    void set_frozen(bool frozen) noexcept;
    bool fully_frozen() const noexcept;

    std::uint64_t parameter_hash() const noexcept;

    friend bool operator==(const DenseNetwork&, const DenseNetwork&) = default;

private:
    void validate() const;
    std::vector<Layer> layers_;
};

// Scaled-normal (He) weights, zero biases.
void init_he(DenseNetwork& net, Rng& rng);
// Weights and biases ~ N(0, stddev^2).
void init_normal(DenseNetwork& net, double stddev, Rng& rng);

// ---- spec-level forward/backward over a standalone graph ----------------

struct ForwardPass {
    std::unique_ptr<ad::Tape> tape;
    std::unique_ptr<ad::Binding> binding;
    const DenseNetwork* net = nullptr;
    ad::Var input;
    ad::Var output;

    const Tensor& value() const { return output.value(); }
};

struct GradientMap {
    Tensor input;
    std::vector<Tensor> parameters;  // aligned with DenseNetwork::parameters()
};

ForwardPass forward(const DenseNetwork& net, const Tensor& input);
// Throws GraphReuseError when the pass was already consumed.
GradientMap backward(ForwardPass& pass, const Tensor& seed);

// Scalar loss of the network output, built on the same binding so it may
// route through other (possibly frozen) networks.
using LossBuilder = std::function<ad::Var(ad::Binding&, ad::Var output)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_frozen = 0;
};

// Central-difference check of every trainable parameter:
// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check_report(const DenseNetwork& net, const Tensor& input, const LossBuilder& loss,
                                  double eps);
double grad_check(const DenseNetwork& net, const Tensor& input, const LossBuilder& loss, double eps);

} // namespace minegan
