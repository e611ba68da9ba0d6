#include "minegan/network.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <cmath>

namespace minegan {

std::string_view activation_name(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    }
    return "?";
}

std::optional<Activation> parse_activation(std::string_view text) {
    if (text == "relu") return Activation::relu;
    if (text == "leaky_relu") return Activation::leaky_relu;
    if (text == "tanh") return Activation::tanh;
    if (text == "linear") return Activation::linear;
    return std::nullopt;
}

DenseNetwork::DenseNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void DenseNetwork::validate() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weight.rank() != 2) throw DimensionError("layer " + std::to_string(i) + ": weight must be a matrix");
        if (l.bias.size() != l.output_dim()) {
            throw DimensionError("layer " + std::to_string(i) + ": bias width " + std::to_string(l.bias.size()) +
                                 " != output width " + std::to_string(l.output_dim()));
        }
        if (i > 0 && layers_[i - 1].output_dim() != l.input_dim()) {
            throw DimensionError("layer " + std::to_string(i) + ": input width " + std::to_string(l.input_dim()) +
                                 " != previous output width " + std::to_string(layers_[i - 1].output_dim()));
        }
    }
}

DenseNetwork DenseNetwork::mlp(std::span<const std::size_t> widths, Activation hidden, Activation output) {
    if (widths.size() < 2) throw DimensionError("mlp needs at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Layer l;
        l.weight = Tensor::zeros(widths[i + 1], widths[i]);
        l.bias = Tensor::zeros(1, widths[i + 1]);
        l.activation = (i + 2 == widths.size()) ? output : hidden;
        layers.push_back(std::move(l));
    }
    return DenseNetwork(std::move(layers));
}

std::size_t DenseNetwork::input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().input_dim(); }

std::size_t DenseNetwork::output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().output_dim(); }

ad::Var activate(ad::Var x, Activation a) {
    switch (a) {
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::linear: return x;
    }
    return x;
}

namespace {

void activate_inplace(Tensor& x, Activation a) {
    switch (a) {
    case Activation::relu:
        for (auto& v : x.values()) v = v > 0.0 ? v : 0.0;
        break;
    case Activation::leaky_relu:
        for (auto& v : x.values()) v = v > 0.0 ? v : ad::kLeakySlope * v;
        break;
    case Activation::tanh:
        for (auto& v : x.values()) v = std::tanh(v);
        break;
    case Activation::linear:
        break;
    }
}

void check_input(const DenseNetwork& net, std::size_t width, std::size_t layer) {
    const auto expected = net.layer(layer).input_dim();
    if (width != expected) {
        throw DimensionError("layer " + std::to_string(layer) + " expects input width " + std::to_string(expected) +
                             ", got " + std::to_string(width));
    }
}

} // namespace

ad::Var DenseNetwork::forward(ad::Binding& binding, ad::Var input, bool as_constants) const {
    if (layers_.empty()) return input;
    ad::Var h = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        check_input(*this, h.value().cols(), i);
        const auto& l = layers_[i];
        const auto w = as_constants ? binding.freeze(l.weight) : binding(l.weight);
        const auto b = as_constants ? binding.freeze(l.bias) : binding(l.bias);
        h = ad::add_row(ad::matmul(h, w, false, true), b);
        h = activate(h, l.activation);
    }
    return h;
}

Tensor DenseNetwork::evaluate(const Tensor& input) const {
    Tensor h = input.rank() == 2 ? input : input.reshaped({input.rows(), input.cols()});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        check_input(*this, h.cols(), i);
        const auto& l = layers_[i];
        h = ad::values::matmul(h, l.weight, false, true);
        ad::values::add_row_inplace(h, l.bias);
        activate_inplace(h, l.activation);
    }
    if (!h.all_finite()) throw NumericError("non-finite network output");
    return h;
}

std::vector<Tensor*> DenseNetwork::parameters() {
    std::vector<Tensor*> out;
    out.reserve(2 * layers_.size());
    for (auto& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> DenseNetwork::parameters() const {
    std::vector<const Tensor*> out;
    out.reserve(2 * layers_.size());
    for (const auto& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<bool> DenseNetwork::trainable() const {
    std::vector<bool> out;
    out.reserve(2 * layers_.size());
    for (const auto& l : layers_) {
        out.push_back(!l.frozen);
        out.push_back(!l.frozen);
    }
    return out;
}

std::size_t DenseNetwork::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void DenseNetwork::set_frozen(bool frozen) noexcept {
    for (auto& l : layers_) l.frozen = frozen;
}

bool DenseNetwork::fully_frozen() const noexcept {
    return std::all_of(layers_.begin(), layers_.end(), [](const Layer& l) { return l.frozen; });
}

std::uint64_t DenseNetwork::parameter_hash() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : parameters()) h = tensor_hash(*p, h);
    return h;
}

void init_he(DenseNetwork& net, Rng& rng) {
    for (std::size_t i = 0; i < net.depth(); ++i) {
        auto& l = net.layer(i);
        const double std = std::sqrt(2.0 / static_cast<double>(l.input_dim()));
        l.weight = normal(rng, l.output_dim(), l.input_dim(), 0.0, std);
        l.bias = Tensor::zeros(1, l.output_dim());
    }
}

void init_normal(DenseNetwork& net, double stddev, Rng& rng) {
    for (std::size_t i = 0; i < net.depth(); ++i) {
        auto& l = net.layer(i);
        l.weight = normal(rng, l.output_dim(), l.input_dim(), 0.0, stddev);
        l.bias = normal(rng, 1, l.output_dim(), 0.0, stddev);
    }
}

// ---- standalone forward/backward ----------------------------------------

ForwardPass forward(const DenseNetwork& net, const Tensor& input) {
    ForwardPass pass;
    pass.tape = std::make_unique<ad::Tape>();
    pass.binding = std::make_unique<ad::Binding>(*pass.tape);
    pass.net = &net;
    const Tensor x = input.rank() == 2 ? input : input.reshaped({input.rows(), input.cols()});
    pass.input = pass.tape->leaf(x, true);
    pass.output = net.forward(*pass.binding, pass.input);
    return pass;
}

GradientMap backward(ForwardPass& pass, const Tensor& seed) {
    if (!pass.tape) throw UsageError("backward on an empty forward pass");
    std::vector<ad::Var> wrt{pass.input};
    const auto params = pass.net->parameters();
    for (const auto* p : params) wrt.push_back((*pass.binding)(*p));
    auto grads = pass.tape->backward(pass.output, seed, wrt);
    GradientMap out;
    out.input = std::move(grads.front());
    out.parameters.assign(std::make_move_iterator(grads.begin() + 1), std::make_move_iterator(grads.end()));
    return out;
}

namespace {

double loss_value(const DenseNetwork& net, const Tensor& input, const LossBuilder& loss) {
    ad::Tape tape;
    ad::Binding binding(tape);
    const auto x = tape.constant(input);
    return loss(binding, net.forward(binding, x)).value().item();
}

} // namespace

GradCheckReport grad_check_report(const DenseNetwork& net, const Tensor& input, const LossBuilder& loss,
                                  double eps) {
    if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
    const Tensor x = input.rank() == 2 ? input : input.reshaped({input.rows(), input.cols()});

    std::vector<Tensor> analytic;
    {
        ad::Tape tape;
        ad::Binding binding(tape);
        const auto xv = tape.constant(x);
        const auto out = loss(binding, net.forward(binding, xv));
        if (out.value().size() != 1) throw DimensionError("grad_check: loss must be scalar");
        const auto params = net.parameters();
        const auto vars = binding.vars(params);
        analytic = tape.backward(out, Tensor::scalar(1.0), vars);
    }

    GradCheckReport report;
    DenseNetwork probe = net;
    const auto trainable = net.trainable();
    auto params = probe.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!trainable[p]) {
            report.skipped_frozen += params[p]->size();
            continue;
        }
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
            const double saved = (*params[p])[i];
            (*params[p])[i] = saved + eps;
            const double up = loss_value(probe, x, loss);
            (*params[p])[i] = saved - eps;
            const double down = loss_value(probe, x, loss);
            (*params[p])[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[p][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
            ++report.checked;
        }
    }
    return report;
}

double grad_check(const DenseNetwork& net, const Tensor& input, const LossBuilder& loss, double eps) {
    return grad_check_report(net, input, loss, eps).max_relative_error;
}

} // namespace minegan
