#pragma once

#include "minegan/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

// Define-by-run reverse-mode differentiation over 2-D tensors.
//
// A Tape records every operation in construction order; each node's inputs
// precede it. Vector-Jacobian products are themselves expressed as tape
// operations, so a gradient obtained with Tape::grad() can be differentiated
// again (the critic's gradient penalty depends on this).
namespace minegan::ad {

enum class Op : std::uint8_t {
    leaf,
    constant,
    matmul,
    add_row,
    sum_rows,
    broadcast_rows,
    sum_cols,
    broadcast_cols,
    add,
    sub,
    mul,
    div,
    scale,
    add_scalar,
    relu,
    leaky_relu,
    tanh,
    sqrt,
    square,
    sum_all,
    expand,
    concat_cols,
    slice_cols,
    pad_cols,
    softmax_xent,
};

std::string_view op_name(Op op);

inline constexpr double kLeakySlope = 0.2;

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const noexcept { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

struct Node {
    Op op = Op::constant;
    std::array<std::int32_t, 2> inputs{-1, -1};
    bool trans_a = false;
    bool trans_b = false;
    double scalar = 0.0;
    std::size_t offset = 0;
    std::size_t extent = 0;
    Tensor aux;  // relu masks, softmax residuals
    Tensor value;
    bool requires_grad = false;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value);

    const Tensor& value(Var v) const;
    const Node& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }

    // First-order reverse sweep. Seeds `output` with `seed` and returns the
    // adjoint of every variable in `wrt` (zeros when unreachable). Consumes the
    // tape: a second backward() or grad() throws GraphReuseError.
    std::vector<Tensor> backward(Var output, const Tensor& seed, std::span<const Var> wrt);

    // Differentiable gradients of a 1x1 output. The returned variables live on
    // this tape; the tape is not consumed.
    std::vector<Var> grad(Var output, std::span<const Var> wrt);

    // Internal: append a node, checking that its value is finite.
    Var push(Node node);

private:
    std::vector<Var> sweep(Var output, Var seed, std::span<const Var> wrt);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Maps parameter tensors to leaf variables on one tape. Binding the same
// tensor twice yields the same variable, so shared weights accumulate
// gradients from every use.
class Binding {
public:
    explicit Binding(Tape& tape) : tape_(&tape) {}

    Var operator()(const Tensor& parameter);
    // Bind as a constant leaf: values flow forward, no adjoint is formed for it.
    Var freeze(const Tensor& parameter);
    std::optional<Var> find(const Tensor& parameter) const;
    Tape& tape() const noexcept { return *tape_; }

    // Leaf variables for `params`, binding any not yet seen.
    std::vector<Var> vars(std::span<const Tensor* const> params);

private:
    Tape* tape_;
    std::unordered_map<const Tensor*, Var> vars_;
};

// --- operations ---------------------------------------------------------

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var add_row(Var x, Var row);             // x[n x m] + row[1 x m] broadcast
Var sum_rows(Var x);                     // [n x m] -> [1 x m]
Var broadcast_rows(Var row, std::size_t n);
Var sum_cols(Var x);                     // [n x m] -> [n x 1]
Var broadcast_cols(Var col, std::size_t m);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var x);
Var leaky_relu(Var x);
Var tanh(Var x);
Var sqrt(Var x);
Var square(Var x);
Var sum_all(Var x);                      // -> [1 x 1]
Var mean_all(Var x);
Var expand(Var scalar, const Shape& shape);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t offset, std::size_t width);
Var pad_cols(Var x, std::size_t offset, std::size_t total);
// Mean softmax cross-entropy of `logits` against one-hot `targets`.
// First-order only: its gradient treats the softmax as constant.
Var softmax_xent(Var logits, const Tensor& targets);

// Value-level kernels shared by the tape and tape-free inference.
namespace values {
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);
void add_row_inplace(Tensor& x, const Tensor& row);
} // namespace values

} // namespace minegan::ad
