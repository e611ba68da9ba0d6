#include "minegan/tape.hpp"

#include "minegan/errors.hpp"
#include "minegan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace minegan::ad {

std::string_view op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add_row: return "add_row";
    case Op::sum_rows: return "sum_rows";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::sum_cols: return "sum_cols";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::relu: return "relu";
    case Op::leaky_relu: return "leaky_relu";
    case Op::tanh: return "tanh";
    case Op::sqrt: return "sqrt";
    case Op::square: return "square";
    case Op::sum_all: return "sum_all";
    case Op::expand: return "expand";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::pad_cols: return "pad_cols";
    case Op::softmax_xent: return "softmax_xent";
    }
    return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }

// --- value kernels ------------------------------------------------------

namespace values {

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                             std::to_string(kb) + ")");
    }
    Tensor c({m, n});
    kernels::active().gemm(trans_a, trans_b, m, n, k, a.data(), b.data(), c.data());
    return c;
}

void add_row_inplace(Tensor& x, const Tensor& row) {
    const auto cols = x.cols();
    if (row.size() != cols) {
        throw DimensionError("add_row: row of width " + std::to_string(row.size()) +
                             " against matrix width " + std::to_string(cols));
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double* p = x.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) p[c] += row[c];
    }
}

} // namespace values

// --- tape ---------------------------------------------------------------

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw UsageError("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

Var Tape::push(Node node) {
    if (!node.value.all_finite()) {
        throw NumericError("non-finite value produced by " + std::string(op_name(node.op)) +
                           " (node " + std::to_string(nodes_.size()) + ")");
    }
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw UsageError("operation on an unbound variable");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (!a.valid() || !b.valid()) throw UsageError("operation on an unbound variable");
    if (a.tape != b.tape) throw UsageError("operands live on different tapes");
    return *a.tape;
}

bool needs_grad(Var v) { return v.tape->node(v.id).requires_grad; }

Node make(Op op, Var a, Tensor value) {
    Node n;
    n.op = op;
    n.inputs = {a.id, -1};
    n.value = std::move(value);
    n.requires_grad = needs_grad(a);
    return n;
}

Node make(Op op, Var a, Var b, Tensor value) {
    Node n;
    n.op = op;
    n.inputs = {a.id, b.id};
    n.value = std::move(value);
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, Op op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op_name(op)) + ": shapes " + to_string(a.shape()) + " and " +
                             to_string(b.shape()) + " differ");
    }
}

template <class F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

Tensor as_matrix(const Tensor& t) {
    if (t.rank() == 2) return t;
    return t.reshaped({t.rows(), t.cols()});
}

} // namespace

std::vector<Var> Tape::sweep(Var output, Var seed, std::span<const Var> wrt) {
    std::vector<std::int32_t> adj(static_cast<std::size_t>(output.id) + 1, -1);
    adj[static_cast<std::size_t>(output.id)] = seed.id;

    auto accumulate = [&](std::int32_t input, Var contribution) {
        auto& slot = adj[static_cast<std::size_t>(input)];
        slot = slot < 0 ? contribution.id : ad::add(Var{this, slot}, contribution).id;
    };

    for (std::int32_t i = output.id; i >= 0; --i) {
        const auto gi = adj[static_cast<std::size_t>(i)];
        if (gi < 0) continue;
        // Copy what we need: pushing new nodes may reallocate nodes_.
        const Node& cur = nodes_[static_cast<std::size_t>(i)];
        if (!cur.requires_grad || cur.op == Op::leaf || cur.op == Op::constant) continue;
        const Op op = cur.op;
        const auto in0 = cur.inputs[0];
        const auto in1 = cur.inputs[1];
        const bool ta = cur.trans_a;
        const bool tb = cur.trans_b;
        const double c = cur.scalar;
        const std::size_t offset = cur.offset;
        const std::size_t extent = cur.extent;
        const Var g{this, gi};
        const Var self{this, i};
        const Var a{this, in0};
        const Var b{this, in1};
        const bool ga = in0 >= 0 && nodes_[static_cast<std::size_t>(in0)].requires_grad;
        const bool gb = in1 >= 0 && nodes_[static_cast<std::size_t>(in1)].requires_grad;

        switch (op) {
        case Op::matmul:
            if (ga) accumulate(in0, ta ? ad::matmul(b, g, tb, true) : ad::matmul(g, b, false, !tb));
            if (gb) accumulate(in1, tb ? ad::matmul(g, a, true, ta) : ad::matmul(a, g, !ta, false));
            break;
        case Op::add_row:
            if (ga) accumulate(in0, g);
            if (gb) accumulate(in1, ad::sum_rows(g));
            break;
        case Op::sum_rows:
            if (ga) accumulate(in0, ad::broadcast_rows(g, extent));
            break;
        case Op::broadcast_rows:
            if (ga) accumulate(in0, ad::sum_rows(g));
            break;
        case Op::sum_cols:
            if (ga) accumulate(in0, ad::broadcast_cols(g, extent));
            break;
        case Op::broadcast_cols:
            if (ga) accumulate(in0, ad::sum_cols(g));
            break;
        case Op::add:
            if (ga) accumulate(in0, g);
            if (gb) accumulate(in1, g);
            break;
        case Op::sub:
            if (ga) accumulate(in0, g);
            if (gb) accumulate(in1, ad::scale(g, -1.0));
            break;
        case Op::mul:
            if (ga) accumulate(in0, ad::mul(g, b));
            if (gb) accumulate(in1, ad::mul(g, a));
            break;
        case Op::div:
            if (ga) accumulate(in0, ad::div(g, b));
            if (gb) accumulate(in1, ad::scale(ad::mul(g, ad::div(self, b)), -1.0));
            break;
        case Op::scale:
            if (ga) accumulate(in0, ad::scale(g, c));
            break;
        case Op::add_scalar:
            if (ga) accumulate(in0, g);
            break;
        case Op::relu:
        case Op::leaky_relu:
            if (ga) {
                const Var mask = constant(nodes_[static_cast<std::size_t>(i)].aux);
                accumulate(in0, ad::mul(g, mask));
            }
            break;
        case Op::tanh:
            if (ga) accumulate(in0, ad::mul(g, ad::add_scalar(ad::scale(ad::square(self), -1.0), 1.0)));
            break;
        case Op::sqrt:
            if (ga) accumulate(in0, ad::div(ad::scale(g, 0.5), self));
            break;
        case Op::square:
            if (ga) accumulate(in0, ad::mul(g, ad::scale(a, 2.0)));
            break;
        case Op::sum_all:
            if (ga) accumulate(in0, ad::expand(g, nodes_[static_cast<std::size_t>(in0)].value.shape()));
            break;
        case Op::expand:
            if (ga) accumulate(in0, ad::sum_all(g));
            break;
        case Op::concat_cols:
            if (ga || gb) {
                const auto wa = nodes_[static_cast<std::size_t>(in0)].value.cols();
                const auto wb = nodes_[static_cast<std::size_t>(in1)].value.cols();
                if (ga) accumulate(in0, ad::slice_cols(g, 0, wa));
                if (gb) accumulate(in1, ad::slice_cols(g, wa, wb));
            }
            break;
        case Op::slice_cols:
            if (ga) accumulate(in0, ad::pad_cols(g, offset, extent));
            break;
        case Op::pad_cols:
            if (ga) accumulate(in0, ad::slice_cols(g, offset, nodes_[static_cast<std::size_t>(in0)].value.cols()));
            break;
        case Op::softmax_xent:
            if (ga) {
                const Var residual = constant(nodes_[static_cast<std::size_t>(i)].aux);
                accumulate(in0, ad::mul(ad::expand(g, residual.value().shape()), residual));
            }
            break;
        case Op::leaf:
        case Op::constant:
            break;
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (w.tape != this) throw UsageError("gradient requested for a variable of another tape");
        const bool reached = w.id <= output.id && adj[static_cast<std::size_t>(w.id)] >= 0;
        out.push_back(reached ? Var{this, adj[static_cast<std::size_t>(w.id)]}
                              : constant(Tensor(nodes_[static_cast<std::size_t>(w.id)].value.shape())));
    }
    return out;
}

std::vector<Tensor> Tape::backward(Var output, const Tensor& seed, std::span<const Var> wrt) {
    if (consumed_) throw GraphReuseError("backward on a graph that was already consumed");
    if (output.tape != this) throw UsageError("backward: output belongs to another tape");
    if (seed.size() != value(output).size() || seed.rows() != value(output).rows()) {
        throw DimensionError("backward: seed shape " + to_string(seed.shape()) + " vs output shape " +
                             to_string(value(output).shape()));
    }
    const Var s = constant(seed.reshaped(value(output).shape()));
    const auto grads = sweep(output, s, wrt);
    consumed_ = true;
    std::vector<Tensor> out;
    out.reserve(grads.size());
    for (const auto& g : grads) out.push_back(value(g));
    return out;
}

std::vector<Var> Tape::grad(Var output, std::span<const Var> wrt) {
    if (consumed_) throw GraphReuseError("grad on a graph that was already consumed");
    if (value(output).size() != 1) {
        throw DimensionError("grad: output must be a scalar, got " + to_string(value(output).shape()));
    }
    const Var s = constant(Tensor(value(output).shape(), {1.0}));
    return sweep(output, s, wrt);
}

// --- binding ------------------------------------------------------------

Var Binding::operator()(const Tensor& parameter) {
    if (auto it = vars_.find(&parameter); it != vars_.end()) return it->second;
    const Var v = tape_->leaf(parameter, true);
    vars_.emplace(&parameter, v);
    return v;
}

Var Binding::freeze(const Tensor& parameter) {
    if (auto it = vars_.find(&parameter); it != vars_.end()) return it->second;
    const Var v = tape_->leaf(parameter, false);
    vars_.emplace(&parameter, v);
    return v;
}

std::optional<Var> Binding::find(const Tensor& parameter) const {
    if (auto it = vars_.find(&parameter); it != vars_.end()) return it->second;
    return std::nullopt;
}

std::vector<Var> Binding::vars(std::span<const Tensor* const> params) {
    std::vector<Var> out;
    out.reserve(params.size());
    for (const auto* p : params) out.push_back((*this)(*p));
    return out;
}

// --- operations ---------------------------------------------------------

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
    Tape& t = tape_of(a, b);
    Node n = make(Op::matmul, a, b, values::matmul(a.value(), b.value(), trans_a, trans_b));
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    return t.push(std::move(n));
}

Var add_row(Var x, Var row) {
    Tape& t = tape_of(x, row);
    Tensor out = as_matrix(x.value());
    values::add_row_inplace(out, row.value());
    return t.push(make(Op::add_row, x, row, std::move(out)));
}

Var sum_rows(Var x) {
    Tape& t = tape_of(x);
    const Tensor& v = x.value();
    Tensor out({1, v.cols()});
    for (std::size_t r = 0; r < v.rows(); ++r) {
        for (std::size_t c = 0; c < v.cols(); ++c) out[c] += v(r, c);
    }
    Node n = make(Op::sum_rows, x, std::move(out));
    n.extent = v.rows();
    return t.push(std::move(n));
}

Var broadcast_rows(Var row, std::size_t rows) {
    Tape& t = tape_of(row);
    const Tensor& v = row.value();
    if (v.rows() != 1) throw DimensionError("broadcast_rows: expected a single row, got " + to_string(v.shape()));
    Tensor out({rows, v.cols()});
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.data(), v.data() + v.cols(), out.data() + r * v.cols());
    return t.push(make(Op::broadcast_rows, row, std::move(out)));
}

Var sum_cols(Var x) {
    Tape& t = tape_of(x);
    const Tensor& v = x.value();
    Tensor out({v.rows(), 1});
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < v.cols(); ++c) acc += v(r, c);
        out[r] = acc;
    }
    Node n = make(Op::sum_cols, x, std::move(out));
    n.extent = v.cols();
    return t.push(std::move(n));
}

Var broadcast_cols(Var col, std::size_t cols) {
    Tape& t = tape_of(col);
    const Tensor& v = col.value();
    if (v.cols() != 1) throw DimensionError("broadcast_cols: expected a single column, got " + to_string(v.shape()));
    Tensor out({v.rows(), cols});
    for (std::size_t r = 0; r < v.rows(); ++r) std::fill_n(out.data() + r * cols, cols, v[r]);
    return t.push(make(Op::broadcast_cols, col, std::move(out)));
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), Op::add);
    return t.push(make(Op::add, a, b, zip(a.value(), b.value(), [](double x, double y) { return x + y; })));
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), Op::sub);
    return t.push(make(Op::sub, a, b, zip(a.value(), b.value(), [](double x, double y) { return x - y; })));
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), Op::mul);
    return t.push(make(Op::mul, a, b, zip(a.value(), b.value(), [](double x, double y) { return x * y; })));
}

Var div(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same_shape(a.value(), b.value(), Op::div);
    return t.push(make(Op::div, a, b, zip(a.value(), b.value(), [](double x, double y) { return x / y; })));
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    Node n = make(Op::scale, a, map(a.value(), [c](double x) { return c * x; }));
    n.scalar = c;
    return t.push(std::move(n));
}

Var add_scalar(Var a, double c) {
    Tape& t = tape_of(a);
    Node n = make(Op::add_scalar, a, map(a.value(), [c](double x) { return x + c; }));
    n.scalar = c;
    return t.push(std::move(n));
}

Var relu(Var x) {
    Tape& t = tape_of(x);
    Node n = make(Op::relu, x, map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }));
    n.aux = map(x.value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
    return t.push(std::move(n));
}

Var leaky_relu(Var x) {
    Tape& t = tape_of(x);
    Node n = make(Op::leaky_relu, x, map(x.value(), [](double v) { return v > 0.0 ? v : kLeakySlope * v; }));
    n.aux = map(x.value(), [](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    return t.push(std::move(n));
}

Var tanh(Var x) {
    Tape& t = tape_of(x);
    return t.push(make(Op::tanh, x, map(x.value(), [](double v) { return std::tanh(v); })));
}

Var sqrt(Var x) {
    Tape& t = tape_of(x);
    return t.push(make(Op::sqrt, x, map(x.value(), [](double v) { return std::sqrt(v); })));
}

Var square(Var x) {
    Tape& t = tape_of(x);
    return t.push(make(Op::square, x, map(x.value(), [](double v) { return v * v; })));
}

Var sum_all(Var x) {
    Tape& t = tape_of(x);
    double acc = 0.0;
    for (double v : x.value().values()) acc += v;
    return t.push(make(Op::sum_all, x, Tensor::scalar(acc)));
}

Var mean_all(Var x) {
    const auto n = x.value().size();
    if (n == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

Var expand(Var s, const Shape& shape) {
    Tape& t = tape_of(s);
    return t.push(make(Op::expand, s, Tensor(shape, std::vector<double>(element_count(shape), s.value().item()))));
}

Var concat_cols(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows() != y.rows()) throw DimensionError("concat_cols: row counts differ");
    Tensor out({x.rows(), x.cols() + y.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::copy_n(x.data() + r * x.cols(), x.cols(), out.data() + r * out.cols());
        std::copy_n(y.data() + r * y.cols(), y.cols(), out.data() + r * out.cols() + x.cols());
    }
    return t.push(make(Op::concat_cols, a, b, std::move(out)));
}

Var slice_cols(Var x, std::size_t offset, std::size_t width) {
    Tape& t = tape_of(x);
    const Tensor& v = x.value();
    if (offset + width > v.cols()) throw DimensionError("slice_cols: range exceeds width");
    Tensor out({v.rows(), width});
    for (std::size_t r = 0; r < v.rows(); ++r) std::copy_n(v.data() + r * v.cols() + offset, width, out.data() + r * width);
    Node n = make(Op::slice_cols, x, std::move(out));
    n.offset = offset;
    n.extent = v.cols();
    return t.push(std::move(n));
}

Var pad_cols(Var x, std::size_t offset, std::size_t total) {
    Tape& t = tape_of(x);
    const Tensor& v = x.value();
    if (offset + v.cols() > total) throw DimensionError("pad_cols: range exceeds width");
    Tensor out({v.rows(), total});
    for (std::size_t r = 0; r < v.rows(); ++r) std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * total + offset);
    Node n = make(Op::pad_cols, x, std::move(out));
    n.offset = offset;
    n.extent = total;
    return t.push(std::move(n));
}

Var softmax_xent(Var logits, const Tensor& targets) {
    Tape& t = tape_of(logits);
    const Tensor& z = logits.value();
    if (targets.rows() != z.rows() || targets.cols() != z.cols()) {
        throw DimensionError("softmax_xent: targets " + to_string(targets.shape()) + " vs logits " +
                             to_string(z.shape()));
    }
    const auto rows = z.rows();
    const auto cols = z.cols();
    Tensor residual({rows, cols});
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = z.data() + r * cols;
        const double mx = *std::max_element(zr, zr + cols);
        double denom = 0.0;
        for (std::size_t c = 0; c < cols; ++c) denom += std::exp(zr[c] - mx);
        const double log_denom = std::log(denom) + mx;
        for (std::size_t c = 0; c < cols; ++c) {
            const double p = std::exp(zr[c] - log_denom);
            loss -= targets(r, c) * (zr[c] - log_denom);
            residual(r, c) = (p - targets(r, c)) / static_cast<double>(rows);
        }
    }
    Node n = make(Op::softmax_xent, logits, Tensor::scalar(loss / static_cast<double>(rows)));
    n.aux = std::move(residual);
    return t.push(std::move(n));
}

} // namespace minegan::ad
