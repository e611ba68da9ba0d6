#include "minegan/tensor.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace minegan {

std::string to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

std::size_t element_count(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (element_count(shape_) != values_.size()) {
        throw DimensionError("tensor shape " + to_string(shape_) + " needs " +
                             std::to_string(element_count(shape_)) + " values, got " +
                             std::to_string(values_.size()));
    }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::span<double> Tensor::row_span(std::size_t r) noexcept {
    const auto c = cols();
    return {values_.data() + r * c, c};
}

std::span<const double> Tensor::row_span(std::size_t r) const noexcept {
    const auto c = cols();
    return {values_.data() + r * c, c};
}

Tensor Tensor::reshaped(Shape shape) const {
    if (element_count(shape) != values_.size()) {
        throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const noexcept {
    // Non-finite doubles are exactly those with an all-ones exponent.
    constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
    std::uint64_t bad = 0;
    for (double v : values_) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        bad |= static_cast<std::uint64_t>((bits & kExp) == kExp);
    }
    return bad == 0;
}

double Tensor::item() const {
    if (values_.size() != 1) {
        throw DimensionError("item() on tensor of shape " + to_string(shape_));
    }
    return values_[0];
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape() != b.shape()) return false;
    return a.size() == 0 ||
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) noexcept {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t tensor_hash(const Tensor& t, std::uint64_t seed) noexcept {
    std::uint64_t h = seed;
    for (auto d : t.shape()) {
        const auto v = static_cast<std::uint64_t>(d);
        h = fnv1a({reinterpret_cast<const std::uint8_t*>(&v), sizeof v}, h);
    }
    return fnv1a({reinterpret_cast<const std::uint8_t*>(t.data()), t.size() * sizeof(double)}, h);
}

Tensor rows_of(const Tensor& t, std::span<const std::size_t> indices) {
    const auto c = t.cols();
    Tensor out({indices.size(), c});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.rows()) throw DimensionError("row index out of range");
        std::copy_n(t.data() + indices[i] * c, c, out.data() + i * c);
    }
    return out;
}

Tensor hstack(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw DimensionError("hstack: row counts differ");
    const auto ca = a.cols();
    const auto cb = b.cols();
    Tensor out({a.rows(), ca + cb});
    for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(a.data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(b.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    return out;
}

Tensor vstack(std::span<const Tensor> parts) {
    if (parts.empty()) return {};
    const auto c = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw DimensionError("vstack: column mismatch");
        rows += p.rows();
    }
    std::vector<double> values;
    values.reserve(rows * c);
    for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
    return Tensor({rows, c}, std::move(values));
}

} // namespace minegan
