#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace minegan {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

// Dense row-major array of doubles. Almost everything in the library is a
// matrix (rows = batch), so the 2-D accessors are the common path; higher
// ranks exist for image sets.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor filled(std::size_t rows, std::size_t cols, double value);
    static Tensor scalar(double value);
    // Row-major literal, e.g. Tensor::matrix(2, 2, {1, 0, 0, 1}).
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Tensor row(std::span<const double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    // Matrix view: rank 1 reads as a single row, rank >2 folds trailing axes.
    std::size_t rows() const noexcept {
        return shape_.empty() ? 0 : (shape_.size() == 1 ? 1 : shape_[0]);
    }
    std::size_t cols() const noexcept {
        if (shape_.size() == 2) return shape_[1];
        if (shape_.empty()) return 0;
        if (shape_.size() == 1) return shape_[0];
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
        return c;
    }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

    std::span<double> row_span(std::size_t r) noexcept;
    std::span<const double> row_span(std::size_t r) const noexcept;

    // Same data, new shape. Throws DimensionError when the element count differs.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;
    double item() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

std::size_t element_count(const Shape& shape) noexcept;

// Bitwise equality (distinguishes -0.0 from 0.0, equal NaN payloads compare equal).
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

// FNV-1a over the shape and raw value bytes.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t tensor_hash(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

Tensor rows_of(const Tensor& t, std::span<const std::size_t> indices);
Tensor vstack(std::span<const Tensor> parts);
Tensor hstack(const Tensor& a, const Tensor& b);

} // namespace minegan
