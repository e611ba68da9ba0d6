#include "minegan/kernels.hpp"

#include <algorithm>

namespace minegan::kernels {
namespace {

void gemm_scalar(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c) {
    auto a_at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * m + i] : a[i * k + p]; };
    std::fill(c, c + m * n, 0.0);
    if (!trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a_at(i, p);
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * brow[p];
            c[i * n + j] = acc;
        }
    }
}

void sq_dists_scalar(const double* x, const double* bt, std::size_t d, std::size_t m, double* out) {
    std::fill(out, out + m, 0.0);
    for (std::size_t t = 0; t < d; ++t) {
        const double xv = x[t];
        const double* col = bt + t * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double diff = xv - col[j];
            out[j] += diff * diff;
        }
    }
}

constexpr Table kScalar{Backend::scalar, &gemm_scalar, &sq_dists_scalar};

} // namespace

namespace detail {
const Table* scalar_table() { return &kScalar; }
} // namespace detail

} // namespace minegan::kernels
