#include "minegan/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

namespace minegan::kernels {
namespace {

inline double dot(const double* x, const double* y, std::size_t k) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + p), vld1q_f64(y + p));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + p + 2), vld1q_f64(y + p + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; p < k; ++p) acc += x[p] * y[p];
    return acc;
}

template <bool TransA>
void gemm_rows(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c) {
    auto a_at = [&](std::size_t i, std::size_t p) { return TransA ? a[p * m + i] : a[i * k + p]; };
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            float64x2_t c0 = vdupq_n_f64(0.0), c1 = vdupq_n_f64(0.0);
            float64x2_t c2 = vdupq_n_f64(0.0), c3 = vdupq_n_f64(0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const float64x2_t av = vdupq_n_f64(a_at(i, p));
                const double* brow = b + p * n + j;
                c0 = vfmaq_f64(c0, av, vld1q_f64(brow));
                c1 = vfmaq_f64(c1, av, vld1q_f64(brow + 2));
                c2 = vfmaq_f64(c2, av, vld1q_f64(brow + 4));
                c3 = vfmaq_f64(c3, av, vld1q_f64(brow + 6));
            }
            vst1q_f64(crow + j, c0);
            vst1q_f64(crow + j + 2, c1);
            vst1q_f64(crow + j + 4, c2);
            vst1q_f64(crow + j + 6, c3);
        }
        for (; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * b[p * n + j];
            crow[j] = acc;
        }
    }
}

void gemm_neon(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c) {
    if (!trans_b) {
        if (trans_a) gemm_rows<true>(m, n, k, a, b, c);
        else gemm_rows<false>(m, n, k, a, b, c);
        return;
    }
    if (!trans_a) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j * k, k);
        }
        return;
    }
    detail::scalar_table()->gemm(trans_a, trans_b, m, n, k, a, b, c);
}

void sq_dists_neon(const double* x, const double* bt, std::size_t d, std::size_t m, double* out) {
    std::size_t j = 0;
    for (; j + 2 <= m; j += 2) {
        float64x2_t acc = vdupq_n_f64(0.0);
        for (std::size_t t = 0; t < d; ++t) {
            const float64x2_t diff = vsubq_f64(vdupq_n_f64(x[t]), vld1q_f64(bt + t * m + j));
            acc = vfmaq_f64(acc, diff, diff);
        }
        vst1q_f64(out + j, acc);
    }
    for (; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            const double diff = x[t] - bt[t * m + j];
            acc += diff * diff;
        }
        out[j] = acc;
    }
}

constexpr Table kNeon{Backend::neon, &gemm_neon, &sq_dists_neon};

} // namespace

namespace detail {
const Table* neon_table() { return &kNeon; }
} // namespace detail

} // namespace minegan::kernels

#else

namespace minegan::kernels::detail {
const Table* neon_table() { return nullptr; }
} // namespace minegan::kernels::detail

#endif
