#include "minegan/kernels.hpp"

#if defined(MINEGAN_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace minegan::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double dot(const double* x, const double* y, std::size_t k) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t p = 0;
    for (; p + 8 <= k; p += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p), _mm256_loadu_pd(y + p), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p + 4), _mm256_loadu_pd(y + p + 4), acc1);
    }
    for (; p + 4 <= k; p += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p), _mm256_loadu_pd(y + p), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; p < k; ++p) acc += x[p] * y[p];
    return acc;
}

// One row of c: c row i = sum_p op(a)(i, p) * b row p.
template <bool TransA>
void gemm_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
    auto a_at = [&](std::size_t p) { return TransA ? a[p * m + i] : a[i * k + p]; };
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
        __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
        __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d av = _mm256_set1_pd(a_at(p));
            const double* brow = b + p * n + j;
            c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
            c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
            c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
            c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
        }
        _mm256_storeu_pd(crow + j, c0);
        _mm256_storeu_pd(crow + j + 4, c1);
        _mm256_storeu_pd(crow + j + 8, c2);
        _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_setzero_pd();
        for (std::size_t p = 0; p < k; ++p) {
            c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at(p)), _mm256_loadu_pd(b + p * n + j), c0);
        }
        _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a_at(p) * b[p * n + j];
        crow[j] = acc;
    }
}

// 4 x 8 register tile: per p, two loads of b and four broadcasts feed eight FMAs.
template <bool TransA>
void gemm_rows(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c) {
    auto a_at = [&](std::size_t i, std::size_t p) { return TransA ? a[p * m + i] : a[i * k + p]; };
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t{7};
    for (; i + 4 <= m && n8 > 0; i += 4) {
        for (std::size_t j = 0; j < n8; j += 8) {
            __m256d r00 = _mm256_setzero_pd(), r01 = _mm256_setzero_pd();
            __m256d r10 = _mm256_setzero_pd(), r11 = _mm256_setzero_pd();
            __m256d r20 = _mm256_setzero_pd(), r21 = _mm256_setzero_pd();
            __m256d r30 = _mm256_setzero_pd(), r31 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b + p * n + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_set1_pd(a_at(i, p));
                r00 = _mm256_fmadd_pd(av, b0, r00);
                r01 = _mm256_fmadd_pd(av, b1, r01);
                av = _mm256_set1_pd(a_at(i + 1, p));
                r10 = _mm256_fmadd_pd(av, b0, r10);
                r11 = _mm256_fmadd_pd(av, b1, r11);
                av = _mm256_set1_pd(a_at(i + 2, p));
                r20 = _mm256_fmadd_pd(av, b0, r20);
                r21 = _mm256_fmadd_pd(av, b1, r21);
                av = _mm256_set1_pd(a_at(i + 3, p));
                r30 = _mm256_fmadd_pd(av, b0, r30);
                r31 = _mm256_fmadd_pd(av, b1, r31);
            }
            double* c0 = c + i * n + j;
            _mm256_storeu_pd(c0, r00);
            _mm256_storeu_pd(c0 + 4, r01);
            _mm256_storeu_pd(c0 + n, r10);
            _mm256_storeu_pd(c0 + n + 4, r11);
            _mm256_storeu_pd(c0 + 2 * n, r20);
            _mm256_storeu_pd(c0 + 2 * n + 4, r21);
            _mm256_storeu_pd(c0 + 3 * n, r30);
            _mm256_storeu_pd(c0 + 3 * n + 4, r31);
        }
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t j = n8; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += a_at(i + r, p) * b[p * n + j];
                c[(i + r) * n + j] = acc;
            }
        }
    }
    for (; i < m; ++i) gemm_row<TransA>(i, m, n, k, a, b, c);
}

void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c) {
    if (trans_b) {
        if (!trans_a && n <= 2) {
            // Narrow outputs (critic heads): contiguous dot products win over packing.
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j * k, k);
            }
            return;
        }
        // Pack op(b) = b^T into k x n so the row kernel streams it.
        thread_local std::vector<double> packed;
        packed.resize(k * n);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * k + p];
        }
        b = packed.data();
    }
    if (trans_a) gemm_rows<true>(m, n, k, a, b, c);
    else gemm_rows<false>(m, n, k, a, b, c);
}

void sq_dists_avx2(const double* x, const double* bt, std::size_t d, std::size_t m, double* out) {
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t t = 0; t < d; ++t) {
            const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(x[t]), _mm256_loadu_pd(bt + t * m + j));
            acc = _mm256_fmadd_pd(diff, diff, acc);
        }
        _mm256_storeu_pd(out + j, acc);
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

constexpr Table kAvx2{Backend::avx2, &gemm_avx2, &sq_dists_avx2};

} // namespace

namespace detail {
const Table* avx2_table() { return &kAvx2; }
} // namespace detail

} // namespace minegan::kernels

#else

namespace minegan::kernels::detail {
const Table* avx2_table() { return nullptr; }
} // namespace minegan::kernels::detail

#endif
