#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation; vector variants (AVX2+FMA on x86-64, NEON on AArch64) are
// chosen once per process from CPU features, or forced with the
// MINEGAN_KERNELS environment variable (scalar | avx2 | neon | auto).
namespace minegan::kernels {

enum class Backend { scalar, avx2, neon };

struct Table {
    Backend backend;

    // c[m x n] = op(a) * op(b), overwriting c. op(a) is m x k and op(b) is
    // k x n; with trans_a the stored a is k x m, with trans_b the stored b is
    // n x k. All buffers row-major and dense.
    void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c);

    // out[j] = sum_t (x[t] - bt[t * m + j])^2 for j < m. bt holds m points of
    // dimension d stored feature-major (d x m).
    void (*sq_dists)(const double* x, const double* bt, std::size_t d, std::size_t m,
                     double* out);
};

const Table& active();
Backend active_backend();

// Pin a backend for the rest of the process. Throws UsageError when the
// backend was not compiled in or the CPU lacks it.
void select(Backend backend);

bool available(Backend backend);
std::vector<Backend> available_backends();
Backend best_available();
const Table& table(Backend backend);

std::string_view name(Backend backend);
std::optional<Backend> parse_backend(std::string_view text);

namespace detail {
const Table* scalar_table();
const Table* avx2_table();
const Table* neon_table();
} // namespace detail

} // namespace minegan::kernels
