#include "doctest.h"

#include "minegan/errors.hpp"
#include "minegan/kernels.hpp"
#include "minegan/rng.hpp"

#include <cmath>
#include <vector>

using namespace minegan;

namespace {

struct GemmCase {
    std::size_t m, n, k;
};

// Plain triple loop, independent of every backend.
std::vector<double> naive_gemm(bool ta, bool tb, const GemmCase& c, const std::vector<double>& a,
                               const std::vector<double>& b, std::vector<double>& magnitude) {
    std::vector<double> out(c.m * c.n, 0.0);
    magnitude.assign(c.m * c.n, 0.0);
    for (std::size_t i = 0; i < c.m; ++i) {
        for (std::size_t j = 0; j < c.n; ++j) {
            long double acc = 0.0L;
            double mag = 0.0;
            for (std::size_t p = 0; p < c.k; ++p) {
                const double av = ta ? a[p * c.m + i] : a[i * c.k + p];
                const double bv = tb ? b[j * c.k + p] : b[p * c.n + j];
                acc += static_cast<long double>(av) * bv;
                mag += std::abs(av * bv);
            }
            out[i * c.n + j] = static_cast<double>(acc);
            magnitude[i * c.n + j] = mag;
        }
    }
    return out;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    const auto t = normal(rng, 1, n);
    return {t.values().begin(), t.values().end()};
}

} // namespace

TEST_CASE("every available backend matches the reference gemm") {
    const std::vector<GemmCase> cases{{1, 1, 1},  {1, 2, 8},   {3, 5, 7},   {4, 16, 2},  {5, 17, 3},
                                      {8, 64, 8}, {64, 64, 64}, {7, 33, 65}, {2, 1, 130}, {16, 3, 0}};
    Rng rng(7);
    for (auto backend : kernels::available_backends()) {
        const auto& table = kernels::table(backend);
        CAPTURE(kernels::name(backend));
        for (const auto& c : cases) {
            for (int mode = 0; mode < 4; ++mode) {
                const bool ta = mode & 1;
                const bool tb = mode & 2;
                const auto a = random_vec(rng, c.m * c.k);
                const auto b = random_vec(rng, c.k * c.n);
                std::vector<double> mag;
                const auto expected = naive_gemm(ta, tb, c, a, b, mag);
                std::vector<double> got(c.m * c.n, 123.0);
                table.gemm(ta, tb, c.m, c.n, c.k, a.data(), b.data(), got.data());
                for (std::size_t i = 0; i < got.size(); ++i) {
                    CHECK(std::abs(got[i] - expected[i]) <= 2.3e-16 * static_cast<double>(c.k + 1) * mag[i]);
                }
            }
        }
    }
}

TEST_CASE("vector backends agree with the scalar backend on squared distances") {
    Rng rng(11);
    const auto& ref = kernels::table(kernels::Backend::scalar);
    for (auto backend : kernels::available_backends()) {
        const auto& table = kernels::table(backend);
        for (std::size_t d : {1u, 2u, 5u, 16u}) {
            for (std::size_t m : {1u, 3u, 4u, 9u, 100u}) {
                const auto x = random_vec(rng, d);
                const auto bt = random_vec(rng, d * m);
                std::vector<double> a(m), b(m);
                ref.sq_dists(x.data(), bt.data(), d, m, a.data());
                table.sq_dists(x.data(), bt.data(), d, m, b.data());
                for (std::size_t j = 0; j < m; ++j) CHECK(b[j] == doctest::Approx(a[j]).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("squared distances match a direct evaluation") {
    // points (0,0), (3,4), (1,1) feature-major
    const std::vector<double> bt{0.0, 3.0, 1.0, 0.0, 4.0, 1.0};
    const std::vector<double> x{0.0, 0.0};
    std::vector<double> out(3);
    kernels::active().sq_dists(x.data(), bt.data(), 2, 3, out.data());
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 25.0);
    CHECK(out[2] == 2.0);
}

TEST_CASE("backend selection") {
    CHECK(kernels::available(kernels::Backend::scalar));
    CHECK(kernels::parse_backend("avx2") == kernels::Backend::avx2);
    CHECK_FALSE(kernels::parse_backend("sse9").has_value());
    const auto before = kernels::active_backend();
    kernels::select(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    kernels::select(before);
    for (auto b : {kernels::Backend::avx2, kernels::Backend::neon}) {
        if (!kernels::available(b)) CHECK_THROWS_AS(kernels::select(b), UsageError);
    }
}
