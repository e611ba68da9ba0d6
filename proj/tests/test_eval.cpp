#include "doctest.h"

#include "minegan/errors.hpp"
#include "minegan/eval.hpp"
#include "support.hpp"

#include <cmath>

using namespace minegan;
using namespace minegan::testing;

namespace {

Tensor col(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({n, 1}, std::move(v));
}

Eigen::MatrixXd random_spd(std::size_t d, Rng& rng) {
    const auto g = normal(rng, d, d);
    Eigen::MatrixXd m(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) m(i, j) = g(i, j);
    }
    return m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

class FixedClassifier final : public Classifier {
public:
    FixedClassifier(std::size_t classes, std::function<std::size_t(std::size_t)> rule)
        : classes_(classes), rule_(std::move(rule)) {}
    std::size_t classes() const override { return classes_; }
    bool trained() const override { return true; }
    std::vector<std::size_t> predict(const Tensor& points) const override {
        std::vector<std::size_t> out(points.rows());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = rule_(i);
        return out;
    }

private:
    std::size_t classes_;
    std::function<std::size_t(std::size_t)> rule_;
};

const MixtureSpec& three_blobs() {
    static const auto spec = blobs({{-3.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.1);
    return spec;
}

} // namespace

TEST_CASE("Frechet distance examples") {
    const double h = std::sqrt(0.5);
    const auto unit = col({-h, h});  // mean 0, unbiased variance 1
    SUBCASE("identical sets") { CHECK(frechet_distance(unit, unit) == doctest::Approx(0.0).epsilon(1e-12)); }
    SUBCASE("shifted mean") { CHECK(frechet_distance(unit, col({1 - h, 1 + h})) == doctest::Approx(1.0)); }
    SUBCASE("doubled standard deviation") {
        const double r = std::sqrt(2.0);  // variance 4
        CHECK(frechet_distance(unit, col({-r, r})) == doctest::Approx(1.0));
    }
    SUBCASE("too few rows") { CHECK_THROWS(frechet_distance(col({1.0}), unit)); }
    SUBCASE("dimension mismatch") { CHECK_THROWS_AS(frechet_distance(unit, Tensor::zeros(3, 2)), DimensionError); }
}

TEST_CASE("Frechet distance agrees with the 2-D closed form") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = normal(rng, 50, 2);
        auto b = normal(rng, 60, 2, 0.5, 2.0);
        for (std::size_t i = 0; i < b.rows(); ++i) b(i, 1) += 0.7 * b(i, 0);
        CHECK(frechet_distance(a, b) == doctest::Approx(frechet_2d_oracle(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("Frechet distance is symmetric, non-negative and separates") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = normal(rng, 40, 3);
        const auto b = normal(rng, 40, 3, 1.0, 1.5);
        const double ab = frechet_distance(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab == doctest::Approx(frechet_distance(b, a)).epsilon(1e-10));
    }
    const auto a = sample_mixture(blob(0.0, 0.0, 1.0), 1000, 1).points;
    const auto b = sample_mixture(blob(3.0, 0.0, 1.0), 1000, 2).points;
    const auto c = sample_mixture(blob(6.0, 0.0, 1.0), 1000, 3).points;
    CHECK(frechet_distance(a, b) < frechet_distance(a, c));
}

TEST_CASE("product square root squares back") {
    Rng rng(8);
    for (std::size_t d = 1; d <= 16; ++d) {
        const auto a = random_spd(d, rng);
        const auto b = random_spd(d, rng);
        const auto s = product_sqrt(a, b);
        const Eigen::MatrixXd ab = a * b;
        CHECK((s * s - ab).norm() / ab.norm() < 1e-8);
    }
}

TEST_CASE("negative eigenvalues") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    SUBCASE("tiny negatives are clamped") {
        Eigen::MatrixXd b(2, 2);
        b << 1.0, 0.0, 0.0, -1e-12;
        const auto s = product_sqrt(a, b);
        CHECK(s(0, 0) == doctest::Approx(1.0));
        CHECK(s(1, 1) == 0.0);
    }
    SUBCASE("larger negatives are reported") {
        Eigen::MatrixXd b(2, 2);
        b << 1.0, 0.0, 0.0, -0.5;
        try {
            product_sqrt(a, b);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("-0.5") != std::string::npos);
        }
    }
}

TEST_CASE("KMMD examples") {
    CHECK(kmmd(col({0.0}), col({1.0}), 1.0) == doctest::Approx(std::sqrt(2.0 - 2.0 * std::exp(-0.5))).epsilon(1e-12));
    CHECK(kmmd(col({0.0}), col({1.0}), 1.0) == doctest::Approx(0.887096).epsilon(1e-6));

    Rng rng(3);
    const auto a = normal(rng, 30, 2);
    const auto b = normal(rng, 25, 2, 0.5, 1.0);
    CHECK(kmmd(a, a, 0.7) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kmmd(a, a) < 1e-6);
    CHECK(kmmd(a, b, 0.7) == kmmd(b, a, 0.7));
    CHECK(kmmd(a, b) == doctest::Approx(kmmd(b, a)).epsilon(1e-12));
}

TEST_CASE("median bandwidth") {
    // Pooled {0, 1, 3}: pairwise distances 1, 2, 3.
    CHECK(median_bandwidth(col({0.0, 1.0}), col({3.0})) == 2.0);
}

TEST_CASE("biased MMD^2 is never negative") {
    Rng rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + static_cast<std::size_t>(trial % 7);
        const auto a = normal(rng, n, 3);
        const auto b = normal(rng, n + 1, 3, 0.1 * (trial % 5), 1.0);
        CHECK(mmd2_biased(a, b, 0.2 + 0.01 * (trial % 50)) >= 0.0);
    }
}

TEST_CASE("KMMD grows with separation") {
    const auto a = sample_mixture(blob(0.0, 0.0, 1.0), 2000, 1).points;
    double last = -1.0;
    for (const double t : {0.0, 1.0, 2.0, 4.0}) {
        const auto b = sample_mixture(blob(t, 0.0, 1.0), 2000, 2).points;
        const double k = kmmd(a, b);
        CHECK(k > last);
        last = k;
    }
}

TEST_CASE("mean variance") {
    CHECK(mean_variance(Tensor::filled(5, 3, 2.5)) == 0.0);
    CHECK(mean_variance(col({0.0, 2.0})) == 2.0);
    Rng rng(1);
    auto a = normal(rng, 20, 4);
    const double base = mean_variance(a);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= 3.0;
    CHECK(mean_variance(a) == doctest::Approx(9.0 * base).epsilon(1e-12));
}

TEST_CASE("classifier error") {
    const auto points = Tensor::zeros(1000, 2);
    CHECK(classifier_error(points, 2, FixedClassifier(3, [](std::size_t) { return std::size_t{2}; })) == 0.0);

    Rng rng(5);
    std::uniform_int_distribution<std::size_t> pick(0, 3);
    std::vector<std::size_t> guesses(points.rows());
    for (auto& g : guesses) g = pick(rng);
    const FixedClassifier chance(4, [&](std::size_t i) { return guesses[i]; });
    CHECK(classifier_error(points, 1, chance) == doctest::Approx(0.75).epsilon(0.05));

    CHECK_THROWS_AS(classifier_error(points, 0, DenseClassifier()), UsageError);
}

TEST_CASE("dense classifier separates well-separated blobs") {
    ClassifierConfig config;
    config.seed = 2;
    const auto clf = DenseClassifier::train(MixtureSource(three_blobs()), config);
    REQUIRE(clf.trained());
    CHECK(clf.classes() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& m = three_blobs().components()[k].mean;
        const auto pts = sample_mixture(blob(m[0], m[1], 0.1), 500, 10 + k).points;
        CHECK(classifier_error(pts, k, clf) < 0.02);
    }
    CHECK_THROWS_AS(classifier_error(Tensor::zeros(3, 2), 3, clf), UsageError);
}

TEST_CASE("report assembly") {
    const auto spec = blob(0.0, 0.0, 1.0);
    const GeneratedSource gen = [&](std::size_t n, std::uint64_t seed) {
        return sample_mixture(spec, n, seed).points;
    };
    const auto real = sample_mixture(spec, 100, 9).points;

    SUBCASE("small real sets cap the generated count") {
        const auto r = build_report(gen, real, {});
        CHECK(r.n_generated == 100);
        CHECK(r.n_real == 100);
        CHECK(r.frechet >= 0.0);
        CHECK(r.kmmd >= 0.0);
        CHECK(r.mean_variance > 0.0);
        CHECK_FALSE(r.classifier_error.has_value());
    }
    SUBCASE("large real sets are subsampled to the cap") {
        EvalConfig c;
        c.cap = 40;
        const auto r = build_report(gen, real, c);
        CHECK(r.n_generated == 40);
        CHECK(r.n_real == 40);
    }
    SUBCASE("zero cap") {
        EvalConfig c;
        c.cap = 0;
        CHECK_THROWS_AS(build_report(gen, real, c), UsageError);
    }
    SUBCASE("deterministic under a seed") {
        EvalConfig c;
        c.seed = 4;
        CHECK(build_report(gen, real, c).to_json() == build_report(gen, real, c).to_json());
    }
    SUBCASE("JSON keys and round trip") {
        const FixedClassifier always(2, [](std::size_t) { return std::size_t{1}; });
        EvalConfig c;
        c.classifier = &always;
        c.target_class = 1;
        const auto r = build_report(gen, real, c);
        const auto j = r.to_json();
        std::vector<std::string> keys;
        for (const auto& [k, v] : j.items()) keys.push_back(k);
        CHECK(keys == std::vector<std::string>{"frechet", "kmmd", "mean_variance", "classifier_error", "n_generated",
                                               "n_real", "seed"});
        CHECK(j["classifier_error"] == 0.0);
        const auto back = EvalReport::from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.to_json() == j);
        EvalReport plain;
        CHECK(plain.to_json()["classifier_error"].is_null());
    }
}
