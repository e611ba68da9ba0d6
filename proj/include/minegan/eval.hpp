#pragma once

#include "minegan/data.hpp"
#include "minegan/network.hpp"
#include "minegan/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"

namespace minegan {

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased
};

Moments moments(const Tensor& points);

// Eigenvalues of the symmetric inputs below this are reported, not clamped.
inline constexpr double kNegativeEigenTolerance = 1e-10;

// Square root of a symmetric positive semi-definite matrix.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s);

// (A B)^{1/2} for SPD A and PSD B, through the symmetric form
// A^{1/2} B A^{1/2}. Throws NumericError listing offending eigenvalues.
Eigen::MatrixXd product_sqrt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double frechet_distance(const Moments& a, const Moments& b);
// Needs n >= 2 rows each and equal dimension.
double frechet_distance(const Tensor& a, const Tensor& b);

// Median pairwise distance over the pooled sets, on at most 1000 evenly
// strided points.
double median_bandwidth(const Tensor& a, const Tensor& b);
// Biased MMD^2 under exp(-|x-y|^2 / (2 sigma^2)).
double mmd2_biased(const Tensor& a, const Tensor& b, double sigma);
// sqrt(max(0, biased MMD^2)); sigma <= 0 selects the median heuristic.
double kmmd(const Tensor& a, const Tensor& b, double sigma = 0.0);

// Mean over features of the unbiased per-feature variance.
double mean_variance(const Tensor& a);

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::size_t classes() const = 0;
    virtual bool trained() const = 0;
    virtual std::vector<std::size_t> predict(const Tensor& points) const = 0;
};

// Fraction of rows whose predicted class differs from target_class.
// Throws UsageError for an untrained classifier.
double classifier_error(const Tensor& samples, std::size_t target_class, const Classifier& clf);

struct ClassifierConfig {
    std::size_t hidden = 64;
    std::size_t iterations = 500;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

// Two-hidden-layer relu MLP trained with softmax cross-entropy.
class DenseClassifier final : public Classifier {
public:
    DenseClassifier() = default;
    DenseClassifier(DenseNetwork net, bool trained) : net_(std::move(net)), trained_(trained) {}

    static DenseClassifier train(const SampleSource& data, const ClassifierConfig& config);

    std::size_t classes() const override { return net_.output_dim(); }
    bool trained() const override { return trained_; }
    std::vector<std::size_t> predict(const Tensor& points) const override;
    const DenseNetwork& network() const noexcept { return net_; }

private:
    DenseNetwork net_;
    bool trained_ = false;
};

struct EvalReport {
    double frechet = 0.0;
    double kmmd = 0.0;
    double mean_variance = 0.0;
    std::optional<double> classifier_error;
    std::size_t n_generated = 0;
    std::size_t n_real = 0;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

struct EvalConfig {
    std::size_t cap = 10000;
    double bandwidth = 0.0;  // <= 0: median heuristic
    std::uint64_t seed = 0;
    const Classifier* classifier = nullptr;
    std::optional<std::size_t> target_class;
};

// Draws n generated points under a seed.
using GeneratedSource = std::function<Tensor(std::size_t n, std::uint64_t seed)>;

// Uses min(cap, |real|) generated points; a real set above the cap is
// subsampled to the cap.
EvalReport build_report(const GeneratedSource& generated, const Tensor& real, const EvalConfig& config);

} // namespace minegan
