#include "minegan/eval.hpp"

#include "minegan/adam.hpp"
#include "minegan/errors.hpp"
#include "minegan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace minegan {

Moments moments(const Tensor& points) {
    const auto n = points.rows();
    const auto d = points.cols();
    if (n < 2) throw DimensionError("moments need at least 2 samples, got " + std::to_string(n));
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(points.data(), n, d);
    Moments m;
    m.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
    m.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    return m;
}

namespace {

Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& values, const char* what) {
    Eigen::VectorXd out = values;
    std::ostringstream bad;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out[i] < -kNegativeEigenTolerance || !std::isfinite(out[i])) bad << ' ' << out[i];
        else if (out[i] < 0.0) out[i] = 0.0;
    }
    if (!bad.str().empty()) throw NumericError(std::string(what) + " is not positive semi-definite; eigenvalues:" + bad.str());
    return out;
}

} // namespace

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const auto ev = checked_eigenvalues(es.eigenvalues(), "matrix");
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd product_sqrt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a);
    if (ea.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const auto va = checked_eigenvalues(ea.eigenvalues(), "first factor");
    if (va.minCoeff() <= 0.0) throw NumericError("first factor is singular");
    const Eigen::MatrixXd& q = ea.eigenvectors();
    const Eigen::MatrixXd root = q * va.cwiseSqrt().asDiagonal() * q.transpose();
    const Eigen::MatrixXd inv_root = q * va.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
    const Eigen::MatrixXd mid = root * b * root;
    return root * psd_sqrt(0.5 * (mid + mid.transpose())) * inv_root;
}

double frechet_distance(const Moments& a, const Moments& b) {
    if (a.mean.size() != b.mean.size()) throw DimensionError("frechet: dimension mismatch");
    const Eigen::MatrixXd root = psd_sqrt(a.cov);
    const Eigen::MatrixXd mid = root * b.cov * root;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (mid + mid.transpose()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const auto ev = checked_eigenvalues(es.eigenvalues(), "covariance product");
    const double trace_sqrt = ev.cwiseSqrt().sum();
    const double fd = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
    // Rounding can leave a tiny negative value for identical moments.
    return std::max(fd, 0.0);
}

double frechet_distance(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw DimensionError("frechet: dimension mismatch");
    return frechet_distance(moments(a), moments(b));
}

namespace {

// Feature-major copy for the distance kernel.
std::vector<double> transpose_of(const Tensor& t) {
    const auto n = t.rows();
    const auto d = t.cols();
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[j * n + i] = t(i, j);
    }
    return out;
}

// Sum over all pairs of exp(-|x - y|^2 * gamma).
double kernel_sum(const Tensor& x, const Tensor& y, double gamma) {
    const auto yt = transpose_of(y);
    const auto& k = kernels::active();
    std::vector<double> d2(y.rows());
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        k.sq_dists(x.data() + i * x.cols(), yt.data(), x.cols(), y.rows(), d2.data());
        double row = 0.0;
        for (double v : d2) row += std::exp(-v * gamma);
        total += row;
    }
    return total;
}

} // namespace

double median_bandwidth(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw DimensionError("kmmd: dimension mismatch");
    const auto total = a.rows() + b.rows();
    const std::size_t take = std::min<std::size_t>(total, 1000);
    Tensor pooled({take, a.cols()});
    for (std::size_t s = 0; s < take; ++s) {
        const std::size_t idx = s * total / take;
        const auto src = idx < a.rows() ? a.row_span(idx) : b.row_span(idx - a.rows());
        std::copy(src.begin(), src.end(), pooled.row_span(s).begin());
    }
    std::vector<double> dists;
    dists.reserve(take * (take - 1) / 2);
    for (std::size_t i = 0; i < take; ++i) {
        for (std::size_t j = i + 1; j < take; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.cols(); ++c) {
                const double diff = pooled(i, c) - pooled(j, c);
                s += diff * diff;
            }
            dists.push_back(std::sqrt(s));
        }
    }
    if (dists.empty()) return 1.0;
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    // Degenerate pools (all points equal) fall back to unit bandwidth.
    return *mid > 0.0 ? *mid : 1.0;
}

double mmd2_biased(const Tensor& a, const Tensor& b, double sigma) {
    if (a.cols() != b.cols()) throw DimensionError("kmmd: dimension mismatch");
    if (a.rows() == 0 || b.rows() == 0) throw DimensionError("kmmd: empty set");
    if (!(sigma > 0.0)) throw UsageError("kmmd: bandwidth must be positive");
    const double gamma = 1.0 / (2.0 * sigma * sigma);
    const double na = static_cast<double>(a.rows());
    const double nb = static_cast<double>(b.rows());
    const double aa = kernel_sum(a, a, gamma) / (na * na);
    const double bb = kernel_sum(b, b, gamma) / (nb * nb);
    const double ab = kernel_sum(a, b, gamma) / (na * nb);
    return aa + bb - 2.0 * ab;
}

double kmmd(const Tensor& a, const Tensor& b, double sigma) {
    const double s = sigma > 0.0 ? sigma : median_bandwidth(a, b);
    return std::sqrt(std::max(0.0, mmd2_biased(a, b, s)));
}

double mean_variance(const Tensor& a) {
    const auto n = a.rows();
    if (n < 2) throw DimensionError("mean variance needs at least 2 samples");
    double total = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += a(i, c);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (a(i, c) - mean) * (a(i, c) - mean);
        total += ss / static_cast<double>(n - 1);
    }
    return total / static_cast<double>(a.cols());
}

// ---- classifier ------------------------------------------------------------

double classifier_error(const Tensor& samples, std::size_t target_class, const Classifier& clf) {
    if (!clf.trained()) throw UsageError("classifier_error: classifier is untrained");
    if (target_class >= clf.classes()) throw UsageError("classifier_error: target class out of range");
    if (samples.rows() == 0) throw DimensionError("classifier_error: no samples");
    const auto pred = clf.predict(samples);
    const auto wrong = std::count_if(pred.begin(), pred.end(), [&](std::size_t p) { return p != target_class; });
    return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

DenseClassifier DenseClassifier::train(const SampleSource& data, const ClassifierConfig& config) {
    const auto classes = data.classes();
    if (classes < 2) throw UsageError("classifier needs labelled data with at least 2 classes");
    const std::size_t widths[] = {data.dim(), config.hidden, config.hidden, classes};
    auto net = DenseNetwork::mlp(widths, Activation::relu, Activation::linear);
    Rng rng(derive_seed(config.seed, 7));
    init_he(net, rng);
    auto state = AdamState::for_network(net, {config.learning_rate, 0.9, 0.999, 1e-8});
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto batch = data.draw_labeled(config.batch_size, rng);
        Tensor onehot = Tensor::zeros(batch.points.rows(), classes);
        for (std::size_t i = 0; i < batch.labels.size(); ++i) onehot(i, batch.labels[i]) = 1.0;
        ad::Tape tape;
        ad::Binding b(tape);
        const auto loss = ad::softmax_xent(net.forward(b, tape.constant(batch.points)), onehot);
        const auto params = net.parameters();
        const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
        adam_step(net, tape.backward(loss, Tensor::scalar(1.0), vars), state);
    }
    return DenseClassifier(std::move(net), true);
}

std::vector<std::size_t> DenseClassifier::predict(const Tensor& points) const {
    const auto logits = net_.evaluate(points);
    std::vector<std::size_t> out(points.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto row = logits.row_span(i);
        out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

// ---- report ------------------------------------------------------------------

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["frechet"] = frechet;
    j["kmmd"] = kmmd;
    j["mean_variance"] = mean_variance;
    j["classifier_error"] = classifier_error ? nlohmann::ordered_json(*classifier_error) : nlohmann::ordered_json();
    j["n_generated"] = n_generated;
    j["n_real"] = n_real;
    j["seed"] = seed;
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.frechet = j.at("frechet").get<double>();
        r.kmmd = j.at("kmmd").get<double>();
        r.mean_variance = j.at("mean_variance").get<double>();
        if (!j.at("classifier_error").is_null()) r.classifier_error = j.at("classifier_error").get<double>();
        r.n_generated = j.at("n_generated").get<std::size_t>();
        r.n_real = j.at("n_real").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    return r;
}

EvalReport build_report(const GeneratedSource& generated, const Tensor& real, const EvalConfig& config) {
    if (config.cap == 0) throw UsageError("eval: sample cap must be >= 1");
    if (real.rows() == 0) throw UsageError("eval: real set is empty");
    Tensor reference = real;
    if (real.rows() > config.cap) {
        Rng rng(derive_seed(config.seed, 11));
        std::vector<std::size_t> idx(real.rows());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(config.cap);
        std::sort(idx.begin(), idx.end());
        reference = rows_of(real, idx);
    }
    const std::size_t n = std::min(config.cap, real.rows());
    const Tensor fake = generated(n, derive_seed(config.seed, 12));
    if (fake.rows() != n || fake.cols() != real.cols()) throw DimensionError("eval: generated set has the wrong shape");

    EvalReport r;
    r.frechet = frechet_distance(fake, reference);
    r.kmmd = kmmd(fake, reference, config.bandwidth);
    r.mean_variance = mean_variance(fake);
    if (config.classifier && config.target_class) {
        r.classifier_error = classifier_error(fake, *config.target_class, *config.classifier);
    }
    r.n_generated = n;
    r.n_real = reference.rows();
    r.seed = config.seed;
    return r;
}

} // namespace minegan
