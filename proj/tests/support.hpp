#pragma once

#include "minegan/data.hpp"
#include "minegan/network.hpp"
#include "minegan/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

namespace minegan::testing {

inline DenseNetwork affine(Tensor w, Tensor b, Activation act = Activation::linear) {
    Layer l;
    l.weight = std::move(w);
    l.bias = std::move(b);
    l.activation = act;
    return DenseNetwork({l});
}

// D(x) = w . x + c
inline DenseNetwork linear_critic(std::vector<double> w, double c = 0.0) {
    const auto d = w.size();
    return affine(Tensor({1, d}, std::move(w)), Tensor::matrix(1, 1, {c}));
}

// Maps every latent to `point`.
inline DenseNetwork constant_generator(std::size_t latent, std::vector<double> point) {
    const auto d = point.size();
    return affine(Tensor::zeros(d, latent), Tensor({1, d}, std::move(point)));
}

inline DenseNetwork random_mlp(std::vector<std::size_t> widths, Activation hidden, Activation out, double stddev,
                               std::uint64_t seed) {
    auto net = DenseNetwork::mlp(widths, hidden, out);
    Rng rng(seed);
    init_normal(net, stddev, rng);
    return net;
}

inline MixtureSpec blob(double x, double y, double variance) {
    nlohmann::json j;
    j["components"] = {{{"weight", 1.0}, {"mean", {x, y}}, {"variance", {variance, variance}}}};
    return MixtureSpec::from_json(j);
}

inline MixtureSpec blobs(const std::vector<std::pair<double, double>>& centers, const std::vector<double>& weights,
                         double variance) {
    nlohmann::json j;
    j["components"] = nlohmann::json::array();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        j["components"].push_back({{"weight", weights[i]},
                                   {"mean", {centers[i].first, centers[i].second}},
                                   {"variance", {variance, variance}}});
    }
    return MixtureSpec::from_json(j);
}

// Independent 2-D oracle for the Frechet distance: for 2x2 SPD A, B,
// tr((AB)^{1/2}) = sqrt(tr(AB) + 2 sqrt(det(AB))).
inline double frechet_2d_oracle(const Tensor& a, const Tensor& b) {
    auto stats = [](const Tensor& t, double mu[2], double cov[4]) {
        const double n = static_cast<double>(t.rows());
        mu[0] = mu[1] = 0.0;
        for (std::size_t i = 0; i < t.rows(); ++i) {
            mu[0] += t(i, 0);
            mu[1] += t(i, 1);
        }
        mu[0] /= n;
        mu[1] /= n;
        cov[0] = cov[1] = cov[2] = cov[3] = 0.0;
        for (std::size_t i = 0; i < t.rows(); ++i) {
            const double dx = t(i, 0) - mu[0];
            const double dy = t(i, 1) - mu[1];
            cov[0] += dx * dx;
            cov[1] += dx * dy;
            cov[3] += dy * dy;
        }
        cov[0] /= n - 1;
        cov[1] /= n - 1;
        cov[3] /= n - 1;
        cov[2] = cov[1];
    };
    double ma[2], ca[4], mb[2], cb[4];
    stats(a, ma, ca);
    stats(b, mb, cb);
    const double p00 = ca[0] * cb[0] + ca[1] * cb[2];
    const double p11 = ca[2] * cb[1] + ca[3] * cb[3];
    const double det_a = ca[0] * ca[3] - ca[1] * ca[2];
    const double det_b = cb[0] * cb[3] - cb[1] * cb[2];
    const double tr_sqrt = std::sqrt(p00 + p11 + 2.0 * std::sqrt(det_a * det_b));
    const double dm = (ma[0] - mb[0]) * (ma[0] - mb[0]) + (ma[1] - mb[1]) * (ma[1] - mb[1]);
    return dm + ca[0] + ca[3] + cb[0] + cb[3] - 2.0 * tr_sqrt;
}

inline std::size_t nearest(const MixtureSpec& spec, std::span<const double> x) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t k = 0; k < spec.component_count(); ++k) {
        const auto& m = spec.components()[k].mean;
        double d = 0.0;
        for (std::size_t j = 0; j < m.size(); ++j) d += (x[j] - m[j]) * (x[j] - m[j]);
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    return best;
}

} // namespace minegan::testing
