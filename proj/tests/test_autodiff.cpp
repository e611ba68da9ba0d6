#include "doctest.h"

#include "minegan/adam.hpp"
#include "minegan/errors.hpp"
#include "minegan/network.hpp"

#include <cmath>

using namespace minegan;

namespace {

DenseNetwork single_layer(Tensor w, Tensor b, Activation act) {
    Layer l;
    l.weight = std::move(w);
    l.bias = std::move(b);
    l.activation = act;
    return DenseNetwork({l});
}

DenseNetwork random_mlp(std::vector<std::size_t> widths, Activation hidden, Activation out, std::uint64_t seed) {
    auto net = DenseNetwork::mlp(widths, hidden, out);
    Rng rng(seed);
    init_normal(net, 0.5, rng);
    return net;
}

ad::Var half_sum_squares(ad::Binding&, ad::Var out) { return ad::scale(ad::sum_all(ad::square(out)), 0.5); }

} // namespace

TEST_CASE("forward examples") {
    SUBCASE("identity layer") {
        const auto net = single_layer(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros(1, 2), Activation::linear);
        auto pass = forward(net, Tensor::matrix(1, 2, {1, 2}));
        CHECK(pass.value() == Tensor::matrix(1, 2, {1, 2}));
    }
    SUBCASE("relu clamps the negative pre-activation") {
        const auto net = single_layer(Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {1}), Activation::relu);
        CHECK(forward(net, Tensor::matrix(1, 1, {-3})).value().item() == 0.0);
    }
    SUBCASE("two-layer composition") {
        Layer l1{Tensor::matrix(2, 1, {1, 1}), Tensor::zeros(1, 2), Activation::relu};
        Layer l2{Tensor::matrix(1, 2, {1, 1}), Tensor::zeros(1, 1), Activation::linear};
        const DenseNetwork net({l1, l2});
        CHECK(forward(net, Tensor::matrix(1, 1, {2})).value().item() == 4.0);
    }
    SUBCASE("batch axis leads") {
        const auto net = random_mlp({3, 5, 2}, Activation::tanh, Activation::linear, 1);
        const auto pass = forward(net, Tensor::filled(7, 3, 0.1));
        CHECK(pass.value().shape() == Shape{7, 2});
    }
    SUBCASE("shape mismatch names the layer") {
        const auto net = random_mlp({3, 5, 2}, Activation::tanh, Activation::linear, 1);
        try {
            forward(net, Tensor::zeros(1, 4));
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
        }
        Layer a{Tensor::zeros(4, 3), Tensor::zeros(1, 4), Activation::relu};
        Layer b{Tensor::zeros(2, 5), Tensor::zeros(1, 2), Activation::relu};
        CHECK_THROWS_AS(DenseNetwork({a, b}), DimensionError);
    }
}

TEST_CASE("evaluate is bit-identical to the taped forward") {
    const auto net = random_mlp({4, 16, 16, 3}, Activation::leaky_relu, Activation::tanh, 5);
    Rng rng(9);
    const auto x = normal(rng, 10, 4);
    CHECK(bitwise_equal(net.evaluate(x), forward(net, x).value()));
}

TEST_CASE("backward examples") {
    SUBCASE("identity") {
        const auto net = single_layer(Tensor::matrix(1, 1, {1}), Tensor::zeros(1, 1), Activation::linear);
        auto pass = forward(net, Tensor::matrix(1, 1, {0.7}));
        CHECK(backward(pass, Tensor::scalar(1.0)).input.item() == 1.0);
    }
    SUBCASE("inactive relu") {
        const auto net = single_layer(Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {1}), Activation::relu);
        auto pass = forward(net, Tensor::matrix(1, 1, {-3}));
        const auto g = backward(pass, Tensor::scalar(1.0));
        CHECK(g.input.item() == 0.0);
        CHECK(g.parameters[0].item() == 0.0);
    }
    SUBCASE("tanh against closed form and central differences") {
        const auto net = single_layer(Tensor::matrix(1, 1, {1}), Tensor::zeros(1, 1), Activation::tanh);
        auto pass = forward(net, Tensor::matrix(1, 1, {0.5}));
        const double dx = backward(pass, Tensor::scalar(1.0)).input.item();
        const double h = 1e-6;
        const double fd = (std::tanh(0.5 + h) - std::tanh(0.5 - h)) / (2 * h);
        CHECK(dx == doctest::Approx(1.0 - std::tanh(0.5) * std::tanh(0.5)).epsilon(1e-14));
        CHECK(dx == doctest::Approx(fd).epsilon(1e-8));
        CHECK(dx == doctest::Approx(0.786448).epsilon(1e-6));
    }
    SUBCASE("frozen layers still pass gradients upstream") {
        auto net = random_mlp({2, 4, 1}, Activation::tanh, Activation::linear, 3);
        auto reference = forward(net, Tensor::matrix(1, 2, {0.3, -0.2}));
        const auto g0 = backward(reference, Tensor::scalar(1.0));
        net.set_frozen(true);
        auto frozen = forward(net, Tensor::matrix(1, 2, {0.3, -0.2}));
        const auto g1 = backward(frozen, Tensor::scalar(1.0));
        CHECK(bitwise_equal(g0.input, g1.input));
        CHECK(bitwise_equal(g0.parameters[0], g1.parameters[0]));
    }
    SUBCASE("seed shape must match") {
        const auto net = random_mlp({2, 3}, Activation::linear, Activation::linear, 3);
        auto pass = forward(net, Tensor::zeros(2, 2));
        CHECK_THROWS_AS(backward(pass, Tensor::scalar(1.0)), DimensionError);
    }
    SUBCASE("consumed graph") {
        const auto net = random_mlp({2, 3}, Activation::linear, Activation::linear, 3);
        auto pass = forward(net, Tensor::zeros(1, 2));
        backward(pass, Tensor::filled(1, 3, 1.0));
        CHECK_THROWS_AS(backward(pass, Tensor::filled(1, 3, 1.0)), GraphReuseError);
    }
}

TEST_CASE("grad_check examples") {
    SUBCASE("linear network, quadratic loss") {
        const auto net = random_mlp({3, 2}, Activation::linear, Activation::linear, 4);
        CHECK(grad_check(net, Tensor::matrix(2, 3, {1, 2, 3, -1, 0.5, 0}), half_sum_squares, 1e-5) < 1e-7);
    }
    SUBCASE("three-layer tanh net") {
        const auto net = random_mlp({3, 8, 8, 2}, Activation::tanh, Activation::tanh, 17);
        Rng rng(2);
        CHECK(grad_check(net, normal(rng, 4, 3), half_sum_squares, 1e-5) < 1e-4);
    }
    SUBCASE("frozen layer is skipped, trainables still check") {
        auto net = random_mlp({3, 8, 2}, Activation::tanh, Activation::linear, 21);
        net.layer(0).frozen = true;
        Rng rng(3);
        const auto report = grad_check_report(net, normal(rng, 4, 3), half_sum_squares, 1e-5);
        CHECK(report.skipped_frozen == 3 * 8 + 8);
        CHECK(report.checked == 8 * 2 + 2);
        CHECK(report.max_relative_error < 1e-4);
    }
    CHECK_THROWS_AS(grad_check(DenseNetwork::mlp(std::vector<std::size_t>{1, 1}, Activation::linear,
                                                 Activation::linear),
                               Tensor::zeros(1, 1), half_sum_squares, 0.0),
                    UsageError);
}

TEST_CASE("grad_check holds for every activation over many seeds") {
    for (auto act : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::linear}) {
        CAPTURE(activation_name(act));
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto net = random_mlp({3, 6, 5, 2}, act, Activation::linear, seed);
            Rng rng(seed + 100);
            CHECK(grad_check(net, normal(rng, 3, 3), half_sum_squares, 1e-5) < 1e-4);
        }
    }
}

TEST_CASE("adjoint is linear in the seed") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto net = random_mlp({3, 7, 2}, Activation::tanh, Activation::linear, seed);
        Rng rng(seed);
        const auto x = normal(rng, 4, 3);
        const auto s1 = normal(rng, 4, 2);
        const auto s2 = normal(rng, 4, 2);
        Tensor s12 = s1;
        for (std::size_t i = 0; i < s12.size(); ++i) s12[i] += s2[i];
        auto p1 = forward(net, x);
        auto p2 = forward(net, x);
        auto p12 = forward(net, x);
        const auto g1 = backward(p1, s1);
        const auto g2 = backward(p2, s2);
        const auto g12 = backward(p12, s12);
        for (std::size_t p = 0; p < g12.parameters.size(); ++p) {
            for (std::size_t i = 0; i < g12.parameters[p].size(); ++i) {
                CHECK(g12.parameters[p][i] ==
                      doctest::Approx(g1.parameters[p][i] + g2.parameters[p][i]).epsilon(1e-12).scale(1.0));
            }
        }
    }
}

TEST_CASE("identical seeds give bit-identical results") {
    auto run = [] {
        const auto net = random_mlp({2, 9, 9, 1}, Activation::leaky_relu, Activation::linear, 77);
        Rng rng(78);
        auto pass = forward(net, normal(rng, 5, 2));
        return backward(pass, Tensor::filled(5, 1, 1.0));
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t p = 0; p < a.parameters.size(); ++p) CHECK(bitwise_equal(a.parameters[p], b.parameters[p]));
}

TEST_CASE("second-order gradients match finite differences of first-order ones") {
    // d/dw of sum_i (d/dx tanh(w x_i))^2, checked against central differences.
    const std::vector<double> xs{0.3, -0.8, 1.1};
    auto objective = [&](double w, bool differentiate) {
        ad::Tape tape;
        const auto wv = tape.leaf(Tensor::scalar(w));
        const auto x = tape.leaf(Tensor::matrix(3, 1, {xs[0], xs[1], xs[2]}));
        const auto y = ad::sum_all(ad::tanh(ad::matmul(x, wv)));
        const auto gx = tape.grad(y, std::vector<ad::Var>{x})[0];
        const auto obj = ad::sum_all(ad::square(gx));
        if (!differentiate) return obj.value().item();
        return tape.backward(obj, Tensor::scalar(1.0), std::vector<ad::Var>{wv})[0].item();
    };
    const double w = 0.9;
    const double h = 1e-5;
    const double fd = (objective(w + h, false) - objective(w - h, false)) / (2 * h);
    CHECK(objective(w, true) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("non-finite values are reported") {
    ad::Tape tape;
    const auto x = tape.leaf(Tensor::scalar(-1.0));
    CHECK_THROWS_AS(ad::sqrt(x), NumericError);
    const auto z = tape.leaf(Tensor::scalar(0.0));
    CHECK_THROWS_AS(ad::div(x, z), NumericError);
}

TEST_CASE("softmax cross-entropy gradient") {
    ad::Tape tape;
    const auto logits = tape.leaf(Tensor::matrix(2, 3, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0}));
    const Tensor targets = Tensor::matrix(2, 3, {0, 1, 0, 1, 0, 0});
    const auto loss = ad::softmax_xent(logits, targets);
    const auto g = tape.backward(loss, Tensor::scalar(1.0), std::vector<ad::Var>{logits})[0];
    // Central differences on the closed-form loss.
    auto ce = [&](Tensor z) {
        double total = 0;
        for (std::size_t r = 0; r < 2; ++r) {
            double denom = 0;
            for (std::size_t c = 0; c < 3; ++c) denom += std::exp(z(r, c));
            for (std::size_t c = 0; c < 3; ++c) total -= targets(r, c) * (z(r, c) - std::log(denom));
        }
        return total / 2;
    };
    const Tensor base = logits.value();
    for (std::size_t i = 0; i < base.size(); ++i) {
        Tensor up = base, dn = base;
        up[i] += 1e-6;
        dn[i] -= 1e-6;
        CHECK(g[i] == doctest::Approx((ce(up) - ce(dn)) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("adam examples") {
    SUBCASE("first step moves by the learning rate") {
        Tensor w = Tensor::scalar(0.0);
        std::vector<Tensor*> params{&w};
        auto state = AdamState::for_parameters(std::vector<const Tensor*>{&w}, {0.1, 0.9, 0.999, 1e-8});
        adam_step(params, std::vector<Tensor>{Tensor::scalar(1.0)}, state);
        CHECK(w.item() == doctest::Approx(-0.1).epsilon(1e-6));
        CHECK(state.step == 1);
    }
    SUBCASE("zero gradient leaves parameters and decays moments") {
        Tensor w = Tensor::scalar(2.0);
        std::vector<Tensor*> params{&w};
        auto state = AdamState::for_parameters(std::vector<const Tensor*>{&w}, {0.1, 0.9, 0.999, 1e-8});
        state.first_moment[0][0] = 0.0;
        adam_step(params, std::vector<Tensor>{Tensor::scalar(0.0)}, state);
        CHECK(w.item() == 2.0);
        state.first_moment[0][0] = 0.5;
        state.second_moment[0][0] = 0.25;
        Tensor w2 = w;
        adam_step(params, std::vector<Tensor>{Tensor::scalar(0.0)}, state);
        CHECK(state.first_moment[0][0] == doctest::Approx(0.45));
        CHECK(state.second_moment[0][0] == doctest::Approx(0.24975));
        CHECK(state.step == 2);
    }
    SUBCASE("two identical steps") {
        Tensor w = Tensor::scalar(0.0);
        std::vector<Tensor*> params{&w};
        auto state = AdamState::for_parameters(std::vector<const Tensor*>{&w}, {0.1, 0.9, 0.999, 1e-8});
        adam_step(params, std::vector<Tensor>{Tensor::scalar(1.0)}, state);
        const double d1 = w.item();
        adam_step(params, std::vector<Tensor>{Tensor::scalar(1.0)}, state);
        const double d2 = w.item() - d1;
        CHECK(d1 < 0);
        CHECK(d2 < 0);
        CHECK(std::abs(d2 / d1 - 1.0) < 0.01);
    }
    SUBCASE("frozen layers keep values and moments") {
        auto net = random_mlp({2, 3, 1}, Activation::relu, Activation::linear, 1);
        net.layer(0).frozen = true;
        const auto before = net;
        auto state = AdamState::for_network(net);
        std::vector<Tensor> grads;
        for (const auto* p : net.parameters()) grads.push_back(Tensor(p->shape(), std::vector<double>(p->size(), 1.0)));
        adam_step(net, grads, state);
        CHECK(net.layer(0) == before.layer(0));
        CHECK_FALSE(net.layer(1) == before.layer(1));
        CHECK(state.first_moment[0] == Tensor(before.layer(0).weight.shape()));
    }
    SUBCASE("shape mismatch") {
        Tensor w = Tensor::zeros(2, 2);
        std::vector<Tensor*> params{&w};
        auto state = AdamState::for_parameters(std::vector<const Tensor*>{&w});
        CHECK_THROWS_AS(adam_step(params, std::vector<Tensor>{Tensor::zeros(1, 3)}, state), DimensionError);
    }
}
