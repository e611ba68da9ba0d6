#include "doctest.h"

#include "minegan/gan.hpp"
#include "support.hpp"

#include <cmath>

using namespace minegan;
using namespace minegan::testing;

namespace {

Tensor col(std::initializer_list<double> v) { return Tensor({v.size(), 1}, std::vector<double>(v)); }

double plain_mean(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
    return s / static_cast<double>(t.size());
}

GanArchitecture small_arch(std::size_t latent, std::size_t data) {
    GanArchitecture a;
    a.latent_dim = latent;
    a.data_dim = data;
    a.gen_layers = 3;
    a.gen_width = 32;
    a.critic_layers = 3;
    a.critic_width = 32;
    return a;
}

TrainConfig short_run(std::size_t iterations, std::uint64_t seed) {
    TrainConfig c;
    c.iterations = iterations;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("critic loss examples") {
    const auto identity = linear_critic({1.0});
    const auto zero_gen = constant_generator(1, {0.0});
    const auto real = col({2.0});
    const auto noise = Tensor::zeros(1, 1);
    const auto eps = col({0.5});

    SUBCASE("identity critic, no penalty") { CHECK(critic_loss(identity, zero_gen, real, noise, 0.0, eps) == -2.0); }
    SUBCASE("identity critic has unit gradient so the penalty vanishes") {
        CHECK(critic_loss(identity, zero_gen, real, noise, 10.0, eps) == doctest::Approx(-2.0).epsilon(1e-12));
    }
    SUBCASE("constant critic leaves only the penalty") {
        const auto constant = linear_critic({0.0}, 7.0);
        const double gp = gradient_penalty(constant, real, zero_gen.evaluate(noise), eps);
        CHECK(critic_loss(constant, zero_gen, real, noise, 10.0, eps) == doctest::Approx(10.0 * gp));
    }
}

TEST_CASE("generator loss examples") {
    const auto noise = Tensor::filled(4, 2, 0.3);
    CHECK(generator_loss(linear_critic({0.0}, 1.5), constant_generator(2, {9.0}), noise) == -1.5);
    CHECK(generator_loss(linear_critic({1.0}), constant_generator(2, {3.0}), noise) == -3.0);
}

TEST_CASE("gradient penalty examples") {
    const auto real = col({1.0, -2.0});
    const auto fake = col({0.5, 4.0});
    const auto eps = col({0.3, 0.9});
    CHECK(gradient_penalty(linear_critic({2.0}), real, fake, eps) == doctest::Approx(1.0).epsilon(1e-9));
    // sqrt(1e-12) keeps the norm away from zero.
    CHECK(gradient_penalty(linear_critic({0.0}), real, fake, eps) == doctest::Approx(1.0).epsilon(1e-5));
    const auto r2 = Tensor::matrix(2, 2, {1, 2, -1, 0});
    const auto f2 = Tensor::matrix(2, 2, {0, 0, 3, 3});
    CHECK(gradient_penalty(linear_critic({0.6, 0.8}), r2, f2, eps) < 1e-20);
}

TEST_CASE("gradient penalty is non-negative") {
    Rng rng(11);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto critic = random_mlp({3, 8, 1}, Activation::leaky_relu, Activation::linear, 0.7, s);
        const auto real = normal(rng, 6, 3);
        const auto fake = normal(rng, 6, 3);
        CHECK(gradient_penalty(critic, real, fake, draw_eps(6, rng)) >= 0.0);
    }
}

TEST_CASE("zero lambda is the plain mean difference") {
    Rng rng(5);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto critic = random_mlp({2, 8, 1}, Activation::leaky_relu, Activation::linear, 0.5, s);
        const auto gen = random_mlp({3, 8, 2}, Activation::relu, Activation::linear, 0.5, s + 100);
        const auto real = normal(rng, 16, 2);
        const auto noise = normal(rng, 16, 3);
        const double expected =
            plain_mean(critic.evaluate(gen.evaluate(noise))) - plain_mean(critic.evaluate(real));
        CHECK(critic_loss(critic, gen, real, noise, 0.0, draw_eps(16, rng)) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("Wasserstein estimate ignores a constant shift of the critic") {
    Rng rng(9);
    auto critic = random_mlp({2, 8, 1}, Activation::leaky_relu, Activation::linear, 0.5, 1);
    const auto gen = random_mlp({2, 8, 2}, Activation::relu, Activation::linear, 0.5, 2);
    const auto real = normal(rng, 32, 2);
    const auto noise = normal(rng, 32, 2);
    const double before = critic_loss(critic, gen, real, noise, 0.0, draw_eps(32, rng));
    critic.layer(critic.depth() - 1).bias[0] += 123.0;
    const double after = critic_loss(critic, gen, real, noise, 0.0, draw_eps(32, rng));
    CHECK(after == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("critic steps never touch the generator") {
    auto model = make_gan(small_arch(2, 2), 4);
    const auto g_hash = model.generator.parameter_hash();
    auto state = AdamState::for_network(model.critic);
    Rng rng(2);
    for (int i = 0; i < 5; ++i) {
        const auto fake = model.generator.evaluate(model.prior.sample(8, rng));
        critic_step(model.critic, state, normal(rng, 8, 2), fake, draw_eps(8, rng), 10.0);
    }
    CHECK(model.generator.parameter_hash() == g_hash);

    SUBCASE("a frozen generator survives pretraining bitwise") {
        const auto before = model.generator;
        model.generator.set_frozen(true);
        const auto trained = pretrain(model, short_run(10, 1), MixtureSource(blob(1.0, 1.0, 0.5)));
        for (std::size_t l = 0; l < before.layers().size(); ++l) {
            CHECK(trained.generator.layers()[l].weight == before.layers()[l].weight);
            CHECK(trained.generator.layers()[l].bias == before.layers()[l].bias);
        }
        CHECK(trained.critic.parameter_hash() != model.critic.parameter_hash());
    }
}

TEST_CASE("one generator step with a small rate lowers the generator loss") {
    const auto critic = random_mlp({2, 16, 1}, Activation::leaky_relu, Activation::linear, 0.5, 7);
    auto gen = random_mlp({3, 16, 2}, Activation::relu, Activation::linear, 0.5, 8);
    Rng rng(3);
    const auto z = normal(rng, 32, 3);
    const double before = generator_loss(critic, gen, z);

    ad::Tape tape;
    ad::Binding b(tape);
    const auto loss = generator_objective(b, critic, gen.forward(b, tape.constant(z)));
    const auto params = gen.parameters();
    const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
    const auto grads = tape.backward(loss, Tensor::scalar(1.0), vars);
    auto state = AdamState::for_network(gen, {1e-4, 0.5, 0.999, 1e-8});
    adam_step(gen, grads, state);

    CHECK(generator_loss(critic, gen, z) < before);
}

TEST_CASE("pretraining bookkeeping") {
    const MixtureSource data(blob(0.0, 0.0, 1.0));
    const auto model = make_gan(small_arch(2, 2), 1);

    SUBCASE("zero iterations is a no-op") {
        const auto out = pretrain(model, short_run(0, 1), data);
        CHECK(out.generator == model.generator);
        CHECK(out.critic == model.critic);
        CHECK(out.iterations == 0);
    }
    SUBCASE("same seed, same bytes") {
        const auto a = pretrain(model, short_run(15, 9), data);
        const auto b = pretrain(model, short_run(15, 9), data);
        CHECK(encode_checkpoint(to_checkpoint(a)) == encode_checkpoint(to_checkpoint(b)));
        CHECK(a.iterations == 15);
        const auto c = pretrain(model, short_run(15, 10), data);
        CHECK(c.generator.parameter_hash() != a.generator.parameter_hash());
    }
    SUBCASE("dimension mismatch is rejected") {
        const MixtureSource three(MixtureSpec::from_json(
            {{"components", {{{"weight", 1.0}, {"mean", {0, 0, 0}}, {"variance", {1, 1, 1}}}}}}));
        CHECK_THROWS_AS(pretrain(model, short_run(1, 1), three), DimensionError);
    }
    SUBCASE("checkpoint round trip") {
        const auto trained = pretrain(model, short_run(5, 2), data);
        const auto back = gan_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(trained))));
        CHECK(back.generator == trained.generator);
        CHECK(back.critic == trained.critic);
        CHECK(back.prior == trained.prior);
        CHECK(back.iterations == trained.iterations);
    }
}

TEST_CASE("a runaway learning rate reports divergence with a finite state") {
    auto config = short_run(50, 1);
    config.lr_critic = 1e300;
    config.lr_decay = false;
    const auto model = make_gan(small_arch(2, 2), 1);
    try {
        pretrain(model, config, MixtureSource(blob(0.0, 0.0, 1.0)));
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        const auto last = gan_from_checkpoint(e.last_finite());
        for (const auto* p : last.critic.parameters()) CHECK(p->all_finite());
        for (const auto* p : last.generator.parameters()) CHECK(p->all_finite());
        CHECK(last.iterations == e.iteration());
    }
}

TEST_CASE("sampling") {
    const auto model = make_gan(small_arch(3, 2), 4);
    CHECK(sample(model, 1, 0).shape() == Shape{1, 2});
    CHECK(sample(model, 50, 8) == sample(model, 50, 8));
    CHECK(sample(model, 50, 8) != sample(model, 50, 9));
    CHECK_THROWS_AS(sample(model, 0, 1), UsageError);
}
