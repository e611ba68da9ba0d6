#include "doctest.h"

#include "minegan/errors.hpp"
#include "minegan/multimine.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace minegan;
using namespace minegan::testing;

namespace {

Tensor col(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({n, 1}, std::move(v));
}

MinerArchitecture miner_arch() {
    MinerArchitecture a;
    a.latent_dim = 2;
    return a;
}

// 1-D generators that ignore their latent and emit fixed values.
GeneratorFamily constant_family(const std::vector<double>& values, DenseNetwork critic) {
    std::vector<std::shared_ptr<Generator>> gens;
    std::vector<PriorSpec> priors;
    for (const double v : values) {
        gens.push_back(std::make_shared<DenseGenerator>(constant_generator(2, {v})));
        priors.push_back(PriorSpec::standard(2));
    }
    return make_family(std::move(gens), std::move(priors), std::move(critic), miner_arch(), 0, 10, 1);
}

GanModel tiny_source(std::uint64_t seed) {
    GanArchitecture a;
    a.latent_dim = 3;
    a.gen_layers = 3;
    a.gen_width = 16;
    a.critic_layers = 3;
    a.critic_width = 16;
    return make_gan(a, seed);
}

GeneratorFamily random_family(std::size_t n, std::uint64_t seed, std::size_t window = 50) {
    std::vector<GanModel> sources;
    for (std::size_t i = 0; i < n; ++i) sources.push_back(tiny_source(seed + i));
    MinerArchitecture a;
    a.latent_dim = 3;
    return make_family(sources, a, 0, window, seed);
}

MiningConfig quick(std::size_t s1, std::size_t s2, std::uint64_t seed = 5) {
    MiningConfig c;
    c.stage1_iterations = s1;
    c.stage2_iterations = s2;
    c.train.seed = seed;
    c.train.batch_size = 16;
    return c;
}

bool all_zero(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] != 0.0) return false;
    }
    return true;
}

// Per miner: does any of its parameter gradients carry a nonzero entry?
std::vector<bool> miners_with_gradient(const GeneratorFamily& f, const SupersampleBatch& batch, Selection sel) {
    auto& fam = const_cast<GeneratorFamily&>(f);
    ad::Tape tape;
    ad::Binding b(tape);
    const auto loss = multi_miner_objective(b, f, batch, sel, true);
    std::vector<const Tensor*> wrt;
    std::vector<std::size_t> counts;
    for (auto& m : fam.miners) {
        const auto ps = m.parameters();
        counts.push_back(ps.size());
        wrt.insert(wrt.end(), ps.begin(), ps.end());
    }
    const auto grads = tape.backward(loss, Tensor::scalar(1.0), b.vars(wrt));
    std::vector<bool> out;
    std::size_t off = 0;
    for (const auto c : counts) {
        bool any = false;
        for (std::size_t j = 0; j < c; ++j) any = any || !all_zero(grads[off + j]);
        out.push_back(any);
        off += c;
    }
    return out;
}

} // namespace

TEST_CASE("supersample structure") {
    SUBCASE("single generator") { CHECK(make_supersample(random_family(1, 1), 3).entries.size() == 1); }
    SUBCASE("every generator exactly once, in order") {
        const auto s = make_supersample(random_family(3, 1), 3);
        REQUIRE(s.entries.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(s.entries[i].generator == i);
    }
    SUBCASE("fixed seed, fixed latents") {
        const auto f = random_family(3, 2);
        const auto a = make_supersample(f, 9);
        const auto b = make_supersample(f, 9);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a.entries[i].u == b.entries[i].u);
            CHECK(a.entries[i].score == b.entries[i].score);
        }
        CHECK(make_supersample(f, 10).entries[0].u != a.entries[0].u);
    }
    SUBCASE("a batch holds K x N entries") {
        const auto f = random_family(3, 4);
        Rng rng(1);
        const auto batch = draw_supersamples(f, 7, rng);
        CHECK(batch.size() == 7);
        CHECK(batch.u.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(batch.u[i].rows() == 7);
            CHECK(batch.outputs[i].rows() == 7);
            CHECK(batch.scores[i].shape() == Shape{7, 1});
        }
        for (std::size_t r = 0; r < 7; ++r) {
            const auto s = batch.at(r);
            CHECK(s.winner() == batch.winners[r]);
            CHECK(s.entries[s.winner()].score == batch.scores[s.winner()](r, 0));
        }
    }
}

TEST_CASE("multi losses on constant generators") {
    Rng rng(1);
    SUBCASE("max score wins") {
        const auto f = constant_family({2.0, 5.0}, linear_critic({1.0}));
        const auto batch = draw_supersamples(f, 1, rng);
        CHECK(batch.winners[0] == 1);
        CHECK(multi_critic_loss(f, batch, col({1.0}), 0.0, col({0.5})) == 4.0);
        CHECK(multi_miner_loss(f, batch) == -5.0);
    }
    SUBCASE("ties go to the lowest index") {
        const auto f = constant_family({3.0, 3.0}, linear_critic({1.0}));
        const auto batch = draw_supersamples(f, 1, rng);
        CHECK(batch.winners[0] == 0);
        CHECK(multi_critic_loss(f, batch, col({1.0}), 0.0, col({0.5})) == 2.0);
    }
    SUBCASE("target batch must match K") {
        const auto f = constant_family({2.0, 5.0}, linear_critic({1.0}));
        const auto batch = draw_supersamples(f, 2, rng);
        CHECK_THROWS_AS(multi_critic_loss(f, batch, col({1.0}), 0.0, col({0.5})), DimensionError);
    }
}

TEST_CASE("argmax tie-breaking") {
    const double s[] = {1.0, 4.0, 4.0, -2.0};
    CHECK(argmax_lowest(s) == 1);
    CHECK_THROWS_AS(argmax_lowest(std::span<const double>{}), UsageError);
}

TEST_CASE("a one-generator family reduces to single mining") {
    auto f = random_family(1, 6);
    Rng rng(2);
    const auto batch = draw_supersamples(f, 8, rng);
    const auto target = normal(rng, 8, 2);
    const auto eps = draw_eps(8, rng);
    const auto& gen = dynamic_cast<const DenseGenerator&>(*f.generators[0]).network();
    CHECK(multi_critic_loss(f, batch, target, 10.0, eps) ==
          mine_critic_loss(f.critic, gen, f.miners[0], batch.u[0], target, 10.0, eps));
    CHECK(multi_miner_loss(f, batch) == mine_generator_loss(f.critic, gen, f.miners[0], batch.u[0]));
}

TEST_CASE("gradients reach exactly the winning miners") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto f = random_family(4, seed * 10);
        Rng rng(seed);
        const auto batch = draw_supersamples(f, 3, rng);
        const auto got = miners_with_gradient(f, batch, Selection::max);
        for (std::size_t i = 0; i < 4; ++i) {
            const bool won = std::find(batch.winners.begin(), batch.winners.end(), i) != batch.winners.end();
            CHECK(got[i] == won);
        }
        const auto mean = miners_with_gradient(f, batch, Selection::mean);
        CHECK(std::all_of(mean.begin(), mean.end(), [](bool b) { return b; }));
    }
}

TEST_CASE("training updates winners only in max mode and all miners in mean mode") {
    // Generator 1 emits a far larger value, so under D(x) = x it always wins.
    std::vector<std::shared_ptr<Generator>> gens;
    auto lifted = random_mlp({2, 8, 1}, Activation::relu, Activation::linear, 0.3, 3);
    lifted.layer(1).bias[0] = 100.0;
    gens.push_back(std::make_shared<DenseGenerator>(random_mlp({2, 8, 1}, Activation::relu, Activation::linear, 0.3, 2)));
    gens.push_back(std::make_shared<DenseGenerator>(lifted));
    std::vector<PriorSpec> priors(2, PriorSpec::standard(2));
    auto config = quick(3, 0);
    config.train.lr_critic = 1e-12;  // keep D(x) = x in force
    const MixtureSource target(MixtureSpec::from_json(
        {{"components", {{{"weight", 1.0}, {"mean", {0.0}}, {"variance", {1.0}}}}}}));

    const auto f = make_family(gens, priors, linear_critic({1.0}), miner_arch(), 0, 10, 1);
    const auto trained = train_multi(f, config, target);
    CHECK(trained.miners[0] == f.miners[0]);
    CHECK(trained.miners[1] != f.miners[1]);
    CHECK(trained.selector.probabilities() == std::vector<double>{0.0, 1.0});

    auto fm = make_family(gens, priors, linear_critic({1.0}), miner_arch(), 0, 10, 1);
    fm.selection = Selection::mean;
    const auto trained_mean = train_multi(fm, config, target);
    CHECK(trained_mean.miners[0] != fm.miners[0]);
    CHECK(trained_mean.miners[1] != fm.miners[1]);
}

TEST_CASE("selector counts and probabilities") {
    SUBCASE("direct counting") {
        const std::size_t w[] = {0, 0, 1, 0};
        CHECK(minibatch_counts(w, 2) == std::vector<double>{0.75, 0.25});
    }
    SUBCASE("one generator") {
        SelectorState s(1, 5);
        CHECK(s.probabilities() == std::vector<double>{1.0});
        const std::size_t w[] = {0, 0, 0};
        s.push(minibatch_counts(w, 1));
        CHECK(s.probabilities() == std::vector<double>{1.0});
    }
    SUBCASE("empty window is uniform") {
        const SelectorState s(4, 5);
        for (const double p : s.probabilities()) CHECK(p == 0.25);
        Rng rng(3);
        std::vector<int> hits(4, 0);
        for (int i = 0; i < 8000; ++i) ++hits[selector_sample(s, rng)];
        for (const int h : hits) CHECK(h / 8000.0 == doctest::Approx(0.25).epsilon(0.1));
    }
    SUBCASE("update from supersamples") {
        const auto f = random_family(3, 7);
        std::vector<Supersample> ss;
        std::vector<std::size_t> winners;
        for (std::uint64_t s = 0; s < 6; ++s) {
            ss.push_back(make_supersample(f, s));
            winners.push_back(ss.back().winner());
        }
        const auto state = selector_update(SelectorState(3, 4), ss);
        CHECK(state.window().size() == 1);
        CHECK(state.probabilities() == minibatch_counts(winners, 3));
    }
    SUBCASE("sealed states refuse pushes") {
        SelectorState s(2, 3);
        s.push({1.0, 0.0});
        s.seal();
        CHECK_THROWS_AS(s.push({0.0, 1.0}), UsageError);
        CHECK(s.probabilities() == std::vector<double>{1.0, 0.0});
        s.reopen();
        s.push({0.0, 1.0});
        CHECK(s.probabilities() == std::vector<double>{0.5, 0.5});
    }
    SUBCASE("malformed pushes") {
        SelectorState s(2, 3);
        CHECK_THROWS_AS(s.push({1.0}), DimensionError);
        CHECK_THROWS_AS(SelectorState(0, 3), UsageError);
        CHECK_THROWS_AS(SelectorState(2, 0), ConfigError);
    }
}

TEST_CASE("sliding window matches a recomputation from the retained rows") {
    Rng rng(17);
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    const std::size_t capacity = 7;
    SelectorState s(3, capacity);
    std::vector<std::vector<double>> history;
    for (int step = 0; step < 40; ++step) {
        std::vector<std::size_t> winners(5);
        for (auto& w : winners) w = pick(rng);
        history.push_back(minibatch_counts(winners, 3));
        s.push(history.back());

        const auto first = history.size() > capacity ? history.size() - capacity : 0;
        std::vector<double> expected(3, 0.0);
        for (std::size_t r = first; r < history.size(); ++r) {
            for (std::size_t i = 0; i < 3; ++i) expected[i] += history[r][i];
        }
        const auto p = s.probabilities();
        double total = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(p[i] == doctest::Approx(expected[i] / static_cast<double>(history.size() - first)).epsilon(1e-12));
            CHECK(p[i] >= 0.0);
            total += p[i];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.window().size() == std::min<std::size_t>(history.size(), capacity));
    }
}

TEST_CASE("selector sampling") {
    SelectorState s(2, 4);
    s.push({1.0, 0.0});
    for (std::uint64_t seed = 0; seed < 200; ++seed) CHECK(selector_sample(s, seed) == 0);

    SelectorState half(2, 4);
    half.push({0.5, 0.5});
    Rng rng(8);
    int zeros = 0;
    for (int i = 0; i < 10000; ++i) zeros += selector_sample(half, rng) == 0;
    CHECK(zeros >= 4500);
    CHECK(zeros <= 5500);
    CHECK(selector_sample(half, 77) == selector_sample(half, 77));
}

TEST_CASE("a one-generator family trains exactly like a single miner") {
    const auto source = tiny_source(12);
    MinerArchitecture a;
    a.latent_dim = 3;
    const auto family = make_family(std::vector<GanModel>{source}, a, 0, 20, 4);
    const auto run = make_transfer(source, a, 4);
    CHECK(family.miners[0] == run.miner);

    const MixtureSource target(blob(1.0, -1.0, 0.2));
    const auto config = quick(6, 4);
    const auto f1 = train_multi(family, config, target);
    const auto r1 = train_miner(run, config, target);
    CHECK(f1.miners[0] == r1.miner);
    CHECK(f1.critic == r1.model.critic);
    CHECK(family_sample(f1, 25, 3) == mined_sample(r1, 25, 3));

    const auto f2 = finetune_multi(f1, config, target);
    const auto r2 = finetune(r1, config, target);
    CHECK(f2.miners[0] == r2.miner);
    CHECK(f2.critic == r2.model.critic);
    const auto& g = dynamic_cast<const DenseGenerator&>(*f2.generators[0]).network();
    for (std::size_t l = 0; l < g.depth(); ++l) CHECK(g.layer(l).weight == r2.model.generator.layer(l).weight);
}

TEST_CASE("family training bookkeeping") {
    const auto family = random_family(3, 30, 8);
    const MixtureSource target(blob(0.5, 0.5, 0.3));
    SelectorTrace trace;
    const auto mined = train_multi(family, quick(25, 0), target, {}, &trace);

    SUBCASE("generators untouched and selector sealed after stage 1") {
        for (std::size_t i = 0; i < 3; ++i) CHECK(mined.generators[i]->parameter_hash() == family.source_hashes[i]);
        CHECK(mined.stage == Stage::mine_only);
        CHECK(mined.selector.sealed());
        CHECK(mined.selector.window().size() == 8);
        CHECK(mined.stage1_done == 25);
    }
    SUBCASE("trace rows every 10 minibatches plus the last") {
        REQUIRE(trace.size() == 3);
        CHECK(trace[0].minibatch == 10);
        CHECK(trace[1].minibatch == 20);
        CHECK(trace[2].minibatch == 25);
        const auto csv = selector_trace_csv(trace, 3);
        CHECK(csv.rfind("minibatch,p0,p1,p2\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    }
    SUBCASE("stage order") {
        CHECK_THROWS_AS(train_multi(mined, quick(1, 0), target), UsageError);
        CHECK_THROWS_AS(finetune_multi(family, quick(1, 1), target), UsageError);
    }
    SUBCASE("stage 2 moves only generators that won") {
        const auto full = finetune_multi(mined, quick(25, 10), target);
        CHECK(full.stage == Stage::full);
        CHECK(full.stage2_done == 10);
        bool any_changed = false;
        for (std::size_t i = 0; i < 3; ++i) any_changed |= full.generators[i]->parameter_hash() != family.source_hashes[i];
        CHECK(any_changed);
    }
    SUBCASE("sampling follows the sealed selector") {
        const auto idx = family_sample_indices(mined, 400, 6);
        const auto p = mined.selector.probabilities();
        for (std::size_t i = 0; i < 3; ++i) {
            const double freq = std::count(idx.begin(), idx.end(), i) / 400.0;
            CHECK(std::abs(freq - p[i]) < 0.1);
        }
        CHECK(family_sample(mined, 50, 6) == family_sample(mined, 50, 6));
        CHECK(family_sample(mined, 50, 6).shape() == Shape{50, 2});
        CHECK_THROWS_AS(family_sample(mined, 0, 6), UsageError);
    }
    SUBCASE("checkpoint round trip") {
        const auto back = family_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(mined))));
        CHECK(back.size() == 3);
        CHECK(back.critic == mined.critic);
        CHECK(back.stage == Stage::mine_only);
        CHECK(back.selector.probabilities() == mined.selector.probabilities());
        CHECK(back.selector.window() == mined.selector.window());
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back.miners[i] == mined.miners[i]);
            CHECK(back.generators[i]->parameter_hash() == mined.generators[i]->parameter_hash());
        }
        CHECK(family_sample(back, 40, 2) == family_sample(mined, 40, 2));
        const auto full_a = finetune_multi(mined, quick(25, 3), target);
        const auto full_b = finetune_multi(back, quick(25, 3), target);
        CHECK(full_a.critic == full_b.critic);
    }
    SUBCASE("deterministic") {
        const auto again = train_multi(family, quick(25, 0), target);
        CHECK(encode_checkpoint(to_checkpoint(again)) == encode_checkpoint(to_checkpoint(mined)));
    }
}

TEST_CASE("family validation") {
    std::vector<GanModel> mixed{tiny_source(1)};
    GanArchitecture three;
    three.data_dim = 3;
    three.latent_dim = 3;
    mixed.push_back(make_gan(three, 2));
    MinerArchitecture a;
    a.latent_dim = 3;
    CHECK_THROWS_AS(make_family(mixed, a, 0, 10, 1), DimensionError);
    CHECK_THROWS_AS(make_family(std::vector<GanModel>{tiny_source(1)}, a, 1, 10, 1), ConfigError);
    CHECK_THROWS_AS(make_family(std::vector<GanModel>{}, a, 0, 10, 1), UsageError);
}
