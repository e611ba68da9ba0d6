#include "minegan/miner.hpp"

#include "minegan/errors.hpp"

#include <algorithm>

namespace minegan {

MinerArchitecture MinerArchitecture::from(const RunConfig& c, std::size_t latent_dim, std::size_t data_dim) {
    MinerArchitecture a;
    a.latent_dim = latent_dim;
    a.layers = c.miner_depth_for(data_dim);
    a.width = c.miner_width;
    a.init_std = c.miner_init_std;
    return a;
}

MinerNetwork::MinerNetwork(DenseNetwork net) : net_(std::move(net)) {
    if (net_.empty()) throw DimensionError("miner needs at least one layer");
    if (net_.input_dim() != net_.output_dim()) {
        throw DimensionError("miner must map the latent space to itself: " + std::to_string(net_.input_dim()) +
                             " -> " + std::to_string(net_.output_dim()));
    }
}

MinerNetwork MinerNetwork::make(const MinerArchitecture& arch, std::uint64_t seed) {
    if (arch.layers < 1) throw ConfigError("miner_layers", "must be >= 1");
    std::vector<std::size_t> widths{arch.latent_dim};
    for (std::size_t i = 1; i < arch.layers; ++i) widths.push_back(arch.width);
    widths.push_back(arch.latent_dim);
    auto net = DenseNetwork::mlp(widths, Activation::relu, Activation::linear);
    Rng rng(derive_seed(seed, 0));
    init_normal(net, arch.init_std, rng);
    return MinerNetwork(std::move(net));
}

ad::Var MinerNetwork::forward(ad::Binding& b, ad::Var u, bool as_constants) const {
    return ad::add(u, net_.forward(b, u, as_constants));
}

Tensor MinerNetwork::evaluate(const Tensor& u) const {
    ad::Tape tape;
    ad::Binding b(tape);
    return forward(b, tape.constant(u), true).value();
}

std::string_view stage_name(Stage s) {
    switch (s) {
    case Stage::initial: return "initial";
    case Stage::mine_only: return "mine_only";
    case Stage::full: return "full";
    }
    return "?";
}

Stage parse_stage(std::string_view text) {
    if (text == "initial") return Stage::initial;
    if (text == "mine_only") return Stage::mine_only;
    if (text == "full") return Stage::full;
    throw FormatError("unknown stage tag '" + std::string(text) + "'");
}

MiningConfig MiningConfig::from(const RunConfig& c) {
    MiningConfig m;
    m.train = TrainConfig::from(c);
    m.stage1_iterations = c.stage1_iterations;
    m.stage2_iterations = c.stage2_iterations;
    m.stage2_lr_scale = c.stage2_lr_scale;
    return m;
}

void MiningConfig::validate() const {
    train.validate();
    if (!(stage2_lr_scale > 0.0)) throw ConfigError("stage2_lr_scale", "must be > 0");
}

TransferRun make_transfer(GanModel source, const MinerArchitecture& arch, std::uint64_t seed) {
    source.validate();
    if (arch.latent_dim != source.generator.input_dim()) {
        throw DimensionError("miner latent dim " + std::to_string(arch.latent_dim) + " != generator input " +
                             std::to_string(source.generator.input_dim()));
    }
    TransferRun run;
    run.miner = MinerNetwork::make(arch, derive_seed(seed, 20));
    run.source_generator_hash = source.generator.parameter_hash();
    run.model = std::move(source);
    run.seed = seed;
    return run;
}

// ---- objectives ---------------------------------------------------------------

CriticTerms mine_critic_objective(ad::Binding& b, const DenseNetwork& critic, const Generator& generator,
                                  const MinerNetwork& miner, const Tensor& u, const Tensor& target,
                                  const Tensor& eps, double lambda) {
    if (u.cols() != miner.latent_dim()) throw DimensionError("mining: noise does not match the miner");
    const auto fake = generator.evaluate(miner.evaluate(u));
    return critic_objective(b, critic, target, fake, eps, lambda);
}

ad::Var mine_generator_objective(ad::Binding& b, const DenseNetwork& critic, const Generator& generator,
                                 const MinerNetwork& miner, ad::Var u, bool generator_constant) {
    const auto fake = generator.forward(b, miner.forward(b, u), generator_constant);
    return generator_objective(b, critic, fake);
}

double mine_critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const MinerNetwork& miner,
                        const Tensor& u, const Tensor& target, double lambda, const Tensor& eps) {
    ad::Tape tape;
    ad::Binding b(tape);
    return mine_critic_objective(b, critic, DenseGeneratorView(generator), miner, u, target, eps, lambda)
        .loss.value()
        .item();
}

double mine_generator_loss(const DenseNetwork& critic, const DenseNetwork& generator, const MinerNetwork& miner,
                           const Tensor& u) {
    ad::Tape tape;
    ad::Binding b(tape);
    return mine_generator_objective(b, critic, DenseGeneratorView(generator), miner, tape.constant(u), true)
        .value()
        .item();
}

// ---- loop ---------------------------------------------------------------------

void run_mining_path(const MiningPath& path, const PathRun& run, const MiningConfig& config, bool joint,
                     std::size_t iterations, const SampleSource& target, const MetricSink& sink) {
    const auto& tc = config.train;
    const double scale = joint ? config.stage2_lr_scale : 1.0;
    const double lr_critic = joint ? scale * tc.lr_miner : tc.lr_critic;
    auto d_state = AdamState::for_network(*run.critic, tc.adam(lr_critic));
    auto m_state = AdamState::for_parameters(path.miner_params, tc.adam(tc.lr_miner));
    auto g_state = AdamState::for_parameters(path.generator_params, tc.adam(scale * tc.lr_miner));
    const auto k = tc.batch_size;
    Rng rng(derive_seed(tc.seed, run.stream));

    for (std::size_t it = 0; it < iterations; ++it) {
        CriticStep cs;
        for (std::size_t c = 0; c < tc.n_critic; ++c) {
            const auto real = target.draw(k, rng);
            const auto fake = path.evaluate(run.prior->sample(k, rng));
            const auto eps = draw_eps(k, rng);
            cs = critic_step(*run.critic, d_state, real, fake, eps, tc.gp_lambda);
        }
        require_finite(run.critic->parameters(), "critic");

        const auto u = run.prior->sample(k, rng);
        ad::Tape tape;
        ad::Binding b(tape);
        const auto loss = path.forward(b, tape.constant(u), !joint);
        std::vector<const Tensor*> wrt(path.miner_params.begin(), path.miner_params.end());
        if (joint) wrt.insert(wrt.end(), path.generator_params.begin(), path.generator_params.end());
        const auto vars = b.vars(wrt);
        auto grads = tape.backward(loss, Tensor::scalar(1.0), vars);
        const auto nm = path.miner_params.size();
        adam_step(path.miner_params, std::span<const Tensor>(grads.data(), nm), m_state);
        require_finite(std::vector<const Tensor*>(path.miner_params.begin(), path.miner_params.end()), "miner");
        if (joint) {
            adam_step(path.generator_params, std::span<const Tensor>(grads.data() + nm, grads.size() - nm), g_state,
                      path.generator_trainable);
            require_finite(std::vector<const Tensor*>(path.generator_params.begin(), path.generator_params.end()),
                           "generator");
        }
        ++*run.iteration_counter;
        if (sink && tc.log_every > 0 && (it % tc.log_every == 0 || it + 1 == iterations)) {
            nlohmann::ordered_json rec;
            rec["stage"] = run.stage_tag;
            rec["iteration"] = it;
            rec["critic_loss"] = cs.loss;
            rec["miner_loss"] = loss.value().item();
            rec["gp"] = cs.gp;
            rec["wasserstein"] = cs.wasserstein;
            sink(rec);
        }
    }
}

namespace {

MiningPath single_path(TransferRun& run) {
    auto* gen = &run.model.generator;
    auto* miner = &run.miner;
    auto* critic = &run.model.critic;
    MiningPath p;
    p.evaluate = [gen, miner](const Tensor& u) { return gen->evaluate(miner->evaluate(u)); };
    p.forward = [gen, miner, critic](ad::Binding& b, ad::Var u, bool constant) {
        return mine_generator_objective(b, *critic, DenseGeneratorView(*gen), *miner, u, constant);
    };
    p.miner_params = miner->parameters();
    p.generator_params = gen->parameters();
    p.generator_trainable = gen->trainable();
    return p;
}

template <class Fn>
TransferRun guarded(TransferRun run, const char* what, Fn&& body) {
    const TransferRun before = run;
    try {
        body(run);
    } catch (const DivergenceError&) {
        throw;
    } catch (const NumericError& e) {
        const auto it = std::string(what) == "finetune" ? run.stage2_done : run.stage1_done;
        // Parameters are updated in place, so the last finite state is the
        // input of this stage.
        throw DivergenceError(std::string(what) + " diverged at iteration " + std::to_string(it) + ": " + e.what(), it,
                              to_checkpoint(before));
    }
    return run;
}

} // namespace

TransferRun train_miner(TransferRun run, const MiningConfig& config, const SampleSource& target,
                        const MetricSink& sink) {
    config.validate();
    if (run.stage != Stage::initial) throw UsageError("train_miner: run is already past stage 1");
    if (target.dim() != run.model.generator.output_dim()) throw DimensionError("target dimension != generator output");
    return guarded(std::move(run), "mining", [&](TransferRun& r) {
        r.model.generator.set_frozen(true);
        r.stage1_budget = config.stage1_iterations;
        PathRun pr{&r.model.critic, &r.model.prior, &r.stage1_done, 2, "mine"};
        run_mining_path(single_path(r), pr, config, false, config.stage1_iterations, target, sink);
        if (r.model.generator.parameter_hash() != r.source_generator_hash) {
            throw std::logic_error("generator changed during stage 1");
        }
        r.stage = Stage::mine_only;
    });
}

TransferRun finetune(TransferRun run, const MiningConfig& config, const SampleSource& target,
                     const MetricSink& sink) {
    config.validate();
    if (run.stage != Stage::mine_only) throw UsageError("finetune: stage 1 has not completed");
    if (target.dim() != run.model.generator.output_dim()) throw DimensionError("target dimension != generator output");
    return guarded(std::move(run), "finetune", [&](TransferRun& r) {
        r.model.generator.set_frozen(false);
        r.stage2_budget = config.stage2_iterations;
        PathRun pr{&r.model.critic, &r.model.prior, &r.stage2_done, 3, "finetune"};
        run_mining_path(single_path(r), pr, config, true, config.stage2_iterations, target, sink);
        r.stage = Stage::full;
    });
}

Tensor mined_sample(const TransferRun& run, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("sample: n must be >= 1");
    Rng rng(seed);
    return run.model.generator.evaluate(run.miner.evaluate(run.model.prior.sample(n, rng)));
}

GanModel scratch_baseline(const GanArchitecture& arch, const MiningConfig& config, const SampleSource& target,
                          const MetricSink& sink) {
    TrainConfig tc = config.train;
    tc.iterations = config.stage1_iterations + config.stage2_iterations;
    return pretrain(arch, tc, target, sink);
}

// ---- persistence ------------------------------------------------------------------

Checkpoint to_checkpoint(const TransferRun& run) {
    Checkpoint ck;
    ck.kind = CheckpointKind::miner;
    put_network(ck, "generator", run.model.generator);
    put_network(ck, "critic", run.model.critic);
    put_prior(ck, "prior", run.model.prior);
    put_network(ck, "miner", run.miner.network());
    auto& m = ck.metadata;
    m["stage"] = stage_name(run.stage);
    m["generator_policy"] = run.stage == Stage::full ? "finetuned" : "frozen";
    m["critic_init"] = "source";
    m["source_generator_hash"] = run.source_generator_hash;
    m["stage1_iterations"] = run.stage1_done;
    m["stage2_iterations"] = run.stage2_done;
    m["stage1_budget"] = run.stage1_budget;
    m["stage2_budget"] = run.stage2_budget;
    m["pretrain_iterations"] = run.model.iterations;
    m["seed"] = run.seed;
    m["source_seed"] = run.model.seed;
    m["dataset"] = run.model.dataset;
    m["target"] = run.target;
    return ck;
}

TransferRun transfer_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != CheckpointKind::miner) {
        throw FormatError("expected a miner checkpoint, got " + std::string(checkpoint_kind_name(ckpt.kind)));
    }
    TransferRun r;
    try {
        const auto& m = ckpt.metadata;
        r.model.generator = get_network(ckpt, "generator");
        r.model.critic = get_network(ckpt, "critic");
        r.model.prior = get_prior(ckpt, "prior");
        r.miner = MinerNetwork(get_network(ckpt, "miner"));
        r.stage = parse_stage(m.at("stage").get<std::string>());
        r.source_generator_hash = m.at("source_generator_hash").get<std::uint64_t>();
        r.stage1_done = m.at("stage1_iterations").get<std::size_t>();
        r.stage2_done = m.at("stage2_iterations").get<std::size_t>();
        r.stage1_budget = m.at("stage1_budget").get<std::size_t>();
        r.stage2_budget = m.at("stage2_budget").get<std::size_t>();
        r.model.iterations = m.at("pretrain_iterations").get<std::size_t>();
        r.seed = m.at("seed").get<std::uint64_t>();
        r.model.seed = m.at("source_seed").get<std::uint64_t>();
        r.model.dataset = m.at("dataset").get<std::string>();
        r.target = m.at("target").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("miner checkpoint metadata: ") + e.what());
    }
    r.model.validate();
    return r;
}

} // namespace minegan
