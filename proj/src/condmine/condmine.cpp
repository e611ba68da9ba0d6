#include "minegan/condmine.hpp"

#include "minegan/errors.hpp"

#include <map>

namespace minegan {

ConditionalArchitecture ConditionalArchitecture::from(const RunConfig& c, std::size_t data_dim, std::size_t classes) {
    ConditionalArchitecture a;
    a.latent_dim = c.latent_dim;
    a.data_dim = data_dim;
    a.classes = classes;
    a.embedding_dim = c.embedding_dim;
    a.gen_layers = c.gen_layers;
    a.gen_width = c.gen_width;
    a.critic_layers = c.critic_layers;
    a.critic_width = c.critic_width;
    return a;
}

Tensor onehot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor t = Tensor::zeros(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw DimensionError("label " + std::to_string(labels[i]) + " out of range");
        t(i, labels[i]) = 1.0;
    }
    return t;
}

// ---- generator ------------------------------------------------------------------

ConditionalGenerator::ConditionalGenerator(Tensor embedding, DenseNetwork backbone, std::vector<Tensor> scale_maps,
                                           std::vector<Tensor> shift_maps)
    : embedding_(std::move(embedding)),
      backbone_(std::move(backbone)),
      scale_(std::move(scale_maps)),
      shift_(std::move(shift_maps)) {
    validate();
}

void ConditionalGenerator::validate() const {
    if (backbone_.empty()) throw DimensionError("conditional generator needs a backbone");
    if (embedding_.rank() != 2 || embedding_.rows() == 0) throw DimensionError("embedding table must be classes x dim");
    const auto hidden = backbone_.depth() - 1;
    if (scale_.size() != hidden || shift_.size() != hidden) {
        throw DimensionError("one scale and shift map per hidden layer");
    }
    for (std::size_t l = 0; l < hidden; ++l) {
        const auto w = backbone_.layer(l).output_dim();
        for (const auto* m : {&scale_[l], &shift_[l]}) {
            if (m->rows() != w || m->cols() != embedding_dim()) {
                throw DimensionError("modulation map " + std::to_string(l) + " must be " + std::to_string(w) + " x " +
                                     std::to_string(embedding_dim()));
            }
        }
    }
}

ConditionalGenerator ConditionalGenerator::make(const ConditionalArchitecture& a, std::uint64_t seed) {
    if (a.gen_layers < 1) throw ConfigError("gen_layers", "must be >= 1");
    std::vector<std::size_t> widths{a.latent_dim};
    for (std::size_t i = 1; i < a.gen_layers; ++i) widths.push_back(a.gen_width);
    widths.push_back(a.data_dim);
    auto backbone = DenseNetwork::mlp(widths, Activation::relu, Activation::linear);
    Rng rng(derive_seed(seed, 30));
    init_he(backbone, rng);
    auto emb = normal(rng, a.classes, a.embedding_dim);
    std::vector<Tensor> scale, shift;
    for (std::size_t l = 0; l + 1 < backbone.depth(); ++l) {
        scale.push_back(normal(rng, backbone.layer(l).output_dim(), a.embedding_dim, 0.0, 0.1));
        shift.push_back(normal(rng, backbone.layer(l).output_dim(), a.embedding_dim, 0.0, 0.1));
    }
    return ConditionalGenerator(std::move(emb), std::move(backbone), std::move(scale), std::move(shift));
}

ad::Var ConditionalGenerator::forward(ad::Binding& b, ad::Var z, ad::Var e, bool as_constants) const {
    if (z.value().cols() != latent_dim()) throw DimensionError("conditional generator: latent width mismatch");
    if (e.value().cols() != embedding_dim() || e.value().rows() != z.value().rows()) {
        throw DimensionError("conditional generator: need one embedding row per latent row");
    }
    auto bind = [&](const Tensor& t) { return as_constants ? b.freeze(t) : b(t); };
    ad::Var h = z;
    const auto depth = backbone_.depth();
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = backbone_.layer(l);
        h = ad::add_row(ad::matmul(h, bind(layer.weight), false, true), bind(layer.bias));
        if (l + 1 < depth) {
            const auto gain = ad::add_scalar(ad::matmul(e, bind(scale_[l]), false, true), 1.0);
            const auto bias = ad::matmul(e, bind(shift_[l]), false, true);
            h = ad::add(ad::mul(h, gain), bias);
        }
        h = activate(h, layer.activation);
    }
    return h;
}

ad::Var ConditionalGenerator::labels_forward(ad::Binding& b, ad::Var z, std::span<const std::size_t> labels,
                                             bool as_constants) const {
    auto& tape = b.tape();
    const auto table = as_constants ? b.freeze(embedding_) : b(embedding_);
    const auto e = ad::matmul(tape.constant(onehot(labels, classes())), table);
    return forward(b, z, e, as_constants);
}

ad::Var ConditionalGenerator::class_forward(ad::Binding& b, ad::Var z, std::size_t cls, bool as_constants) const {
    if (cls >= classes()) throw DimensionError("class " + std::to_string(cls) + " out of range");
    const std::vector<std::size_t> labels(z.value().rows(), cls);
    return labels_forward(b, z, labels, as_constants);
}

Tensor ConditionalGenerator::evaluate(const Tensor& z, const Tensor& embedding) const {
    ad::Tape tape;
    ad::Binding b(tape);
    return forward(b, tape.constant(z), tape.constant(embedding), true).value();
}

Tensor ConditionalGenerator::generate(const Tensor& z, std::size_t cls) const {
    ad::Tape tape;
    ad::Binding b(tape);
    return class_forward(b, tape.constant(z), cls, true).value();
}

std::vector<Tensor*> ConditionalGenerator::parameters() {
    auto p = backbone_.parameters();
    p.push_back(&embedding_);
    for (auto& t : scale_) p.push_back(&t);
    for (auto& t : shift_) p.push_back(&t);
    return p;
}

std::vector<const Tensor*> ConditionalGenerator::parameters() const {
    auto p = backbone_.parameters();
    p.push_back(&embedding_);
    for (const auto& t : scale_) p.push_back(&t);
    for (const auto& t : shift_) p.push_back(&t);
    return p;
}

std::vector<bool> ConditionalGenerator::trainable() const {
    return std::vector<bool>(parameters().size(), !frozen_);
}

std::uint64_t ConditionalGenerator::parameter_hash() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : parameters()) h = tensor_hash(*p, h);
    return h;
}

void ConditionalGenerator::set_frozen(bool frozen) noexcept {
    frozen_ = frozen;
    backbone_.set_frozen(frozen);
}

void ConditionalGenerator::store(Checkpoint& ckpt, const std::string& prefix) const {
    put_network(ckpt, prefix + ".backbone", backbone_);
    ckpt.put(prefix + ".embedding", embedding_);
    for (std::size_t l = 0; l < scale_.size(); ++l) {
        ckpt.put(prefix + ".scale" + std::to_string(l), scale_[l]);
        ckpt.put(prefix + ".shift" + std::to_string(l), shift_[l]);
    }
}

ConditionalGenerator ConditionalGenerator::load(const Checkpoint& ckpt, const std::string& prefix) {
    auto backbone = get_network(ckpt, prefix + ".backbone");
    std::vector<Tensor> scale, shift;
    for (std::size_t l = 0; l + 1 < backbone.depth(); ++l) {
        scale.push_back(ckpt.get(prefix + ".scale" + std::to_string(l)));
        shift.push_back(ckpt.get(prefix + ".shift" + std::to_string(l)));
    }
    ConditionalGenerator g(ckpt.get(prefix + ".embedding"), std::move(backbone), std::move(scale), std::move(shift));
    g.frozen_ = g.backbone_.fully_frozen();
    return g;
}

// ---- source model ------------------------------------------------------------------

void ConditionalGanModel::validate() const {
    if (prior.dim() != generator.latent_dim()) throw DimensionError("prior dimension != generator latent dimension");
    if (critic.input_dim() != generator.output_dim() + generator.classes() || critic.output_dim() != 1) {
        throw DimensionError("conditional critic must take data plus one-hot class and return a scalar");
    }
    prior.validate();
}

ConditionalGanModel make_conditional_gan(const ConditionalArchitecture& a, std::uint64_t seed) {
    ConditionalGanModel m;
    m.generator = ConditionalGenerator::make(a, seed);
    std::vector<std::size_t> widths{a.data_dim + a.classes};
    for (std::size_t i = 1; i < a.critic_layers; ++i) widths.push_back(a.critic_width);
    widths.push_back(1);
    m.critic = DenseNetwork::mlp(widths, Activation::leaky_relu, Activation::linear);
    Rng rng(derive_seed(seed, 31));
    init_he(m.critic, rng);
    m.prior = PriorSpec::standard(a.latent_dim);
    m.seed = seed;
    return m;
}

ConditionalGanModel pretrain_conditional(ConditionalGanModel model, const TrainConfig& config,
                                         const SampleSource& data, const MetricSink& sink) {
    config.validate();
    model.validate();
    const auto classes = model.generator.classes();
    if (data.dim() != model.generator.output_dim()) throw DimensionError("data dimension != generator output");
    if (data.classes() == 0 || data.classes() > classes) {
        throw UsageError("conditional pretraining needs labels within the generator's " + std::to_string(classes) +
                         " classes");
    }
    if (config.iterations == 0) return model;

    Rng rng(derive_seed(config.seed, 1));
    auto params = model.generator.parameters();
    auto g_state = AdamState::for_parameters(params, config.adam(config.lr_generator));
    auto d_state = AdamState::for_network(model.critic, config.adam(config.lr_critic));
    const auto k = config.batch_size;
    ConditionalGanModel last_good = model;

    for (std::size_t it = 0; it < config.iterations; ++it) {
        if (config.lr_decay) {
            const double frac = 1.0 - static_cast<double>(it) / static_cast<double>(config.iterations);
            g_state.config.learning_rate = config.lr_generator * frac;
            d_state.config.learning_rate = config.lr_critic * frac;
        }
        try {
            CriticStep cs;
            for (std::size_t c = 0; c < config.n_critic; ++c) {
                const auto real = data.draw_labeled(k, rng);
                const auto z = model.prior.sample(k, rng);
                const auto eps = draw_eps(k, rng);
                ad::Tape tape;
                ad::Binding b(tape);
                const auto fake = model.generator.labels_forward(b, tape.constant(z), real.labels, true).value();
                const auto oh = onehot(real.labels, classes);
                cs = critic_step(model.critic, d_state, hstack(real.points, oh), hstack(fake, oh), eps,
                                 config.gp_lambda);
            }
            require_finite(model.critic.parameters(), "critic");

            const auto labels = data.draw_labeled(k, rng).labels;
            const auto z = model.prior.sample(k, rng);
            ad::Tape tape;
            ad::Binding b(tape);
            const auto fake = model.generator.labels_forward(b, tape.constant(z), labels, false);
            const auto input = ad::concat_cols(fake, tape.constant(onehot(labels, classes)));
            const auto loss = negative_mean(model.critic.forward(b, input, true));
            const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
            adam_step(params, tape.backward(loss, Tensor::scalar(1.0), vars), g_state, model.generator.trainable());
            require_finite(std::vector<const Tensor*>(params.begin(), params.end()), "generator");
            ++model.iterations;
            if (sink && config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations)) {
                nlohmann::ordered_json rec;
                rec["stage"] = "pretrain";
                rec["iteration"] = it;
                rec["critic_loss"] = cs.loss;
                rec["generator_loss"] = loss.value().item();
                rec["gp"] = cs.gp;
                rec["wasserstein"] = cs.wasserstein;
                sink(rec);
            }
        } catch (const NumericError& e) {
            throw DivergenceError("pretrain diverged at iteration " + std::to_string(it) + ": " + e.what(), it,
                                  to_checkpoint(last_good));
        }
        last_good = model;
    }
    return model;
}

DenseNetwork data_critic(const DenseNetwork& conditional_critic, std::size_t data_dim) {
    if (conditional_critic.input_dim() < data_dim) throw DimensionError("critic has fewer inputs than the data");
    auto layers = conditional_critic.layers();
    auto& first = layers.front();
    Tensor w({first.weight.rows(), data_dim});
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t c = 0; c < data_dim; ++c) w(r, c) = first.weight(r, c);
    }
    first.weight = std::move(w);
    for (auto& l : layers) l.frozen = false;
    return DenseNetwork(std::move(layers));
}

// ---- dual miner ------------------------------------------------------------------------

DualMiner DualMiner::make(const MinerArchitecture& arch, std::size_t embedding_dim, std::uint64_t seed) {
    DualMiner d;
    d.z = MinerNetwork::make(arch, derive_seed(seed, 40));
    std::vector<std::size_t> widths{arch.latent_dim};
    for (std::size_t i = 1; i < arch.layers; ++i) widths.push_back(arch.width);
    widths.push_back(embedding_dim);
    d.c = DenseNetwork::mlp(widths, Activation::relu, Activation::linear);
    Rng rng(derive_seed(seed, 41));
    init_normal(d.c, arch.init_std, rng);
    return d;
}

std::vector<Tensor*> DualMiner::parameters() {
    auto p = z.parameters();
    for (auto* t : c.parameters()) p.push_back(t);
    return p;
}

ad::Var cond_forward(ad::Binding& b, const ConditionalGenerator& gen, const DualMiner& dual, ad::Var u,
                     bool generator_constant) {
    if (dual.c.output_dim() != gen.embedding_dim()) throw DimensionError("M_c output != embedding dimension");
    const auto e = dual.c.forward(b, u);
    return gen.forward(b, dual.z.forward(b, u), e, generator_constant);
}

Tensor cond_sample(const ConditionalGenerator& gen, const DualMiner& dual, const Tensor& u) {
    ad::Tape tape;
    ad::Binding b(tape);
    return cond_forward(b, gen, dual, tape.constant(u), true).value();
}

// ---- transfer ---------------------------------------------------------------------------

CondRun make_cond_transfer(ConditionalGanModel model, const MinerArchitecture& arch, std::uint64_t seed) {
    model.validate();
    if (arch.latent_dim != model.generator.latent_dim()) throw DimensionError("miner latent dim != generator input");
    CondRun r;
    r.critic = data_critic(model.critic, model.generator.output_dim());
    r.dual = DualMiner::make(arch, model.generator.embedding_dim(), seed);
    r.source_generator_hash = model.generator.parameter_hash();
    r.model = std::move(model);
    r.seed = seed;
    return r;
}

namespace {

MiningPath cond_path(CondRun& r) {
    auto* gen = &r.model.generator;
    auto* dual = &r.dual;
    auto* critic = &r.critic;
    MiningPath p;
    p.evaluate = [gen, dual](const Tensor& u) { return cond_sample(*gen, *dual, u); };
    p.forward = [gen, dual, critic](ad::Binding& b, ad::Var u, bool constant) {
        return generator_objective(b, *critic, cond_forward(b, *gen, *dual, u, constant));
    };
    p.miner_params = dual->parameters();
    p.generator_params = gen->parameters();
    p.generator_trainable = gen->trainable();
    return p;
}

CondRun run_cond_stage(CondRun run, const MiningConfig& config, const SampleSource& target, bool joint,
                       const MetricSink& sink) {
    config.validate();
    if (target.dim() != run.model.generator.output_dim()) throw DimensionError("target dimension != generator output");
    const Checkpoint before = to_checkpoint(run);
    try {
        run.model.generator.set_frozen(!joint);
        auto& counter = joint ? run.stage2_done : run.stage1_done;
        PathRun pr{&run.critic, &run.model.prior, &counter, joint ? 3u : 2u, joint ? "finetune" : "mine"};
        run_mining_path(cond_path(run), pr, config, joint,
                        joint ? config.stage2_iterations : config.stage1_iterations, target, sink);
    } catch (const NumericError& e) {
        const auto it = joint ? run.stage2_done : run.stage1_done;
        throw DivergenceError(std::string(joint ? "finetune" : "mining") + " diverged at iteration " +
                                  std::to_string(it) + ": " + e.what(),
                              it, before);
    }
    return run;
}

} // namespace

CondRun train_cond_miner(CondRun run, const MiningConfig& config, const SampleSource& target,
                         const MetricSink& sink) {
    if (run.stage != Stage::initial) throw UsageError("train_cond_miner: run is already past stage 1");
    run = run_cond_stage(std::move(run), config, target, false, sink);
    if (run.model.generator.parameter_hash() != run.source_generator_hash) {
        throw std::logic_error("generator changed during stage 1");
    }
    run.stage = Stage::mine_only;
    return run;
}

CondRun finetune_cond(CondRun run, const MiningConfig& config, const SampleSource& target, const MetricSink& sink) {
    if (run.stage != Stage::mine_only) throw UsageError("finetune: stage 1 has not completed");
    run = run_cond_stage(std::move(run), config, target, true, sink);
    run.stage = Stage::full;
    return run;
}

Tensor cond_mined_sample(const CondRun& run, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("sample: n must be >= 1");
    Rng rng(seed);
    return cond_sample(run.model.generator, run.dual, run.model.prior.sample(n, rng));
}

// ---- family views ---------------------------------------------------------------------------

ClassView::ClassView(std::shared_ptr<ConditionalGenerator> gen, std::size_t cls) : gen_(std::move(gen)), cls_(cls) {
    if (!gen_) throw UsageError("class view of a null generator");
    if (cls_ >= gen_->classes()) throw DimensionError("class " + std::to_string(cls_) + " out of range");
}

nlohmann::ordered_json ClassView::store(Checkpoint& ckpt, const std::string&) const {
    const std::string backbone = "conditional";
    if (!ckpt.has(backbone + ".embedding")) gen_->store(ckpt, backbone);
    return {{"kind", "class_view"}, {"backbone", backbone}, {"class", cls_}};
}

GeneratorFamily as_family(std::shared_ptr<ConditionalGenerator> gen, const PriorSpec& prior,
                          const DenseNetwork& conditional_critic, const MinerArchitecture& arch, std::size_t window,
                          std::uint64_t seed) {
    if (!gen || gen->classes() == 0) throw UsageError("as_family needs a generator with at least one class");
    std::vector<std::shared_ptr<Generator>> views;
    std::vector<PriorSpec> priors;
    for (std::size_t k = 0; k < gen->classes(); ++k) {
        views.push_back(std::make_shared<ClassView>(gen, k));
        priors.push_back(prior);
    }
    auto critic = data_critic(conditional_critic, gen->output_dim());
    return make_family(std::move(views), std::move(priors), std::move(critic), arch, 0, window, seed);
}

std::vector<std::shared_ptr<Generator>> load_generators(const Checkpoint& ckpt) {
    std::vector<std::shared_ptr<Generator>> out;
    std::map<std::string, std::shared_ptr<ConditionalGenerator>> backbones;
    try {
        for (const auto& d : ckpt.metadata.at("generators")) {
            const auto kind = d.at("kind").get<std::string>();
            if (kind == "dense") {
                out.push_back(std::make_shared<DenseGenerator>(get_network(ckpt, d.at("prefix").get<std::string>())));
            } else if (kind == "class_view") {
                const auto prefix = d.at("backbone").get<std::string>();
                auto& shared = backbones[prefix];
                if (!shared) shared = std::make_shared<ConditionalGenerator>(ConditionalGenerator::load(ckpt, prefix));
                out.push_back(std::make_shared<ClassView>(shared, d.at("class").get<std::size_t>()));
            } else {
                throw FormatError("unknown generator kind '" + kind + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("family generators: ") + e.what());
    }
    return out;
}

// ---- persistence ----------------------------------------------------------------------------

Checkpoint to_checkpoint(const ConditionalGanModel& model) {
    Checkpoint ck;
    ck.kind = CheckpointKind::conditional;
    model.generator.store(ck, "generator");
    put_network(ck, "critic", model.critic);
    put_prior(ck, "prior", model.prior);
    ck.metadata["role"] = "model";
    ck.metadata["iterations"] = model.iterations;
    ck.metadata["seed"] = model.seed;
    ck.metadata["dataset"] = model.dataset;
    return ck;
}

namespace {

void read_model(const Checkpoint& ckpt, ConditionalGanModel& m) {
    const auto& md = ckpt.metadata;
    m.generator = ConditionalGenerator::load(ckpt, "generator");
    m.critic = get_network(ckpt, "critic");
    m.prior = get_prior(ckpt, "prior");
    m.iterations = md.at("iterations").get<std::size_t>();
    m.seed = md.at("seed").get<std::uint64_t>();
    m.dataset = md.at("dataset").get<std::string>();
    m.validate();
}

void require_role(const Checkpoint& ckpt, const char* role) {
    if (ckpt.kind != CheckpointKind::conditional || ckpt.metadata.value("role", std::string()) != role) {
        throw FormatError(std::string("expected a conditional ") + role + " checkpoint, got " +
                          std::string(checkpoint_kind_name(ckpt.kind)));
    }
}

} // namespace

ConditionalGanModel conditional_from_checkpoint(const Checkpoint& ckpt) {
    require_role(ckpt, "model");
    ConditionalGanModel m;
    try {
        read_model(ckpt, m);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("conditional checkpoint metadata: ") + e.what());
    }
    return m;
}

Checkpoint to_checkpoint(const CondRun& run) {
    Checkpoint ck = to_checkpoint(run.model);
    ck.metadata["role"] = "transfer";
    put_network(ck, "mining_critic", run.critic);
    put_network(ck, "miner_z", run.dual.z.network());
    put_network(ck, "miner_c", run.dual.c);
    auto& m = ck.metadata;
    m["stage"] = stage_name(run.stage);
    m["generator_policy"] = run.stage == Stage::full ? "finetuned" : "frozen";
    m["critic_init"] = "conditional critic data columns";
    m["source_generator_hash"] = run.source_generator_hash;
    m["stage1_iterations"] = run.stage1_done;
    m["stage2_iterations"] = run.stage2_done;
    m["transfer_seed"] = run.seed;
    m["target"] = run.target;
    return ck;
}

CondRun cond_run_from_checkpoint(const Checkpoint& ckpt) {
    require_role(ckpt, "transfer");
    CondRun r;
    try {
        read_model(ckpt, r.model);
        const auto& m = ckpt.metadata;
        r.critic = get_network(ckpt, "mining_critic");
        r.dual.z = MinerNetwork(get_network(ckpt, "miner_z"));
        r.dual.c = get_network(ckpt, "miner_c");
        r.stage = parse_stage(m.at("stage").get<std::string>());
        r.source_generator_hash = m.at("source_generator_hash").get<std::uint64_t>();
        r.stage1_done = m.at("stage1_iterations").get<std::size_t>();
        r.stage2_done = m.at("stage2_iterations").get<std::size_t>();
        r.seed = m.at("transfer_seed").get<std::uint64_t>();
        r.target = m.at("target").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("conditional checkpoint metadata: ") + e.what());
    }
    return r;
}

} // namespace minegan
