#include "minegan/gan.hpp"

#include <cmath>

namespace minegan {

// ---- types -----------------------------------------------------------------

PriorSpec PriorSpec::standard(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

void PriorSpec::validate() const {
    if (mean.empty()) throw DimensionError("prior dimension must be positive");
    if (variance.size() != mean.size()) throw DimensionError("prior mean/variance length mismatch");
    for (double v : variance) {
        if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("prior variances must be > 0");
    }
}

Tensor PriorSpec::sample(std::size_t n, Rng& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor z({n, dim()});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim(); ++d) z(i, d) = mean[d] + std::sqrt(variance[d]) * gauss(rng);
    }
    return z;
}

GanArchitecture GanArchitecture::from(const RunConfig& c, std::size_t data_dim) {
    return {c.latent_dim, data_dim, c.gen_layers, c.gen_width, c.critic_layers, c.critic_width};
}

void GanModel::validate() const {
    prior.validate();
    if (generator.input_dim() != prior.dim()) {
        throw DimensionError("generator input width " + std::to_string(generator.input_dim()) +
                             " != prior dimension " + std::to_string(prior.dim()));
    }
    if (critic.output_dim() != 1) throw DimensionError("critic output must be scalar");
    if (critic.input_dim() != generator.output_dim()) throw DimensionError("critic input width != generator output width");
}

namespace {

std::vector<std::size_t> widths(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out) {
    std::vector<std::size_t> w{in};
    for (std::size_t i = 0; i + 1 < layers; ++i) w.push_back(hidden);
    w.push_back(out);
    return w;
}

} // namespace

GanModel make_gan(const GanArchitecture& arch, std::uint64_t seed) {
    if (arch.gen_layers == 0 || arch.critic_layers == 0) throw UsageError("networks need at least one layer");
    GanModel m;
    m.prior = PriorSpec::standard(arch.latent_dim);
    m.generator = DenseNetwork::mlp(widths(arch.latent_dim, arch.gen_width, arch.gen_layers, arch.data_dim),
                                    Activation::relu, Activation::linear);
    m.critic = DenseNetwork::mlp(widths(arch.data_dim, arch.critic_width, arch.critic_layers, 1),
                                 Activation::leaky_relu, Activation::linear);
    Rng rng(derive_seed(seed, 0));
    init_he(m.generator, rng);
    init_he(m.critic, rng);
    m.seed = seed;
    return m;
}

TrainConfig TrainConfig::from(const RunConfig& c) {
    TrainConfig t;
    t.batch_size = c.batch_size;
    t.lr_generator = c.lr_generator;
    t.lr_critic = c.lr_critic;
    t.lr_miner = c.lr_miner;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.gp_lambda = c.gp_lambda;
    t.n_critic = c.n_critic;
    t.iterations = c.iterations;
    t.seed = c.seed;
    t.log_every = c.log_every;
    t.lr_decay = c.lr_decay;
    return t;
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("batch_size", "must be >= 2");
    if (!(gp_lambda >= 0.0)) throw ConfigError("gp_lambda", "must be >= 0");
    if (n_critic < 1) throw ConfigError("n_critic", "must be >= 1");
    if (!(lr_generator > 0.0) || !(lr_critic > 0.0) || !(lr_miner > 0.0)) throw ConfigError("lr", "learning rates must be > 0");
}

// ---- objectives --------------------------------------------------------------

ad::Var negative_mean(ad::Var scores) {
    return ad::scale(ad::sum_all(scores), -1.0 / static_cast<double>(scores.value().size()));
}

ad::Var gradient_penalty(ad::Binding& b, const DenseNetwork& critic, const Tensor& real, const Tensor& fake,
                         const Tensor& eps) {
    if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
        throw DimensionError("gradient penalty: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
    }
    if (eps.size() != real.rows()) throw DimensionError("gradient penalty: one interpolation weight per row");
    const auto n = real.rows();
    const auto d = real.cols();
    Tensor mixed({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mixed(i, j) = eps[i] * real(i, j) + (1.0 - eps[i]) * fake(i, j);
    }
    auto& tape = b.tape();
    const auto x = tape.leaf(std::move(mixed), true);
    const auto score = ad::sum_all(critic.forward(b, x));
    const ad::Var wrt[] = {x};
    const auto g = tape.grad(score, wrt)[0];
    const auto norm = ad::sqrt(ad::add_scalar(ad::sum_cols(ad::square(g)), 1e-12));
    return ad::mean_all(ad::square(ad::add_scalar(norm, -1.0)));
}

CriticTerms critic_objective(ad::Binding& b, const DenseNetwork& critic, const Tensor& real, const Tensor& fake,
                             const Tensor& eps, double lambda) {
    if (real.rows() == 0 || fake.rows() == 0) throw DimensionError("critic loss: empty batch");
    if (real.rows() != fake.rows()) throw DimensionError("critic loss: real and fake batches differ in size");
    auto& tape = b.tape();
    const auto fake_mean = ad::mean_all(critic.forward(b, tape.constant(fake)));
    const auto real_mean = ad::mean_all(critic.forward(b, tape.constant(real)));
    CriticTerms t;
    t.loss = ad::sub(fake_mean, real_mean);
    t.fake_mean = fake_mean.value().item();
    t.real_mean = real_mean.value().item();
    if (lambda > 0.0) {
        const auto gp = gradient_penalty(b, critic, real, fake, eps);
        t.gp = gp.value().item();
        t.loss = ad::add(t.loss, ad::scale(gp, lambda));
    }
    return t;
}

ad::Var generator_objective(ad::Binding& b, const DenseNetwork& critic, ad::Var fake) {
    return negative_mean(critic.forward(b, fake, true));
}

double gradient_penalty(const DenseNetwork& critic, const Tensor& real, const Tensor& fake, const Tensor& eps) {
    ad::Tape tape;
    ad::Binding b(tape);
    return gradient_penalty(b, critic, real, fake, eps).value().item();
}

double critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& real, const Tensor& noise,
                   double lambda, const Tensor& eps) {
    ad::Tape tape;
    ad::Binding b(tape);
    return critic_objective(b, critic, real, generator.evaluate(noise), eps, lambda).loss.value().item();
}

double critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& real, const Tensor& noise,
                   double lambda, Rng& rng) {
    return critic_loss(critic, generator, real, noise, lambda, draw_eps(real.rows(), rng));
}

double generator_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& noise) {
    ad::Tape tape;
    ad::Binding b(tape);
    const auto fake = generator.forward(b, tape.constant(noise), true);
    return generator_objective(b, critic, fake).value().item();
}

// ---- training ----------------------------------------------------------------

Tensor draw_eps(std::size_t n, Rng& rng) { return uniform(rng, n, 1); }

void require_finite(std::span<const Tensor* const> params, const std::string& what) {
    for (const auto* p : params) {
        if (!p->all_finite()) throw NumericError(what + ": parameters became non-finite");
    }
}

CriticStep critic_step(DenseNetwork& critic, AdamState& state, const Tensor& real, const Tensor& fake,
                       const Tensor& eps, double lambda) {
    ad::Tape tape;
    ad::Binding b(tape);
    const auto terms = critic_objective(b, critic, real, fake, eps, lambda);
    const auto params = critic.parameters();
    const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
    const auto grads = tape.backward(terms.loss, Tensor::scalar(1.0), vars);
    adam_step(critic, grads, state);
    return {terms.loss.value().item(), terms.gp, terms.real_mean - terms.fake_mean};
}

namespace {

double generator_step(DenseNetwork& generator, const DenseNetwork& critic, AdamState& state, const Tensor& z) {
    ad::Tape tape;
    ad::Binding b(tape);
    const auto fake = generator.forward(b, tape.constant(z));
    const auto loss = generator_objective(b, critic, fake);
    const auto params = generator.parameters();
    const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
    const auto grads = tape.backward(loss, Tensor::scalar(1.0), vars);
    adam_step(generator, grads, state);
    return loss.value().item();
}

} // namespace

GanModel pretrain(GanModel model, const TrainConfig& config, const SampleSource& data, const MetricSink& sink) {
    config.validate();
    model.validate();
    if (data.dim() != model.generator.output_dim()) {
        throw DimensionError("data dimension " + std::to_string(data.dim()) + " != generator output " +
                             std::to_string(model.generator.output_dim()));
    }
    if (config.iterations == 0) return model;

    Rng rng(derive_seed(config.seed, 1));
    auto g_state = AdamState::for_network(model.generator, config.adam(config.lr_generator));
    auto d_state = AdamState::for_network(model.critic, config.adam(config.lr_critic));
    const auto k = config.batch_size;
    GanModel last_good = model;

    for (std::size_t it = 0; it < config.iterations; ++it) {
        if (config.lr_decay) {
            const double frac = 1.0 - static_cast<double>(it) / static_cast<double>(config.iterations);
            g_state.config.learning_rate = config.lr_generator * frac;
            d_state.config.learning_rate = config.lr_critic * frac;
        }
        try {
            CriticStep cs;
            for (std::size_t c = 0; c < config.n_critic; ++c) {
                const auto real = data.draw(k, rng);
                const auto fake = model.generator.evaluate(model.prior.sample(k, rng));
                const auto eps = draw_eps(k, rng);
                cs = critic_step(model.critic, d_state, real, fake, eps, config.gp_lambda);
            }
            require_finite(model.critic.parameters(), "critic");
            const double gl = generator_step(model.generator, model.critic, g_state, model.prior.sample(k, rng));
            require_finite(model.generator.parameters(), "generator");
            ++model.iterations;
            if (sink && config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations)) {
                nlohmann::ordered_json rec;
                rec["stage"] = "pretrain";
                rec["iteration"] = it;
                rec["critic_loss"] = cs.loss;
                rec["generator_loss"] = gl;
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

GanModel pretrain(const GanArchitecture& arch, const TrainConfig& config, const SampleSource& data,
                  const MetricSink& sink) {
    return pretrain(make_gan(arch, config.seed), config, data, sink);
}

Tensor sample(const GanModel& model, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("sample: n must be >= 1");
    Rng rng(seed);
    return model.generator.evaluate(model.prior.sample(n, rng));
}

// ---- persistence ---------------------------------------------------------------

void put_prior(Checkpoint& ckpt, const std::string& prefix, const PriorSpec& prior) {
    ckpt.put(prefix + ".mean", Tensor::row(prior.mean));
    ckpt.put(prefix + ".variance", Tensor::row(prior.variance));
}

PriorSpec get_prior(const Checkpoint& ckpt, const std::string& prefix) {
    const auto& m = ckpt.get(prefix + ".mean");
    const auto& v = ckpt.get(prefix + ".variance");
    PriorSpec p{{m.values().begin(), m.values().end()}, {v.values().begin(), v.values().end()}};
    p.validate();
    return p;
}

nlohmann::ordered_json DenseGenerator::store(Checkpoint& ckpt, const std::string& prefix) const {
    put_network(ckpt, prefix, net_);
    return {{"kind", "dense"}, {"prefix", prefix}};
}

nlohmann::ordered_json DenseGeneratorView::store(Checkpoint& ckpt, const std::string& prefix) const {
    put_network(ckpt, prefix, *net_);
    return {{"kind", "dense"}, {"prefix", prefix}};
}

Checkpoint to_checkpoint(const GanModel& model) {
    Checkpoint ck;
    ck.kind = CheckpointKind::gan;
    put_network(ck, "generator", model.generator);
    put_network(ck, "critic", model.critic);
    put_prior(ck, "prior", model.prior);
    ck.metadata["iterations"] = model.iterations;
    ck.metadata["seed"] = model.seed;
    ck.metadata["dataset"] = model.dataset;
    return ck;
}

GanModel gan_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != CheckpointKind::gan) {
        throw FormatError("expected a gan checkpoint, got " + std::string(checkpoint_kind_name(ckpt.kind)));
    }
    GanModel m;
    m.generator = get_network(ckpt, "generator");
    m.critic = get_network(ckpt, "critic");
    m.prior = get_prior(ckpt, "prior");
    m.iterations = ckpt.metadata.value("iterations", std::size_t{0});
    m.seed = ckpt.metadata.value("seed", std::uint64_t{0});
    m.dataset = ckpt.metadata.value("dataset", std::string());
    m.validate();
    return m;
}

} // namespace minegan
