#pragma once

#include "minegan/adam.hpp"
#include "minegan/checkpoint.hpp"
#include "minegan/config.hpp"
#include "minegan/data.hpp"
#include "minegan/errors.hpp"
#include "minegan/network.hpp"
#include "minegan/rng.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace minegan {

// Diagonal Gaussian latent prior.
struct PriorSpec {
    std::vector<double> mean;
    std::vector<double> variance;

    static PriorSpec standard(std::size_t dim);
    std::size_t dim() const noexcept { return mean.size(); }
    void validate() const;
    Tensor sample(std::size_t n, Rng& rng) const;

    friend bool operator==(const PriorSpec&, const PriorSpec&) = default;
};

struct GanArchitecture {
    std::size_t latent_dim = 8;
    std::size_t data_dim = 2;
    std::size_t gen_layers = 4;
    std::size_t gen_width = 64;
    std::size_t critic_layers = 3;
    std::size_t critic_width = 64;

    static GanArchitecture from(const RunConfig& config, std::size_t data_dim);
};

struct GanModel {
    DenseNetwork generator;
    DenseNetwork critic;
    PriorSpec prior;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::string dataset;

    void validate() const;
};

// He-initialised generator (relu hidden, linear output) and critic
// (leaky relu hidden, scalar linear output).
GanModel make_gan(const GanArchitecture& arch, std::uint64_t seed);

struct TrainConfig {
    std::size_t batch_size = 64;
    double lr_generator = 1e-5;
    double lr_critic = 4e-4;
    double lr_miner = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double gp_lambda = 10.0;
    std::size_t n_critic = 5;
    std::size_t iterations = 2000;
    std::uint64_t seed = 0;
    std::size_t log_every = 50;
    bool lr_decay = true;  // linear decay to zero over the run

    static TrainConfig from(const RunConfig& config);
    void validate() const;
    AdamConfig adam(double lr) const { return {lr, beta1, beta2, 1e-8}; }
};

// A non-finite value appeared during training. Carries the last state whose
// parameters were all finite.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::size_t iteration, Checkpoint last_finite)
        : NumericError(what), iteration_(iteration), last_finite_(std::move(last_finite)) {}
    const char* kind() const noexcept override { return "divergence"; }
    std::size_t iteration() const noexcept { return iteration_; }
    const Checkpoint& last_finite() const noexcept { return last_finite_; }

private:
    std::size_t iteration_;
    Checkpoint last_finite_;
};

// Receives line-delimited metric records.
using MetricSink = std::function<void(const nlohmann::ordered_json&)>;

// Anything that maps latents to samples: dense generators, class views of a
// conditional generator.
class Generator {
public:
    virtual ~Generator() = default;
    virtual std::size_t latent_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    // With as_constants the generator's own parameters receive no adjoints.
    virtual ad::Var forward(ad::Binding& binding, ad::Var z, bool as_constants) const = 0;
    virtual Tensor evaluate(const Tensor& z) const = 0;
    virtual std::vector<Tensor*> parameters() = 0;
    virtual std::vector<bool> trainable() const = 0;
    virtual std::uint64_t parameter_hash() const = 0;
    // Records the frozen policy; does not change forward values.
    virtual void set_frozen(bool frozen) = 0;
    // Writes the parameters under `prefix`; returns a descriptor for loading.
    virtual nlohmann::ordered_json store(Checkpoint& ckpt, const std::string& prefix) const = 0;
};

class DenseGenerator final : public Generator {
public:
    explicit DenseGenerator(DenseNetwork net) : net_(std::move(net)) {}
    std::size_t latent_dim() const override { return net_.input_dim(); }
    std::size_t output_dim() const override { return net_.output_dim(); }
    ad::Var forward(ad::Binding& b, ad::Var z, bool as_constants) const override {
        return net_.forward(b, z, as_constants);
    }
    Tensor evaluate(const Tensor& z) const override { return net_.evaluate(z); }
    std::vector<Tensor*> parameters() override { return net_.parameters(); }
    std::vector<bool> trainable() const override { return net_.trainable(); }
    std::uint64_t parameter_hash() const override { return net_.parameter_hash(); }
    void set_frozen(bool frozen) override { net_.set_frozen(frozen); }
    nlohmann::ordered_json store(Checkpoint& ckpt, const std::string& prefix) const override;
    DenseNetwork& network() noexcept { return net_; }
    const DenseNetwork& network() const noexcept { return net_; }

private:
    DenseNetwork net_;
};

// Non-owning Generator over a network the caller keeps alive. Tape variables
// bind the network's own tensors, so gradients map back to it.
class DenseGeneratorView final : public Generator {
public:
    explicit DenseGeneratorView(const DenseNetwork& net) : net_(&net) {}
    std::size_t latent_dim() const override { return net_->input_dim(); }
    std::size_t output_dim() const override { return net_->output_dim(); }
    ad::Var forward(ad::Binding& b, ad::Var z, bool as_constants) const override {
        return net_->forward(b, z, as_constants);
    }
    Tensor evaluate(const Tensor& z) const override { return net_->evaluate(z); }
    std::vector<Tensor*> parameters() override { return const_cast<DenseNetwork*>(net_)->parameters(); }
    std::vector<bool> trainable() const override { return net_->trainable(); }
    std::uint64_t parameter_hash() const override { return net_->parameter_hash(); }
    void set_frozen(bool frozen) override { const_cast<DenseNetwork*>(net_)->set_frozen(frozen); }
    nlohmann::ordered_json store(Checkpoint& ckpt, const std::string& prefix) const override;

private:
    const DenseNetwork* net_;
};

// ---- objectives on a tape ------------------------------------------------

// Scalar -mean(scores) formed as (-1/n) * sum so that every reduction in the
// library shares one rounding sequence.
ad::Var negative_mean(ad::Var scores);

// E[(||grad D(xh)|| - 1)^2] at xh = eps*real + (1-eps)*fake, eps one weight
// per row. The interpolates are constants; the result is differentiable with
// respect to the critic's parameters.
ad::Var gradient_penalty(ad::Binding& b, const DenseNetwork& critic, const Tensor& real, const Tensor& fake,
                         const Tensor& eps);

struct CriticTerms {
    ad::Var loss;
    double fake_mean = 0.0;
    double real_mean = 0.0;
    double gp = 0.0;
};

// E[D(fake)] - E[D(real)] + lambda * GP over constant batches. The penalty is
// skipped entirely when lambda is 0.
CriticTerms critic_objective(ad::Binding& b, const DenseNetwork& critic, const Tensor& real, const Tensor& fake,
                             const Tensor& eps, double lambda);

// -E[D(fake)] with the critic bound as constants.
ad::Var generator_objective(ad::Binding& b, const DenseNetwork& critic, ad::Var fake);

// ---- value-level forms -----------------------------------------------------

double gradient_penalty(const DenseNetwork& critic, const Tensor& real, const Tensor& fake, const Tensor& eps);
double critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& real, const Tensor& noise,
                   double lambda, const Tensor& eps);
double critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& real, const Tensor& noise,
                   double lambda, Rng& rng);
double generator_loss(const DenseNetwork& critic, const DenseNetwork& generator, const Tensor& noise);

// ---- training --------------------------------------------------------------

struct CriticStep {
    double loss = 0.0;
    double gp = 0.0;
    double wasserstein = 0.0;  // E[D(real)] - E[D(fake)]
};

// One critic Adam update on constant batches.
CriticStep critic_step(DenseNetwork& critic, AdamState& state, const Tensor& real, const Tensor& fake,
                       const Tensor& eps, double lambda);

// Interpolation weights for one critic step.
Tensor draw_eps(std::size_t n, Rng& rng);

// Throws NumericError naming `what` if any parameter is non-finite.
void require_finite(std::span<const Tensor* const> params, const std::string& what);

// WGAN-GP pretraining of `model` on `data`. Zero iterations returns the model
// unchanged; otherwise model.iterations advances by config.iterations.
GanModel pretrain(GanModel model, const TrainConfig& config, const SampleSource& data, const MetricSink& sink = {});
// Initialises a model from `arch` and pretrains it.
GanModel pretrain(const GanArchitecture& arch, const TrainConfig& config, const SampleSource& data,
                  const MetricSink& sink = {});

Tensor sample(const GanModel& model, std::size_t n, std::uint64_t seed);

Checkpoint to_checkpoint(const GanModel& model);
GanModel gan_from_checkpoint(const Checkpoint& ckpt);
void put_prior(Checkpoint& ckpt, const std::string& prefix, const PriorSpec& prior);
PriorSpec get_prior(const Checkpoint& ckpt, const std::string& prefix);

} // namespace minegan
