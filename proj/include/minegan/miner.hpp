#pragma once

#include "minegan/gan.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace minegan {

struct MinerArchitecture {
    std::size_t latent_dim = 8;
    std::size_t layers = 2;  // affine layers
    std::size_t width = 16;
    double init_std = 0.01;

    // miner_layers = 0 picks the depth from the data dimension.
    static MinerArchitecture from(const RunConfig& config, std::size_t latent_dim, std::size_t data_dim);
};

// Residual MLP M(u) = u + f(u): relu hidden layers, linear last layer.
// With all parameters zero it is exactly the identity.
class MinerNetwork {
public:
    MinerNetwork() = default;
    explicit MinerNetwork(DenseNetwork net);

    // Weights and biases ~ N(0, init_std^2).
    static MinerNetwork make(const MinerArchitecture& arch, std::uint64_t seed);

    std::size_t latent_dim() const noexcept { return net_.input_dim(); }
    ad::Var forward(ad::Binding& binding, ad::Var u, bool as_constants = false) const;
    Tensor evaluate(const Tensor& u) const;

    DenseNetwork& network() noexcept { return net_; }
    const DenseNetwork& network() const noexcept { return net_; }
    std::vector<Tensor*> parameters() { return net_.parameters(); }
    std::size_t parameter_count() const noexcept { return net_.parameter_count(); }
    std::uint64_t parameter_hash() const noexcept { return net_.parameter_hash(); }

    friend bool operator==(const MinerNetwork&, const MinerNetwork&) = default;

private:
    DenseNetwork net_;
};

enum class Stage : std::uint8_t { initial, mine_only, full };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view text);

struct MiningConfig {
    TrainConfig train;  // batch, rates, betas, lambda, n_critic, seed, log_every
    std::size_t stage1_iterations = 1000;
    std::size_t stage2_iterations = 500;
    double stage2_lr_scale = 0.1;  // generator and critic rate in stage 2, relative to lr_miner

    static MiningConfig from(const RunConfig& config);
    void validate() const;
};

// One transfer from a pretrained GAN to a target set.
struct TransferRun {
    Stage stage = Stage::initial;
    GanModel model;  // generator + critic being adapted; critic starts as the source critic
    MinerNetwork miner;
    std::uint64_t source_generator_hash = 0;
    std::size_t stage1_done = 0;
    std::size_t stage2_done = 0;
    std::size_t stage1_budget = 0;
    std::size_t stage2_budget = 0;
    std::uint64_t seed = 0;
    std::string target;
};

TransferRun make_transfer(GanModel source, const MinerArchitecture& arch, std::uint64_t seed);

// ---- objectives ---------------------------------------------------------------

// E[D(G(M(u)))] - E[D(target)] + lambda * GP, interpolating targets with mined
// fakes. Differentiable w.r.t. the critic.
CriticTerms mine_critic_objective(ad::Binding& b, const DenseNetwork& critic, const Generator& generator,
                                  const MinerNetwork& miner, const Tensor& u, const Tensor& target,
                                  const Tensor& eps, double lambda);
// -E[D(G(M(u)))] with the critic as constants. With generator_constant only the
// miner receives adjoints.
ad::Var mine_generator_objective(ad::Binding& b, const DenseNetwork& critic, const Generator& generator,
                                 const MinerNetwork& miner, ad::Var u, bool generator_constant);

double mine_critic_loss(const DenseNetwork& critic, const DenseNetwork& generator, const MinerNetwork& miner,
                        const Tensor& u, const Tensor& target, double lambda, const Tensor& eps);
double mine_generator_loss(const DenseNetwork& critic, const DenseNetwork& generator, const MinerNetwork& miner,
                           const Tensor& u);

// ---- generic single-path mining loop ---------------------------------------

// A latent-to-sample pipeline with trainable mining parameters in front of a
// generator. Shared by single-GAN and dual-miner mining.
struct MiningPath {
    std::function<Tensor(const Tensor& u)> evaluate;
    // generator_constant: stage 1 (generator receives no adjoints).
    std::function<ad::Var(ad::Binding&, ad::Var u, bool generator_constant)> forward;
    std::vector<Tensor*> miner_params;
    std::vector<Tensor*> generator_params;
    std::vector<bool> generator_trainable;
};

struct PathRun {
    DenseNetwork* critic = nullptr;
    const PriorSpec* prior = nullptr;
    std::size_t* iteration_counter = nullptr;
    std::uint64_t stream = 0;  // RNG stream for this stage
    std::string stage_tag;
};

// Runs `iterations` adversarial steps. With joint the generator parameters are
// trained as well. Numeric failures propagate as NumericError.
void run_mining_path(const MiningPath& path, const PathRun& run, const MiningConfig& config, bool joint,
                     std::size_t iterations, const SampleSource& target, const MetricSink& sink);

// ---- stages -------------------------------------------------------------------

// Stage 1: miner and critic trained, generator frozen.
TransferRun train_miner(TransferRun run, const MiningConfig& config, const SampleSource& target,
                        const MetricSink& sink = {});
// Stage 2: miner, generator and critic trained jointly.
TransferRun finetune(TransferRun run, const MiningConfig& config, const SampleSource& target,
                     const MetricSink& sink = {});

// n samples of G(M(u)), u from the source prior.
Tensor mined_sample(const TransferRun& run, std::size_t n, std::uint64_t seed);

// Pretraining from scratch on the target with the combined mining budget.
GanModel scratch_baseline(const GanArchitecture& arch, const MiningConfig& config, const SampleSource& target,
                          const MetricSink& sink = {});

Checkpoint to_checkpoint(const TransferRun& run);
TransferRun transfer_from_checkpoint(const Checkpoint& ckpt);

} // namespace minegan
