#pragma once

#include "minegan/multimine.hpp"

#include <memory>
#include <vector>

namespace minegan {

struct ConditionalArchitecture {
    std::size_t latent_dim = 8;
    std::size_t data_dim = 2;
    std::size_t classes = 2;
    std::size_t embedding_dim = 8;
    std::size_t gen_layers = 4;
    std::size_t gen_width = 64;
    std::size_t critic_layers = 3;
    std::size_t critic_width = 64;

    static ConditionalArchitecture from(const RunConfig& config, std::size_t data_dim, std::size_t classes);
};

// Dense backbone whose hidden layers are modulated by a class embedding e:
// act((h W^T + b) * (1 + e A^T) + e B^T). The output layer is plain affine.
class ConditionalGenerator {
public:
    ConditionalGenerator() = default;
    ConditionalGenerator(Tensor embedding, DenseNetwork backbone, std::vector<Tensor> scale_maps,
                         std::vector<Tensor> shift_maps);

    // He backbone, N(0, 1) embeddings, modulation maps ~ N(0, 0.1^2).
    static ConditionalGenerator make(const ConditionalArchitecture& arch, std::uint64_t seed);

    std::size_t classes() const noexcept { return embedding_.rows(); }
    std::size_t embedding_dim() const noexcept { return embedding_.cols(); }
    std::size_t latent_dim() const noexcept { return backbone_.input_dim(); }
    std::size_t output_dim() const noexcept { return backbone_.output_dim(); }

    // `embedding` holds one row per latent row.
    ad::Var forward(ad::Binding& b, ad::Var z, ad::Var embedding, bool as_constants) const;
    // Embeddings looked up as onehot(labels) * E.
    ad::Var labels_forward(ad::Binding& b, ad::Var z, std::span<const std::size_t> labels, bool as_constants) const;
    ad::Var class_forward(ad::Binding& b, ad::Var z, std::size_t cls, bool as_constants) const;

    Tensor evaluate(const Tensor& z, const Tensor& embedding) const;
    Tensor generate(const Tensor& z, std::size_t cls) const;

    const Tensor& embedding() const noexcept { return embedding_; }
    Tensor& embedding() noexcept { return embedding_; }
    const DenseNetwork& backbone() const noexcept { return backbone_; }
    DenseNetwork& backbone() noexcept { return backbone_; }
    const std::vector<Tensor>& scale_maps() const noexcept { return scale_; }
    std::vector<Tensor>& scale_maps() noexcept { return scale_; }
    const std::vector<Tensor>& shift_maps() const noexcept { return shift_; }
    std::vector<Tensor>& shift_maps() noexcept { return shift_; }

    // Backbone weights and biases, then E, then scale and shift maps.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<bool> trainable() const;
    std::uint64_t parameter_hash() const noexcept;
    void set_frozen(bool frozen) noexcept;
    bool frozen() const noexcept { return frozen_; }

    void store(Checkpoint& ckpt, const std::string& prefix) const;
    static ConditionalGenerator load(const Checkpoint& ckpt, const std::string& prefix);

    friend bool operator==(const ConditionalGenerator&, const ConditionalGenerator&) = default;

private:
    void validate() const;

    Tensor embedding_;  // classes x embedding_dim
    DenseNetwork backbone_;
    std::vector<Tensor> scale_;  // per hidden layer: width x embedding_dim
    std::vector<Tensor> shift_;
    bool frozen_ = false;
};

Tensor onehot(std::span<const std::size_t> labels, std::size_t classes);

// Source model: the critic scores [x, onehot(class)].
struct ConditionalGanModel {
    ConditionalGenerator generator;
    DenseNetwork critic;
    PriorSpec prior;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::string dataset;

    void validate() const;
};

ConditionalGanModel make_conditional_gan(const ConditionalArchitecture& arch, std::uint64_t seed);
// WGAN-GP on labelled data; fakes take the labels of the real batch.
ConditionalGanModel pretrain_conditional(ConditionalGanModel model, const TrainConfig& config,
                                         const SampleSource& data, const MetricSink& sink = {});

// Unconditional critic from the data columns of a conditional critic.
DenseNetwork data_critic(const DenseNetwork& conditional_critic, std::size_t data_dim);

// M_z: residual latent miner. M_c: plain MLP from u to embedding space with
// a linear output, weights ~ N(0, init_std^2).
struct DualMiner {
    MinerNetwork z;
    DenseNetwork c;

    static DualMiner make(const MinerArchitecture& arch, std::size_t embedding_dim, std::uint64_t seed);
    std::vector<Tensor*> parameters();

    friend bool operator==(const DualMiner&, const DualMiner&) = default;
};

// G(M_c(u), M_z(u)).
ad::Var cond_forward(ad::Binding& b, const ConditionalGenerator& gen, const DualMiner& dual, ad::Var u,
                     bool generator_constant);
Tensor cond_sample(const ConditionalGenerator& gen, const DualMiner& dual, const Tensor& u);

struct CondRun {
    Stage stage = Stage::initial;
    ConditionalGanModel model;
    DenseNetwork critic;  // unconditional mining critic
    DualMiner dual;
    std::uint64_t source_generator_hash = 0;
    std::size_t stage1_done = 0;
    std::size_t stage2_done = 0;
    std::uint64_t seed = 0;
    std::string target;
};

CondRun make_cond_transfer(ConditionalGanModel model, const MinerArchitecture& arch, std::uint64_t seed);
// Targets are unlabeled: only draw() is used.
CondRun train_cond_miner(CondRun run, const MiningConfig& config, const SampleSource& target,
                         const MetricSink& sink = {});
CondRun finetune_cond(CondRun run, const MiningConfig& config, const SampleSource& target,
                      const MetricSink& sink = {});
Tensor cond_mined_sample(const CondRun& run, std::size_t n, std::uint64_t seed);

// Fixed-class view of a shared conditional generator.
class ClassView final : public Generator {
public:
    ClassView(std::shared_ptr<ConditionalGenerator> gen, std::size_t cls);

    std::size_t latent_dim() const override { return gen_->latent_dim(); }
    std::size_t output_dim() const override { return gen_->output_dim(); }
    ad::Var forward(ad::Binding& b, ad::Var z, bool as_constants) const override {
        return gen_->class_forward(b, z, cls_, as_constants);
    }
    Tensor evaluate(const Tensor& z) const override { return gen_->generate(z, cls_); }
    std::vector<Tensor*> parameters() override { return gen_->parameters(); }
    std::vector<bool> trainable() const override { return gen_->trainable(); }
    std::uint64_t parameter_hash() const override { return gen_->parameter_hash(); }
    void set_frozen(bool frozen) override { gen_->set_frozen(frozen); }
    nlohmann::ordered_json store(Checkpoint& ckpt, const std::string& prefix) const override;

    std::size_t class_index() const noexcept { return cls_; }
    const std::shared_ptr<ConditionalGenerator>& shared() const noexcept { return gen_; }

private:
    std::shared_ptr<ConditionalGenerator> gen_;
    std::size_t cls_;
};

// One view per class over the shared generator; the family critic comes from
// the conditional critic's data columns.
GeneratorFamily as_family(std::shared_ptr<ConditionalGenerator> gen, const PriorSpec& prior,
                          const DenseNetwork& conditional_critic, const MinerArchitecture& arch, std::size_t window,
                          std::uint64_t seed);

Checkpoint to_checkpoint(const ConditionalGanModel& model);
ConditionalGanModel conditional_from_checkpoint(const Checkpoint& ckpt);
Checkpoint to_checkpoint(const CondRun& run);
CondRun cond_run_from_checkpoint(const Checkpoint& ckpt);

} // namespace minegan
