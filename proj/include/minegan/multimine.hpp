#pragma once

#include "minegan/miner.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

namespace minegan {

struct SupersampleEntry {
    std::size_t generator = 0;
    Tensor u;       // 1 x latent_i
    Tensor mined;   // 1 x latent_i
    Tensor output;  // 1 x data_dim
    double score = 0.0;
};

// One generated point per family member, in index order.
struct Supersample {
    std::vector<SupersampleEntry> entries;
    // Highest score; ties go to the lowest index.
    std::size_t winner() const;
};

// Lowest index of the maximum.
std::size_t argmax_lowest(std::span<const double> scores);

// Sliding window of per-minibatch normalized argmax counts.
class SelectorState {
public:
    explicit SelectorState(std::size_t generators = 1, std::size_t capacity = 200);

    std::size_t generators() const noexcept { return n_; }
    std::size_t capacity() const noexcept { return capacity_; }
    const std::deque<std::vector<double>>& window() const noexcept { return window_; }
    bool sealed() const noexcept { return sealed_; }

    // Adds one minibatch (counts must sum to 1) and evicts the oldest beyond
    // capacity. Throws UsageError once sealed.
    void push(std::vector<double> minibatch_counts);
    // Mean of the window; uniform while the window is empty. Sealed states
    // return the sealed values.
    std::vector<double> probabilities() const;
    // Fixes the probabilities for inference.
    void seal();
    // Resumes window updates (stage 2 after a stage-1 checkpoint).
    void reopen() noexcept { sealed_ = false; }
    // Restores a sealed snapshot.
    void restore(std::deque<std::vector<double>> window, std::vector<double> sealed_p);

    friend bool operator==(const SelectorState&, const SelectorState&) = default;

private:
    std::vector<double> mean_of_window() const;

    std::size_t n_ = 1;
    std::size_t capacity_ = 200;
    std::deque<std::vector<double>> window_;
    bool sealed_ = false;
    std::vector<double> sealed_p_;
};

// Normalized counts of how often each generator won.
std::vector<double> minibatch_counts(std::span<const std::size_t> winners, std::size_t generators);
SelectorState selector_update(SelectorState state, std::span<const Supersample> supersamples);
// Index drawn with the selector probabilities.
std::size_t selector_sample(const SelectorState& state, std::uint64_t seed);
std::size_t selector_sample(const SelectorState& state, Rng& rng);

struct GeneratorFamily {
    std::vector<std::shared_ptr<Generator>> generators;
    std::vector<PriorSpec> priors;
    std::vector<MinerNetwork> miners;
    DenseNetwork critic;
    std::size_t critic_source = 0;
    SelectorState selector;
    Selection selection = Selection::max;
    Stage stage = Stage::initial;
    std::vector<std::uint64_t> source_hashes;
    std::size_t stage1_done = 0;
    std::size_t stage2_done = 0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return generators.size(); }
    void validate() const;
};

// Family of independently pretrained GANs; the shared critic copies
// sources[critic_source].critic.
GeneratorFamily make_family(const std::vector<GanModel>& sources, const MinerArchitecture& arch,
                            std::size_t critic_source, std::size_t window, std::uint64_t seed);
// Family over existing generators (class views, for instance).
GeneratorFamily make_family(std::vector<std::shared_ptr<Generator>> generators, std::vector<PriorSpec> priors,
                            DenseNetwork critic, const MinerArchitecture& arch, std::size_t critic_source,
                            std::size_t window, std::uint64_t seed);

// K supersamples drawn together: per generator a K x latent block.
struct SupersampleBatch {
    std::vector<Tensor> u;
    std::vector<Tensor> mined;
    std::vector<Tensor> outputs;
    std::vector<Tensor> scores;  // K x 1 each
    std::vector<std::size_t> winners;

    std::size_t size() const noexcept { return winners.size(); }
    Supersample at(std::size_t row) const;
    // Winning outputs in supersample order.
    Tensor winning_outputs() const;
};

// Draws u for each generator in index order from `rng`, then scores.
SupersampleBatch draw_supersamples(const GeneratorFamily& family, std::size_t k, Rng& rng);
Supersample make_supersample(const GeneratorFamily& family, std::uint64_t seed);

// Max: E_k[max_i D(G_i(M_i(u_i)))] - E[D(x)] + lambda * GP against the winning
// fakes. Mean: every entry contributes; the GP pairs each real with each
// generator's fake.
CriticTerms multi_critic_objective(ad::Binding& b, const DenseNetwork& critic, const SupersampleBatch& batch,
                                   const Tensor& target, const Tensor& eps, double lambda, Selection selection);
// Max: -E_k[max_i D(...)] through the winning miners only. Mean: through all.
ad::Var multi_miner_objective(ad::Binding& b, const GeneratorFamily& family, const SupersampleBatch& batch,
                              Selection selection, bool generator_constant);

double multi_critic_loss(const GeneratorFamily& family, const SupersampleBatch& batch, const Tensor& target,
                         double lambda, const Tensor& eps);
double multi_miner_loss(const GeneratorFamily& family, const SupersampleBatch& batch);

// Selector probabilities, one row per 10 minibatches.
struct SelectorTraceRow {
    std::size_t minibatch = 0;
    std::vector<double> p;
};
using SelectorTrace = std::vector<SelectorTraceRow>;

GeneratorFamily train_multi(GeneratorFamily family, const MiningConfig& config, const SampleSource& target,
                            const MetricSink& sink = {}, SelectorTrace* trace = nullptr);
// Stage 2: the generators on winning paths train with their miners.
GeneratorFamily finetune_multi(GeneratorFamily family, const MiningConfig& config, const SampleSource& target,
                               const MetricSink& sink = {}, SelectorTrace* trace = nullptr);

// Per row: generator index from the selector, then G_i(M_i(u)).
Tensor family_sample(const GeneratorFamily& family, std::size_t n, std::uint64_t seed);
// Selector index per row for family_sample under the same seed.
std::vector<std::size_t> family_sample_indices(const GeneratorFamily& family, std::size_t n, std::uint64_t seed);

std::string selector_trace_csv(const SelectorTrace& trace, std::size_t generators);

// The selector is written sealed; the family's own state is left as is.
Checkpoint to_checkpoint(const GeneratorFamily& family);
GeneratorFamily family_from_checkpoint(const Checkpoint& ckpt);

// Restores the generators listed in a family checkpoint. Class views of one
// conditional generator come back sharing a single backbone.
std::vector<std::shared_ptr<Generator>> load_generators(const Checkpoint& ckpt);

} // namespace minegan
