#include "minegan/multimine.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace minegan {

std::size_t argmax_lowest(std::span<const double> scores) {
    if (scores.empty()) throw UsageError("argmax of an empty score list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

std::size_t Supersample::winner() const {
    std::vector<double> s;
    s.reserve(entries.size());
    for (const auto& e : entries) s.push_back(e.score);
    return entries.at(argmax_lowest(s)).generator;
}

// ---- selector -------------------------------------------------------------------

SelectorState::SelectorState(std::size_t generators, std::size_t capacity) : n_(generators), capacity_(capacity) {
    if (n_ == 0) throw UsageError("selector needs at least one generator");
    if (capacity_ == 0) throw ConfigError("selector_window", "must be >= 1");
}

void SelectorState::push(std::vector<double> counts) {
    if (sealed_) throw UsageError("selector is sealed");
    if (counts.size() != n_) throw DimensionError("selector: expected " + std::to_string(n_) + " counts");
    window_.push_back(std::move(counts));
    while (window_.size() > capacity_) window_.pop_front();
}

std::vector<double> SelectorState::mean_of_window() const {
    if (window_.empty()) return std::vector<double>(n_, 1.0 / static_cast<double>(n_));
    std::vector<double> p(n_, 0.0);
    for (const auto& row : window_) {
        for (std::size_t i = 0; i < n_; ++i) p[i] += row[i];
    }
    for (auto& v : p) v /= static_cast<double>(window_.size());
    return p;
}

std::vector<double> SelectorState::probabilities() const { return sealed_ ? sealed_p_ : mean_of_window(); }

void SelectorState::seal() {
    sealed_p_ = mean_of_window();
    sealed_ = true;
}

void SelectorState::restore(std::deque<std::vector<double>> window, std::vector<double> sealed_p) {
    for (const auto& row : window) {
        if (row.size() != n_) throw FormatError("selector window row has the wrong width");
    }
    if (sealed_p.size() != n_) throw FormatError("sealed selector probabilities have the wrong width");
    window_ = std::move(window);
    while (window_.size() > capacity_) window_.pop_front();
    sealed_p_ = std::move(sealed_p);
    sealed_ = true;
}

std::vector<double> minibatch_counts(std::span<const std::size_t> winners, std::size_t generators) {
    if (winners.empty()) throw UsageError("selector: empty minibatch");
    std::vector<double> c(generators, 0.0);
    for (auto w : winners) c.at(w) += 1.0;
    for (auto& v : c) v /= static_cast<double>(winners.size());
    return c;
}

SelectorState selector_update(SelectorState state, std::span<const Supersample> supersamples) {
    std::vector<std::size_t> winners;
    winners.reserve(supersamples.size());
    for (const auto& s : supersamples) winners.push_back(s.winner());
    state.push(minibatch_counts(winners, state.generators()));
    return state;
}

std::size_t selector_sample(const SelectorState& state, Rng& rng) {
    const auto p = state.probabilities();
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        cum += p[i];
        last_positive = i;
        if (u < cum) return i;
    }
    return last_positive;
}

std::size_t selector_sample(const SelectorState& state, std::uint64_t seed) {
    Rng rng(seed);
    return selector_sample(state, rng);
}

// ---- family ---------------------------------------------------------------------

void GeneratorFamily::validate() const {
    const auto n = generators.size();
    if (n == 0) throw UsageError("family is empty");
    if (priors.size() != n || miners.size() != n) throw DimensionError("family: generators, priors and miners differ in count");
    if (critic_source >= n) throw ConfigError("critic_source", "index out of range for " + std::to_string(n) + " sources");
    for (std::size_t i = 0; i < n; ++i) {
        if (generators[i]->output_dim() != generators[0]->output_dim()) {
            throw DimensionError("family generators disagree on output dimension");
        }
        if (priors[i].dim() != generators[i]->latent_dim() || miners[i].latent_dim() != generators[i]->latent_dim()) {
            throw DimensionError("family member " + std::to_string(i) + ": prior, miner and generator latent dims differ");
        }
    }
    if (critic.input_dim() != generators[0]->output_dim() || critic.output_dim() != 1) {
        throw DimensionError("family critic does not match the data dimension");
    }
    if (selector.generators() != n) throw DimensionError("selector width != family size");
}

GeneratorFamily make_family(std::vector<std::shared_ptr<Generator>> generators, std::vector<PriorSpec> priors,
                            DenseNetwork critic, const MinerArchitecture& arch, std::size_t critic_source,
                            std::size_t window, std::uint64_t seed) {
    GeneratorFamily f;
    const auto n = generators.size();
    if (n == 0) throw UsageError("family needs at least one generator");
    for (std::size_t i = 0; i < n; ++i) {
        MinerArchitecture a = arch;
        a.latent_dim = generators[i]->latent_dim();
        f.miners.push_back(MinerNetwork::make(a, derive_seed(seed, 20 + i)));
        f.source_hashes.push_back(generators[i]->parameter_hash());
    }
    f.generators = std::move(generators);
    f.priors = std::move(priors);
    f.critic = std::move(critic);
    f.critic_source = critic_source;
    f.selector = SelectorState(n, window);
    f.seed = seed;
    f.validate();
    return f;
}

GeneratorFamily make_family(const std::vector<GanModel>& sources, const MinerArchitecture& arch,
                            std::size_t critic_source, std::size_t window, std::uint64_t seed) {
    if (sources.empty()) throw UsageError("family needs at least one source");
    if (critic_source >= sources.size()) {
        throw ConfigError("critic_source", "index out of range for " + std::to_string(sources.size()) + " sources");
    }
    std::vector<std::shared_ptr<Generator>> gens;
    std::vector<PriorSpec> priors;
    for (const auto& s : sources) {
        s.validate();
        gens.push_back(std::make_shared<DenseGenerator>(s.generator));
        priors.push_back(s.prior);
    }
    return make_family(std::move(gens), std::move(priors), sources[critic_source].critic, arch, critic_source, window,
                       seed);
}

// ---- supersamples -------------------------------------------------------------------

Supersample SupersampleBatch::at(std::size_t row) const {
    Supersample s;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const std::size_t idx[] = {row};
        s.entries.push_back({i, rows_of(u[i], idx), rows_of(mined[i], idx), rows_of(outputs[i], idx), scores[i][row]});
    }
    return s;
}

Tensor SupersampleBatch::winning_outputs() const {
    const auto k = size();
    if (outputs.size() == 1) return outputs[0];
    const auto d = outputs.at(0).cols();
    Tensor out({k, d});
    for (std::size_t r = 0; r < k; ++r) {
        const auto src = outputs[winners[r]].row_span(r);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    return out;
}

SupersampleBatch draw_supersamples(const GeneratorFamily& family, std::size_t k, Rng& rng) {
    if (family.size() == 0) throw UsageError("family is empty");
    if (k == 0) throw UsageError("supersample batch must be non-empty");
    SupersampleBatch b;
    for (std::size_t i = 0; i < family.size(); ++i) b.u.push_back(family.priors[i].sample(k, rng));
    for (std::size_t i = 0; i < family.size(); ++i) {
        b.mined.push_back(family.miners[i].evaluate(b.u[i]));
        b.outputs.push_back(family.generators[i]->evaluate(b.mined[i]));
        b.scores.push_back(family.critic.evaluate(b.outputs[i]));
    }
    b.winners.resize(k);
    std::vector<double> row(family.size());
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t i = 0; i < family.size(); ++i) row[i] = b.scores[i][r];
        b.winners[r] = argmax_lowest(row);
    }
    return b;
}

Supersample make_supersample(const GeneratorFamily& family, std::uint64_t seed) {
    Rng rng(seed);
    return draw_supersamples(family, 1, rng).at(0);
}

// ---- objectives -----------------------------------------------------------------------

namespace {

Tensor tile_rows(const Tensor& t, std::size_t times) {
    Tensor out({t.rows() * times, t.cols()});
    for (std::size_t c = 0; c < times; ++c) {
        std::copy(t.values().begin(), t.values().end(), out.row_span(c * t.rows()).begin());
    }
    return out;
}

// Rows of the batch routed to generator i.
std::vector<std::size_t> rows_for(const SupersampleBatch& batch, std::size_t i, Selection selection) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        if (selection == Selection::mean || batch.winners[r] == i) rows.push_back(r);
    }
    return rows;
}

} // namespace

CriticTerms multi_critic_objective(ad::Binding& b, const DenseNetwork& critic, const SupersampleBatch& batch,
                                   const Tensor& target, const Tensor& eps, double lambda, Selection selection) {
    if (target.rows() != batch.size()) throw DimensionError("multi critic loss: one real per supersample");
    if (selection == Selection::max || batch.outputs.size() == 1) {
        return critic_objective(b, critic, target, batch.winning_outputs(), eps, lambda);
    }
    const auto n = batch.outputs.size();
    return critic_objective(b, critic, tile_rows(target, n), vstack(batch.outputs), tile_rows(eps, n), lambda);
}

ad::Var multi_miner_objective(ad::Binding& b, const GeneratorFamily& family, const SupersampleBatch& batch,
                              Selection selection, bool generator_constant) {
    auto& tape = b.tape();
    std::optional<ad::Var> total;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const auto rows = rows_for(batch, i, selection);
        if (rows.empty()) continue;
        const Tensor u = rows.size() == batch.size() ? batch.u[i] : rows_of(batch.u[i], rows);
        const auto fake = family.generators[i]->forward(b, family.miners[i].forward(b, tape.constant(u)),
                                                        generator_constant);
        const auto s = ad::sum_all(family.critic.forward(b, fake, true));
        total = total ? ad::add(*total, s) : s;
    }
    const double count = selection == Selection::mean ? static_cast<double>(batch.size() * family.size())
                                                      : static_cast<double>(batch.size());
    return ad::scale(*total, -1.0 / count);
}

double multi_critic_loss(const GeneratorFamily& family, const SupersampleBatch& batch, const Tensor& target,
                         double lambda, const Tensor& eps) {
    ad::Tape tape;
    ad::Binding b(tape);
    return multi_critic_objective(b, family.critic, batch, target, eps, lambda, family.selection).loss.value().item();
}

double multi_miner_loss(const GeneratorFamily& family, const SupersampleBatch& batch) {
    ad::Tape tape;
    ad::Binding b(tape);
    return multi_miner_objective(b, family, batch, family.selection, true).value().item();
}

// ---- training -------------------------------------------------------------------------

namespace {

// Generators sharing parameter tensors (class views) share one optimizer.
struct GeneratorGroup {
    std::vector<std::size_t> members;
    std::vector<Tensor*> params;
    std::vector<bool> trainable;
    AdamState state;
};

std::vector<GeneratorGroup> group_generators(GeneratorFamily& f, AdamConfig cfg) {
    std::vector<GeneratorGroup> groups;
    std::map<const Tensor*, std::size_t> owner;
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto params = f.generators[i]->parameters();
        const Tensor* key = params.empty() ? nullptr : params.front();
        auto it = owner.find(key);
        if (it != owner.end()) {
            groups[it->second].members.push_back(i);
            continue;
        }
        owner[key] = groups.size();
        GeneratorGroup g;
        g.members = {i};
        g.trainable = f.generators[i]->trainable();
        g.state = AdamState::for_parameters(params, cfg);
        g.params = std::move(params);
        groups.push_back(std::move(g));
    }
    return groups;
}

void run_family(GeneratorFamily& f, const MiningConfig& config, const SampleSource& target, bool joint,
                const MetricSink& sink, SelectorTrace* trace) {
    const auto& tc = config.train;
    const double scale = joint ? config.stage2_lr_scale : 1.0;
    auto d_state = AdamState::for_network(f.critic, tc.adam(joint ? scale * tc.lr_miner : tc.lr_critic));
    std::vector<AdamState> m_states;
    for (auto& m : f.miners) m_states.push_back(AdamState::for_network(m.network(), tc.adam(tc.lr_miner)));
    auto groups = joint ? group_generators(f, tc.adam(scale * tc.lr_miner)) : std::vector<GeneratorGroup>{};
    const auto k = tc.batch_size;
    const auto iterations = joint ? config.stage2_iterations : config.stage1_iterations;
    auto& counter = joint ? f.stage2_done : f.stage1_done;
    Rng rng(derive_seed(tc.seed, joint ? 3 : 2));

    for (std::size_t it = 0; it < iterations; ++it) {
        CriticStep cs;
        for (std::size_t c = 0; c < tc.n_critic; ++c) {
            const auto real = target.draw(k, rng);
            const auto batch = draw_supersamples(f, k, rng);
            const auto eps = draw_eps(k, rng);
            ad::Tape tape;
            ad::Binding b(tape);
            const auto terms = multi_critic_objective(b, f.critic, batch, real, eps, tc.gp_lambda, f.selection);
            const auto params = f.critic.parameters();
            const auto vars = b.vars(std::vector<const Tensor*>(params.begin(), params.end()));
            adam_step(f.critic, tape.backward(terms.loss, Tensor::scalar(1.0), vars), d_state);
            cs = {terms.loss.value().item(), terms.gp, terms.real_mean - terms.fake_mean};
        }
        require_finite(f.critic.parameters(), "critic");

        const auto batch = draw_supersamples(f, k, rng);
        ad::Tape tape;
        ad::Binding b(tape);
        const auto loss = multi_miner_objective(b, f, batch, f.selection, !joint);
        std::vector<const Tensor*> wrt;
        std::vector<std::size_t> miner_offsets;
        for (auto& m : f.miners) {
            miner_offsets.push_back(wrt.size());
            for (auto* p : m.parameters()) wrt.push_back(p);
        }
        std::vector<std::size_t> group_offsets;
        for (auto& g : groups) {
            group_offsets.push_back(wrt.size());
            wrt.insert(wrt.end(), g.params.begin(), g.params.end());
        }
        const auto vars = b.vars(wrt);
        const auto grads = tape.backward(loss, Tensor::scalar(1.0), vars);

        std::vector<bool> used(f.size(), false);
        for (std::size_t i = 0; i < f.size(); ++i) used[i] = !rows_for(batch, i, f.selection).empty();
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!used[i]) continue;
            const auto params = f.miners[i].parameters();
            adam_step(params, std::span<const Tensor>(grads.data() + miner_offsets[i], params.size()), m_states[i]);
            require_finite(std::vector<const Tensor*>(params.begin(), params.end()), "miner " + std::to_string(i));
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto& grp = groups[g];
            if (std::none_of(grp.members.begin(), grp.members.end(), [&](std::size_t i) { return used[i]; })) continue;
            adam_step(grp.params, std::span<const Tensor>(grads.data() + group_offsets[g], grp.params.size()), grp.state,
                      grp.trainable);
            require_finite(std::vector<const Tensor*>(grp.params.begin(), grp.params.end()), "generator");
        }

        f.selector.push(minibatch_counts(batch.winners, f.size()));
        ++counter;
        if (trace && (counter % 10 == 0 || it + 1 == iterations)) {
            trace->push_back({f.stage1_done + f.stage2_done, f.selector.probabilities()});
        }
        if (sink && tc.log_every > 0 && (it % tc.log_every == 0 || it + 1 == iterations)) {
            nlohmann::ordered_json rec;
            rec["stage"] = joint ? "finetune" : "mine";
            rec["iteration"] = it;
            rec["critic_loss"] = cs.loss;
            rec["miner_loss"] = loss.value().item();
            rec["gp"] = cs.gp;
            rec["wasserstein"] = cs.wasserstein;
            rec["p"] = f.selector.probabilities();
            sink(rec);
        }
    }
}

GeneratorFamily run_stage(GeneratorFamily family, const MiningConfig& config, const SampleSource& target, bool joint,
                          const MetricSink& sink, SelectorTrace* trace) {
    config.validate();
    family.validate();
    if (target.dim() != family.generators[0]->output_dim()) throw DimensionError("target dimension != generator output");
    // Class views share tensors with their backbone, so snapshot a deep copy.
    const Checkpoint before = to_checkpoint(family);
    try {
        for (auto& g : family.generators) g->set_frozen(!joint);
        family.selector.reopen();
        run_family(family, config, target, joint, sink, trace);
        family.selector.seal();
    } catch (const NumericError& e) {
        const auto it = joint ? family.stage2_done : family.stage1_done;
        throw DivergenceError(std::string(joint ? "finetune" : "mining") + " diverged at iteration " +
                                  std::to_string(it) + ": " + e.what(),
                              it, before);
    }
    return family;
}

} // namespace

GeneratorFamily train_multi(GeneratorFamily family, const MiningConfig& config, const SampleSource& target,
                            const MetricSink& sink, SelectorTrace* trace) {
    if (family.stage != Stage::initial) throw UsageError("train_multi: family is already past stage 1");
    auto out = run_stage(std::move(family), config, target, false, sink, trace);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.generators[i]->parameter_hash() != out.source_hashes[i]) {
            throw std::logic_error("generator changed during stage 1");
        }
    }
    out.stage = Stage::mine_only;
    return out;
}

GeneratorFamily finetune_multi(GeneratorFamily family, const MiningConfig& config, const SampleSource& target,
                               const MetricSink& sink, SelectorTrace* trace) {
    if (family.stage != Stage::mine_only) throw UsageError("finetune: stage 1 has not completed");
    auto out = run_stage(std::move(family), config, target, true, sink, trace);
    out.stage = Stage::full;
    return out;
}

std::vector<std::size_t> family_sample_indices(const GeneratorFamily& family, std::size_t n, std::uint64_t seed) {
    if (family.size() == 1) return std::vector<std::size_t>(n, 0);
    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = selector_sample(family.selector, rng);
    return idx;
}

Tensor family_sample(const GeneratorFamily& family, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("sample: n must be >= 1");
    family.validate();
    // A single generator draws exactly like mined_sample.
    Rng rng(seed);
    std::vector<std::size_t> idx(n, 0);
    if (family.size() > 1) {
        for (auto& i : idx) i = selector_sample(family.selector, rng);
    }
    Tensor out({n, family.generators[0]->output_dim()});
    for (std::size_t g = 0; g < family.size(); ++g) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < n; ++r) {
            if (idx[r] == g) rows.push_back(r);
        }
        if (rows.empty()) continue;
        const auto u = family.priors[g].sample(rows.size(), rng);
        const auto x = family.generators[g]->evaluate(family.miners[g].evaluate(u));
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const auto src = x.row_span(j);
            std::copy(src.begin(), src.end(), out.row_span(rows[j]).begin());
        }
    }
    return out;
}

std::string selector_trace_csv(const SelectorTrace& trace, std::size_t generators) {
    std::ostringstream os;
    os.precision(17);
    os << "minibatch";
    for (std::size_t i = 0; i < generators; ++i) os << ",p" << i;
    os << '\n';
    for (const auto& row : trace) {
        os << row.minibatch;
        for (double p : row.p) os << ',' << p;
        os << '\n';
    }
    return os.str();
}

// ---- persistence ----------------------------------------------------------------------

Checkpoint to_checkpoint(const GeneratorFamily& f) {
    Checkpoint ck;
    ck.kind = CheckpointKind::family;
    auto generators = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto tag = std::to_string(i);
        generators.push_back(f.generators[i]->store(ck, "generator." + tag));
        put_prior(ck, "prior." + tag, f.priors[i]);
        put_network(ck, "miner." + tag, f.miners[i].network());
    }
    put_network(ck, "critic", f.critic);
    auto& m = ck.metadata;
    m["size"] = f.size();
    m["generators"] = std::move(generators);
    const auto& w = f.selector.window();
    if (!w.empty()) {
        Tensor t({w.size(), f.selector.generators()});
        for (std::size_t r = 0; r < w.size(); ++r) std::copy(w[r].begin(), w[r].end(), t.row_span(r).begin());
        ck.put("selector.window", std::move(t));
    }
    ck.put("selector.p", Tensor::row(f.selector.probabilities()));
    m["selector_capacity"] = f.selector.capacity();
    m["critic_source"] = f.critic_source;
    m["selection"] = f.selection == Selection::max ? "max" : "mean";
    m["stage"] = stage_name(f.stage);
    m["source_hashes"] = f.source_hashes;
    m["stage1_iterations"] = f.stage1_done;
    m["stage2_iterations"] = f.stage2_done;
    m["seed"] = f.seed;
    return ck;
}

GeneratorFamily family_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != CheckpointKind::family) {
        throw FormatError("expected a family checkpoint, got " + std::string(checkpoint_kind_name(ckpt.kind)));
    }
    GeneratorFamily f;
    try {
        const auto& m = ckpt.metadata;
        const auto n = m.at("size").get<std::size_t>();
        f.generators = load_generators(ckpt);
        if (f.generators.size() != n) throw FormatError("family checkpoint lists the wrong number of generators");
        for (std::size_t i = 0; i < n; ++i) {
            const auto tag = std::to_string(i);
            f.priors.push_back(get_prior(ckpt, "prior." + tag));
            f.miners.emplace_back(get_network(ckpt, "miner." + tag));
        }
        f.critic = get_network(ckpt, "critic");
        f.selector = SelectorState(n, m.at("selector_capacity").get<std::size_t>());
        std::deque<std::vector<double>> window;
        if (ckpt.has("selector.window")) {
            const auto& t = ckpt.get("selector.window");
            for (std::size_t r = 0; r < t.rows(); ++r) window.emplace_back(t.row_span(r).begin(), t.row_span(r).end());
        }
        const auto& p = ckpt.get("selector.p");
        f.selector.restore(std::move(window), {p.values().begin(), p.values().end()});
        f.critic_source = m.at("critic_source").get<std::size_t>();
        const auto sel = m.at("selection").get<std::string>();
        if (sel != "max" && sel != "mean") throw FormatError("unknown selection '" + sel + "'");
        f.selection = sel == "max" ? Selection::max : Selection::mean;
        f.stage = parse_stage(m.at("stage").get<std::string>());
        f.source_hashes = m.at("source_hashes").get<std::vector<std::uint64_t>>();
        f.stage1_done = m.at("stage1_iterations").get<std::size_t>();
        f.stage2_done = m.at("stage2_iterations").get<std::size_t>();
        f.seed = m.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("family checkpoint metadata: ") + e.what());
    }
    f.validate();
    return f;
}

} // namespace minegan
