#include "minegan/cli.hpp"

#include "minegan/checkpoint.hpp"
#include "minegan/condmine.hpp"
#include "minegan/errors.hpp"
#include "minegan/eval.hpp"
#include "minegan/gan.hpp"
#include "minegan/miner.hpp"
#include "minegan/multimine.hpp"

#include <openssl/evp.h>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"

namespace minegan::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 7> kCommandNames{"pretrain", "mine", "finetune", "sample",
                                                         "eval",     "ablate", "report"};
constexpr std::array<std::string_view, 7> kCommandHelp{
    "train a source GAN on `data` -> model.ckpt",
    "stage 1 toward `target` from `source` checkpoint(s) -> mine.ckpt (+ selector_trace.csv)",
    "stage 2 from a mine checkpoint -> finetune.ckpt",
    "draw from `checkpoint` -> samples.csv and samples.svg (2-D) or pca.csv",
    "metrics of `checkpoint` against `real` (or `target`) -> report.json",
    "miner depth and max/mean selection sweeps -> ablate.csv",
    "collate `reports` -> report.csv"};

// Derived RNG streams for inputs drawn from mixture specs.
constexpr std::uint64_t kDataStream = 100;
constexpr std::uint64_t kTargetStream = 101;
constexpr std::uint64_t kRealStream = 102;
constexpr std::uint64_t kClassifierStream = 103;
constexpr std::uint64_t kSampleStream = 104;
constexpr std::uint64_t kEvalStream = 105;

std::string hex(std::span<const unsigned char> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

std::string fixed(double v, int precision = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

std::string full(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// Staging directory renamed onto the final path on success.
class OutputDir {
public:
    explicit OutputDir(fs::path out) : out_(std::move(out)) {
        if (out_.empty()) throw UsageError("--out is required");
        if (fs::exists(out_)) {
            if (!fs::is_directory(out_) || !fs::is_empty(out_)) {
                throw UsageError("output directory " + out_.string() + " exists and is not empty");
            }
        }
        const auto parent = out_.has_parent_path() ? out_.parent_path() : fs::path(".");
        fs::create_directories(parent);
        staging_ = parent / (out_.filename().string() + ".partial-" + std::to_string(::getpid()));
        fs::remove_all(staging_);
        fs::create_directory(staging_);
    }
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;
    ~OutputDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    fs::path file(const std::string& name) const { return staging_ / name; }

    void commit() {
        if (fs::exists(out_)) fs::remove(out_);  // empty by construction
        fs::rename(staging_, out_);
        committed_ = true;
    }

private:
    fs::path out_;
    fs::path staging_;
    bool committed_ = false;
};

class MetricsFile {
public:
    explicit MetricsFile(const fs::path& path) : os_(path, std::ios::binary) {
        if (!os_) throw std::ios_base::failure("cannot open " + path.string());
    }
    MetricSink sink(json extra = json::object()) {
        return [this, extra = std::move(extra)](const json& record) {
            if (extra.empty()) {
                os_ << record.dump() << '\n';
                return;
            }
            json r = extra;
            for (const auto& [k, v] : record.items()) r[k] = v;
            os_ << r.dump() << '\n';
        };
    }
    void close() { os_.close(); }

private:
    std::ofstream os_;
};

bool is_spec(const std::string& path) { return fs::path(path).extension() == ".json"; }

const std::string& require(const std::string& value, const char* key) {
    if (value.empty()) throw ConfigError(key, "required by this command");
    return value;
}

FiniteSource target_source(const RunConfig& config) {
    require(config.target, "target");
    return FiniteSource(load_samples(config.target, config.target_samples, derive_seed(config.seed, kTargetStream)).points);
}

// Real reference set for metrics: `real`, falling back to `target`.
Tensor real_set(const RunConfig& config) {
    if (!config.real.empty()) {
        return load_samples(config.real, config.real_samples, derive_seed(config.seed, kRealStream)).points;
    }
    if (!config.target.empty()) {
        return load_samples(config.target, config.target_samples, derive_seed(config.seed, kTargetStream)).points;
    }
    throw ConfigError("real", "a real or target set is required");
}

struct Sampler {
    GeneratedSource draw;
    std::size_t dim = 0;
};

Sampler sampler_for(const Checkpoint& ck) {
    switch (ck.kind) {
    case CheckpointKind::gan: {
        auto m = std::make_shared<GanModel>(gan_from_checkpoint(ck));
        return {[m](std::size_t n, std::uint64_t s) { return sample(*m, n, s); }, m->generator.output_dim()};
    }
    case CheckpointKind::miner: {
        auto r = std::make_shared<TransferRun>(transfer_from_checkpoint(ck));
        return {[r](std::size_t n, std::uint64_t s) { return mined_sample(*r, n, s); },
                r->model.generator.output_dim()};
    }
    case CheckpointKind::family: {
        auto f = std::make_shared<GeneratorFamily>(family_from_checkpoint(ck));
        return {[f](std::size_t n, std::uint64_t s) { return family_sample(*f, n, s); },
                f->generators.front()->output_dim()};
    }
    case CheckpointKind::conditional:
        if (ck.metadata.value("role", std::string()) == "transfer") {
            auto r = std::make_shared<CondRun>(cond_run_from_checkpoint(ck));
            return {[r](std::size_t n, std::uint64_t s) { return cond_mined_sample(*r, n, s); },
                    r->model.generator.output_dim()};
        } else {
            // Classes drawn uniformly, then z from the prior.
            auto m = std::make_shared<ConditionalGanModel>(conditional_from_checkpoint(ck));
            return {[m](std::size_t n, std::uint64_t s) {
                        Rng rng(s);
                        const auto& gen = m->generator;
                        std::uniform_int_distribution<std::size_t> pick(0, gen.classes() - 1);
                        std::vector<std::size_t> labels(n);
                        for (auto& l : labels) l = pick(rng);
                        const Tensor z = m->prior.sample(n, rng);
                        Tensor e = Tensor::zeros(n, gen.embedding_dim());
                        for (std::size_t i = 0; i < n; ++i) {
                            const auto row = gen.embedding().row_span(labels[i]);
                            std::copy(row.begin(), row.end(), e.row_span(i).begin());
                        }
                        return gen.evaluate(z, e);
                    },
                    m->generator.output_dim()};
        }
    case CheckpointKind::classifier:
        break;
    }
    throw UsageError("checkpoint of kind " + std::string(checkpoint_kind_name(ck.kind)) + " cannot generate samples");
}

void write_trace(const OutputDir& dir, const SelectorTrace& trace, std::size_t generators) {
    write_text_atomic(dir.file("selector_trace.csv"), selector_trace_csv(trace, generators));
}

EvalConfig eval_config(const RunConfig& config) {
    EvalConfig e;
    e.cap = config.eval_cap;
    e.bandwidth = config.kmmd_bandwidth;
    e.seed = derive_seed(config.seed, kEvalStream);
    return e;
}

// ---- subcommands -----------------------------------------------------------

void do_pretrain(const RunConfig& config, const OutputDir& dir, const MetricSink& sink) {
    const auto& data = require(config.data, "data");
    std::unique_ptr<SampleSource> source;
    if (is_spec(data)) {
        Rng rng(derive_seed(config.seed, kDataStream));
        auto batch = MixtureSpec::load(data).draw(config.data_samples, rng);
        source = std::make_unique<FiniteSource>(std::move(batch.points), std::move(batch.labels));
    } else {
        source = std::make_unique<FiniteSource>(load_samples(data, config.data_samples, derive_seed(config.seed, kDataStream)).points);
    }
    auto train = TrainConfig::from(config);
    if (config.conditional) {
        train.lr_generator = config.cond_lr_generator;
        auto model = make_conditional_gan(ConditionalArchitecture::from(config, source->dim(), source->classes()),
                                          config.seed);
        model.dataset = data;
        model = pretrain_conditional(std::move(model), train, *source, sink);
        save_checkpoint(to_checkpoint(model), dir.file("model.ckpt"));
    } else {
        auto model = make_gan(GanArchitecture::from(config, source->dim()), config.seed);
        model.dataset = data;
        model = pretrain(std::move(model), train, *source, sink);
        save_checkpoint(to_checkpoint(model), dir.file("model.ckpt"));
    }
}

std::vector<GanModel> load_sources(const RunConfig& config) {
    if (config.source.empty()) throw ConfigError("source", "at least one source checkpoint is required");
    std::vector<GanModel> models;
    for (const auto& path : config.source) {
        const auto ck = load_checkpoint(path);
        if (ck.kind != CheckpointKind::gan) {
            throw UsageError("source " + path + " is a " + std::string(checkpoint_kind_name(ck.kind)) +
                             " checkpoint; mining takes pretrained GANs");
        }
        models.push_back(gan_from_checkpoint(ck));
    }
    return models;
}

void do_mine(const RunConfig& config, const OutputDir& dir, const MetricSink& sink) {
    const auto target = target_source(config);
    const auto mining = MiningConfig::from(config);

    if (config.source.size() == 1) {
        const auto ck = load_checkpoint(config.source.front());
        if (ck.kind == CheckpointKind::conditional) {
            auto model = conditional_from_checkpoint(ck);
            const auto arch = MinerArchitecture::from(config, model.prior.dim(), model.generator.output_dim());
            if (config.cond_strategy == CondStrategy::dual_miner) {
                auto run = make_cond_transfer(std::move(model), arch, config.seed);
                run.target = config.target;
                run = train_cond_miner(std::move(run), mining, target, sink);
                save_checkpoint(to_checkpoint(run), dir.file("mine.ckpt"));
            } else {
                auto shared = std::make_shared<ConditionalGenerator>(model.generator);
                auto family = as_family(shared, model.prior, model.critic, arch, config.selector_window, config.seed);
                SelectorTrace trace;
                family = train_multi(std::move(family), mining, target, sink, &trace);
                save_checkpoint(to_checkpoint(family), dir.file("mine.ckpt"));
                write_trace(dir, trace, family.size());
            }
            return;
        }
    }

    auto models = load_sources(config);
    const auto arch = MinerArchitecture::from(config, models.front().prior.dim(), models.front().generator.output_dim());
    if (models.size() == 1) {
        auto run = make_transfer(std::move(models.front()), arch, config.seed);
        run.target = config.target;
        run = train_miner(std::move(run), mining, target, sink);
        save_checkpoint(to_checkpoint(run), dir.file("mine.ckpt"));
        return;
    }
    auto family = make_family(models, arch, config.critic_source, config.selector_window, config.seed);
    family.selection = config.selection;
    SelectorTrace trace;
    family = train_multi(std::move(family), mining, target, sink, &trace);
    save_checkpoint(to_checkpoint(family), dir.file("mine.ckpt"));
    write_trace(dir, trace, family.size());
}

void do_finetune(const RunConfig& config, const OutputDir& dir, const MetricSink& sink) {
    const auto ck = load_checkpoint(require(config.checkpoint, "checkpoint"));
    const auto target = target_source(config);
    const auto mining = MiningConfig::from(config);
    switch (ck.kind) {
    case CheckpointKind::miner:
        save_checkpoint(to_checkpoint(finetune(transfer_from_checkpoint(ck), mining, target, sink)),
                        dir.file("finetune.ckpt"));
        return;
    case CheckpointKind::family: {
        SelectorTrace trace;
        auto family = finetune_multi(family_from_checkpoint(ck), mining, target, sink, &trace);
        save_checkpoint(to_checkpoint(family), dir.file("finetune.ckpt"));
        write_trace(dir, trace, family.size());
        return;
    }
    case CheckpointKind::conditional:
        if (ck.metadata.value("role", std::string()) == "transfer") {
            save_checkpoint(to_checkpoint(finetune_cond(cond_run_from_checkpoint(ck), mining, target, sink)),
                            dir.file("finetune.ckpt"));
            return;
        }
        break;
    default:
        break;
    }
    throw UsageError("finetune needs a checkpoint written by mine");
}

std::vector<std::string> column_names(const char* prefix, std::size_t d) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < d; ++j) names.push_back(prefix + std::to_string(j));
    return names;
}

void do_sample(const RunConfig& config, const OutputDir& dir, const MetricSink&) {
    const auto sampler = sampler_for(load_checkpoint(require(config.checkpoint, "checkpoint")));
    const Tensor points = sampler.draw(config.sample_count, derive_seed(config.seed, kSampleStream));
    save_csv(points, dir.file("samples.csv"), column_names("x", points.cols()));
    if (points.cols() == 2) {
        Tensor overlay;
        if (!config.target.empty()) {
            overlay = load_samples(config.target, config.target_samples, derive_seed(config.seed, kTargetStream)).points;
            if (overlay.cols() != 2) overlay = Tensor();
        }
        write_text_atomic(dir.file("samples.svg"), scatter_svg(points, overlay));
    } else if (points.cols() > 2) {
        save_csv(pca2(points), dir.file("pca.csv"), {"pc1", "pc2"});
    }
}

void do_eval(const RunConfig& config, const OutputDir& dir, const MetricSink&) {
    const auto sampler = sampler_for(load_checkpoint(require(config.checkpoint, "checkpoint")));
    const Tensor real = real_set(config);
    auto e = eval_config(config);
    std::optional<DenseClassifier> clf;
    if (config.target_class >= 0) {
        ClassifierConfig c;
        c.iterations = config.classifier_iterations;
        c.seed = derive_seed(config.seed, kClassifierStream);
        clf = DenseClassifier::train(MixtureSource(MixtureSpec::load(require(config.classifier_data, "classifier_data"))), c);
        e.classifier = &*clf;
        e.target_class = static_cast<std::size_t>(config.target_class);
    }
    write_text_atomic(dir.file("report.json"), build_report(sampler.draw, real, e).to_json().dump(2) + "\n");
}

void do_ablate(const RunConfig& config, const OutputDir& dir, MetricsFile& metrics) {
    const auto models = load_sources(config);
    const auto target = target_source(config);
    const Tensor real = real_set(config);
    const std::size_t latent = models.front().prior.dim();
    const std::size_t d = models.front().generator.output_dim();

    std::ostringstream csv;
    csv << "sweep,variant,seed,frechet,kmmd,mean_variance,p\n";
    std::size_t index = 0;

    // Each variant: seed + variant index, nothing shared between variants.
    auto run_variant = [&](const std::string& sweep, const std::string& variant, std::size_t depth, Selection sel) {
        RunConfig c = config;
        c.seed = config.seed + index++;
        c.miner_layers = depth;
        c.selection = sel;
        const auto mining = MiningConfig::from(c);
        const auto arch = MinerArchitecture::from(c, latent, d);
        const auto sink = metrics.sink(json{{"sweep", sweep}, {"variant", variant}});
        GeneratedSource gen;
        std::string p;
        if (models.size() == 1) {
            auto run = std::make_shared<TransferRun>(
                train_miner(make_transfer(models.front(), arch, c.seed), mining, target, sink));
            gen = [run](std::size_t n, std::uint64_t s) { return mined_sample(*run, n, s); };
        } else {
            auto family = make_family(models, arch, c.critic_source, c.selector_window, c.seed);
            family.selection = sel;
            auto trained = std::make_shared<GeneratorFamily>(train_multi(std::move(family), mining, target, sink));
            for (double v : trained->selector.probabilities()) p += (p.empty() ? "" : " ") + fixed(v);
            gen = [trained](std::size_t n, std::uint64_t s) { return family_sample(*trained, n, s); };
        }
        auto e = eval_config(c);
        const auto r = build_report(gen, real, e);
        csv << sweep << ',' << variant << ',' << c.seed << ',' << full(r.frechet) << ',' << full(r.kmmd) << ','
            << full(r.mean_variance) << ',' << p << '\n';
    };

    for (std::size_t depth : config.ablate_depths) {
        if (depth == 0) throw ConfigError("ablate_depths", "depths must be positive");
        run_variant("depth", std::to_string(depth), depth, config.selection);
    }
    if (models.size() > 1) {
        run_variant("selection", "max", config.miner_layers, Selection::max);
        run_variant("selection", "mean", config.miner_layers, Selection::mean);
    }
    write_text_atomic(dir.file("ablate.csv"), csv.str());
}

void do_report(const RunConfig& config, const OutputDir& dir, const MetricSink&) {
    if (config.reports.empty()) throw ConfigError("reports", "at least one report is required");
    std::ostringstream csv;
    csv << "run,frechet,kmmd,mean_variance,classifier_error,n_generated,n_real,seed\n";
    for (const auto& path : config.reports) {
        const auto bytes = read_file(path);
        EvalReport r;
        try {
            r = EvalReport::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": " + e.what());
        }
        const auto p = fs::path(path);
        const std::string run = p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
        csv << run << ',' << full(r.frechet) << ',' << full(r.kmmd) << ',' << full(r.mean_variance) << ','
            << (r.classifier_error ? full(*r.classifier_error) : "") << ',' << r.n_generated << ',' << r.n_real
            << ',' << r.seed << '\n';
    }
    write_text_atomic(dir.file("report.csv"), csv.str());
}

// Input paths the command reads, keyed by config key.
std::vector<std::pair<std::string, std::string>> inputs_of(Command command, const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> in;
    auto add = [&](const char* key, const std::string& path) {
        if (!path.empty()) in.emplace_back(key, path);
    };
    switch (command) {
    case Command::pretrain:
        add("data", c.data);
        break;
    case Command::mine:
    case Command::ablate:
        for (const auto& s : c.source) add("source", s);
        add("target", c.target);
        if (command == Command::ablate) add("real", c.real);
        break;
    case Command::finetune:
        add("checkpoint", c.checkpoint);
        add("target", c.target);
        break;
    case Command::sample:
        add("checkpoint", c.checkpoint);
        add("target", c.target);
        break;
    case Command::eval:
        add("checkpoint", c.checkpoint);
        add("real", c.real);
        add("target", c.target);
        if (c.target_class >= 0) add("classifier_data", c.classifier_data);
        break;
    case Command::report:
        for (const auto& r : c.reports) add("reports", r);
        break;
    }
    return in;
}

std::string text_hash(std::string_view text) {
    return blob_hash({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void execute(Command command, const RunConfig& config, const std::string& config_text, const fs::path& out) {
    const auto inputs = inputs_of(command, config);
    json manifest;
    manifest["command"] = command_name(command);
    manifest["seed"] = config.seed;
    manifest["config"] = config_text;
    manifest["config_hash"] = text_hash(config_text);
    json in = json::array();
    for (const auto& [key, path] : inputs) in.push_back({{"key", key}, {"path", path}, {"blob", file_hash(path)}});
    manifest["inputs"] = std::move(in);

    OutputDir dir(out);
    write_text_atomic(dir.file("config.resolved"), config_text);
    MetricsFile metrics(dir.file("metrics.jsonl"));
    const auto sink = metrics.sink();

    auto finish = [&](const std::string& status) {
        metrics.close();
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(dir.file(""))) {
            if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
        }
        std::sort(names.begin(), names.end());
        json outputs = json::array();
        for (const auto& name : names) outputs.push_back({{"file", name}, {"blob", file_hash(dir.file(name))}});
        manifest["outputs"] = std::move(outputs);
        manifest["status"] = status;
        write_text_atomic(dir.file("manifest.json"), manifest.dump(2) + "\n");
        dir.commit();
    };

    try {
        switch (command) {
        case Command::pretrain: do_pretrain(config, dir, sink); break;
        case Command::mine: do_mine(config, dir, sink); break;
        case Command::finetune: do_finetune(config, dir, sink); break;
        case Command::sample: do_sample(config, dir, sink); break;
        case Command::eval: do_eval(config, dir, sink); break;
        case Command::ablate: do_ablate(config, dir, metrics); break;
        case Command::report: do_report(config, dir, sink); break;
        }
    } catch (const DivergenceError& e) {
        save_checkpoint(e.last_finite(), dir.file("last_finite.ckpt"));
        manifest["error"] = error_record(e);
        finish("diverged");
        throw;
    }
    finish("ok");
}

} // namespace

std::string_view command_name(Command c) { return kCommandNames.at(static_cast<std::size_t>(c)); }

Command parse_command(std::string_view name) {
    for (std::size_t i = 0; i < kCommandNames.size(); ++i) {
        if (kCommandNames[i] == name) return static_cast<Command>(i);
    }
    throw UsageError("unknown command '" + std::string(name) + "'");
}

std::string blob_hash(std::span<const std::uint8_t> bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
        throw std::runtime_error("SHA-1 digest failed");
    }
    return hex({md.data(), len});
}

std::string file_hash(const fs::path& path) { return blob_hash(read_file(path)); }

void run(const Invocation& inv) {
    auto overrides = inv.overrides;
    if (inv.seed) overrides.push_back({"seed", std::to_string(*inv.seed)});
    const RunConfig config = inv.config.empty() ? parse_config("", fs::current_path(), overrides)
                                                : load_config(inv.config, overrides);
    execute(inv.command, config, render_config(config), inv.out);
}

void rerun(const fs::path& manifest_path, const fs::path& out) {
    const auto bytes = read_file(manifest_path);
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    if (!m.contains("command") || !m.contains("config") || !m.contains("inputs")) {
        throw FormatError(manifest_path.string() + ": not a run manifest");
    }
    const std::string text = m["config"].get<std::string>();
    if (m.contains("config_hash") && m["config_hash"].get<std::string>() != text_hash(text)) {
        throw IntegrityError(manifest_path.string() + ": embedded config does not match its hash");
    }
    for (const auto& input : m["inputs"]) {
        const auto path = input["path"].get<std::string>();
        if (!fs::exists(path)) throw IntegrityError("input " + path + " no longer exists");
        if (file_hash(path) != input["blob"].get<std::string>()) {
            throw IntegrityError("input " + path + " changed since the recorded run");
        }
    }
    const Command command = parse_command(m["command"].get<std::string>());
    execute(command, parse_config(text, manifest_path.parent_path()), text, out);
}

int exit_code(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
        dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const CLI::Error*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e) ||
        dynamic_cast<const std::ios_base::failure*>(&e)) {
        return kExitIo;
    }
    return kExitOther;
}

json error_record(const std::exception& e) {
    json r;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        r["error"] = err->kind();
    } else if (dynamic_cast<const CLI::Error*>(&e)) {
        r["error"] = "usage";
    } else if (dynamic_cast<const fs::filesystem_error*>(&e) || dynamic_cast<const std::ios_base::failure*>(&e)) {
        r["error"] = "io";
    } else {
        r["error"] = "internal";
    }
    r["message"] = e.what();
    r["exit_code"] = exit_code(e);
    if (const auto* c = dynamic_cast<const ConfigError*>(&e); c && !c->key().empty()) r["key"] = c->key();
    if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) r["iteration"] = d->iteration();
    return r;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app("Mine pretrained GANs toward small target sets.", "minegan");
    app.require_subcommand(1);
    app.footer(config_help());

    Invocation inv;
    std::vector<std::string> sets;
    std::string seed;
    for (std::size_t i = 0; i < kCommandNames.size(); ++i) {
        auto* sub = app.add_subcommand(std::string(kCommandNames[i]), std::string(kCommandHelp[i]));
        sub->add_option("--config", inv.config, "config file (key = value lines)");
        sub->add_option("--set", sets, "override one key, key=value (repeatable)");
        sub->add_option("--out", inv.out, "output directory (must not exist or be empty)")->required();
        sub->add_option("--seed", seed, "run seed (same as --set seed=N)");
        sub->footer("Config keys are listed by `minegan --help`.");
        sub->callback([&inv, i] { inv.command = static_cast<Command>(i); });
    }
    fs::path manifest;
    fs::path rerun_out;
    auto* re = app.add_subcommand("rerun", "repeat a recorded run from its manifest.json");
    re->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
    re->add_option("--out", rerun_out, "output directory")->required();

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e, out, err);
        }
        if (re->parsed()) {
            rerun(manifest, rerun_out);
            return kExitOk;
        }
        for (const auto& s : sets) inv.overrides.push_back(parse_override(s));
        if (!seed.empty()) {
            std::size_t pos = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(seed, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != seed.size() || seed.front() == '-') throw ConfigError("seed", "'" + seed + "' is not a non-negative integer");
            inv.seed = v;
        }
        run(inv);
        return kExitOk;
    } catch (const std::exception& e) {
        err << error_record(e).dump() << '\n';
        return exit_code(e);
    }
}

std::string scatter_svg(const Tensor& points, const Tensor& overlay) {
    constexpr double size = 480.0, margin = 20.0;
    double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
    for (const Tensor* t : {&points, &overlay}) {
        for (std::size_t i = 0; i < t->rows(); ++i) {
            lo_x = std::min(lo_x, (*t)(i, 0));
            hi_x = std::max(hi_x, (*t)(i, 0));
            lo_y = std::min(lo_y, (*t)(i, 1));
            hi_y = std::max(hi_y, (*t)(i, 1));
        }
    }
    if (!(lo_x <= hi_x)) lo_x = hi_x = lo_y = hi_y = 0.0;
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
    const double scale = (size - 2 * margin) / span;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
       << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto dots = [&](const Tensor& t, const char* colour, double r) {
        os << "<g fill=\"" << colour << "\" fill-opacity=\"0.5\">\n";
        for (std::size_t i = 0; i < t.rows(); ++i) {
            const double x = margin + (t(i, 0) - lo_x) * scale;
            const double y = size - margin - (t(i, 1) - lo_y) * scale;
            os << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(y, 2) << "\" r=\"" << r << "\"/>\n";
        }
        os << "</g>\n";
    };
    dots(points, "#1f77b4", 1.5);
    if (!overlay.empty()) dots(overlay, "#d62728", 2.5);
    os << "</svg>\n";
    return os.str();
}

Tensor pca2(const Tensor& points) {
    const std::size_t n = points.rows(), d = points.cols();
    if (d < 2 || n < 2) throw DimensionError("pca2 needs at least 2 rows and 2 columns");
    const auto m = moments(points);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.cov);
    // Eigenvalues ascend; take the last two columns, sign fixed by the largest entry.
    Eigen::MatrixXd basis(d, 2);
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        basis.col(k) = v;
    }
    Tensor out = Tensor::zeros(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd x(d);
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j)) = points(i, j) - m.mean(static_cast<Eigen::Index>(j));
        const Eigen::Vector2d p = basis.transpose() * x;
        out(i, 0) = p(0);
        out(i, 1) = p(1);
    }
    return out;
}

} // namespace minegan::cli
