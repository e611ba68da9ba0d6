#include "minegan/config.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace minegan {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (!s.empty()) {
        const auto c = s.find(',');
        const auto item = trim(s.substr(0, c));
        if (!item.empty()) out.push_back(item);
        if (c == std::string_view::npos) break;
        s.remove_prefix(c + 1);
    }
    return out;
}

double to_double(const std::string& key, std::string_view v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
    }
    return out;
}

long to_long(const std::string& key, std::string_view v) {
    long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError(key, "expected an integer, got '" + std::string(v) + "'");
    }
    return out;
}

std::size_t to_count(const std::string& key, std::string_view v, std::size_t min_value = 0) {
    const long n = to_long(key, v);
    if (n < static_cast<long>(min_value)) throw ConfigError(key, "must be >= " + std::to_string(min_value));
    return static_cast<std::size_t>(n);
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string resolve_path(const std::string& key, std::string_view v, const std::filesystem::path& base) {
    if (v.empty()) return {};
    std::filesystem::path p{std::string(v)};
    if (p.is_relative() && !base.empty()) p = base / p;
    std::error_code ec;
    if (!std::filesystem::exists(p, ec)) throw ConfigError(key, "path does not exist: " + p.string());
    return std::filesystem::weakly_canonical(p, ec).string();
}

template <class T>
std::string join(const std::vector<T>& items) {
    std::ostringstream out;
    for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "," : "") << items[i];
    return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, std::string_view, const std::filesystem::path&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Entry {
    ConfigKey info;
    Setter set;
    Getter get;
};

#define MG_COUNT(field, minv)                                                                                   \
    [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {                  \
        c.field = to_count(k, v, minv);                                                                         \
    },                                                                                                          \
        [](const RunConfig& c) { return std::to_string(c.field); }

#define MG_REAL(field, check, msg)                                                                              \
    [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {                  \
        const double x = to_double(k, v);                                                                       \
        if (!(check)) throw ConfigError(k, msg);                                                                \
        c.field = x;                                                                                            \
    },                                                                                                          \
        [](const RunConfig& c) { return fmt(c.field); }

#define MG_PATH(field)                                                                                          \
    [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path& base) {             \
        c.field = resolve_path(k, v, base);                                                                     \
    },                                                                                                          \
        [](const RunConfig& c) { return c.field; }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = [] {
        std::vector<Entry> t;
        auto add = [&](std::string name, std::string def, std::string tag, std::string doc, Setter s, Getter g) {
            t.push_back({{std::move(name), std::move(def), std::move(tag), std::move(doc)}, std::move(s), std::move(g)});
        };
        add("seed", "0", "artifact", "master seed; every stream derives from it",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                c.seed = static_cast<std::uint64_t>(to_count(k, v));
            },
            [](const RunConfig& c) { return std::to_string(c.seed); });
        add("batch_size", "64", "paper-preset", "minibatch size K (>= 2)", MG_COUNT(batch_size, 2));
        add("lr_generator", "0.00001", "artifact", "generator Adam learning rate during pretraining",
            MG_REAL(lr_generator, x > 0, "must be > 0"));
        add("lr_critic", "0.0004", "paper-preset", "critic Adam learning rate", MG_REAL(lr_critic, x > 0, "must be > 0"));
        add("lr_miner", "0.0004", "paper-preset", "miner Adam learning rate", MG_REAL(lr_miner, x > 0, "must be > 0"));
        add("beta1", "0.5", "paper-preset", "Adam first-moment decay", MG_REAL(beta1, x >= 0 && x < 1, "must be in [0, 1)"));
        add("beta2", "0.999", "paper-preset", "Adam second-moment decay",
            MG_REAL(beta2, x >= 0 && x < 1, "must be in [0, 1)"));
        add("lr_decay", "true", "artifact", "decay pretraining learning rates linearly to zero",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                if (v == "true" || v == "1") c.lr_decay = true;
                else if (v == "false" || v == "0") c.lr_decay = false;
                else throw ConfigError(k, "expected true or false");
            },
            [](const RunConfig& c) { return std::string(c.lr_decay ? "true" : "false"); });
        add("gp_lambda", "10", "convention", "gradient-penalty weight (>= 0)", MG_REAL(gp_lambda, x >= 0, "must be >= 0"));
        add("n_critic", "5", "convention", "critic steps per generator/miner step (>= 1)", MG_COUNT(n_critic, 1));
        add("iterations", "2000", "artifact", "pretraining generator steps", MG_COUNT(iterations, 0));
        add("stage1_iterations", "1000", "artifact", "mining steps with frozen generators", MG_COUNT(stage1_iterations, 0));
        add("stage2_iterations", "500", "artifact", "joint finetuning steps", MG_COUNT(stage2_iterations, 0));
        add("stage2_lr_scale", "0.1", "artifact", "generator/critic rate in stage 2 as a multiple of lr_miner",
            MG_REAL(stage2_lr_scale, x > 0, "must be > 0"));
        add("log_every", "50", "artifact", "metric record interval in steps (0 disables)", MG_COUNT(log_every, 0));
        add("latent_dim", "8", "artifact", "generator latent dimension", MG_COUNT(latent_dim, 1));
        add("gen_layers", "4", "artifact", "generator layer count", MG_COUNT(gen_layers, 1));
        add("gen_width", "64", "artifact", "generator hidden width", MG_COUNT(gen_width, 1));
        add("critic_layers", "3", "artifact", "critic layer count", MG_COUNT(critic_layers, 1));
        add("critic_width", "64", "artifact", "critic hidden width", MG_COUNT(critic_width, 1));
        add("miner_layers", "0", "paper-preset", "miner layer count; 0 picks 2 for <= 2-D data, else 4",
            MG_COUNT(miner_layers, 0));
        add("miner_width", "16", "artifact", "miner hidden width", MG_COUNT(miner_width, 1));
        add("miner_init_std", "0.01", "paper-preset", "std of the miner's Gaussian initialisation",
            MG_REAL(miner_init_std, x >= 0, "must be >= 0"));
        add("selection", "max", "paper-preset", "multi-generator selection: max or mean (ablation)",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                if (v == "max") c.selection = Selection::max;
                else if (v == "mean") c.selection = Selection::mean;
                else throw ConfigError(k, "unknown value '" + std::string(v) + "' (valid: max, mean)");
            },
            [](const RunConfig& c) { return std::string(c.selection == Selection::max ? "max" : "mean"); });
        add("selector_window", "200", "artifact", "selector FIFO capacity in minibatches", MG_COUNT(selector_window, 1));
        add("critic_source", "0", "artifact", "index of the source critic the shared critic starts from",
            MG_COUNT(critic_source, 0));
        add("conditional", "false", "artifact", "pretrain a class-conditional generator (labels = mixture components)",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                if (v == "true" || v == "1") c.conditional = true;
                else if (v == "false" || v == "0") c.conditional = false;
                else throw ConfigError(k, "expected true or false");
            },
            [](const RunConfig& c) { return std::string(c.conditional ? "true" : "false"); });
        add("cond_strategy", "dual-miner", "artifact", "conditional mining: dual-miner or as-family",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                if (v == "dual-miner") c.cond_strategy = CondStrategy::dual_miner;
                else if (v == "as-family") c.cond_strategy = CondStrategy::as_family;
                else throw ConfigError(k, "unknown value '" + std::string(v) + "' (valid: dual-miner, as-family)");
            },
            [](const RunConfig& c) {
                return std::string(c.cond_strategy == CondStrategy::dual_miner ? "dual-miner" : "as-family");
            });
        add("cond_lr_generator", "0.0001", "artifact", "generator Adam learning rate for conditional pretraining",
            MG_REAL(cond_lr_generator, x > 0, "must be > 0"));
        add("embedding_dim", "8", "artifact", "class embedding dimension", MG_COUNT(embedding_dim, 1));
        add("data", "", "artifact", "pretraining data: mixture spec (.json), .csv or IDX", MG_PATH(data));
        add("data_samples", "10000", "artifact", "points drawn when `data` is a mixture spec", MG_COUNT(data_samples, 1));
        add("target", "", "artifact", "target set: mixture spec, .csv or IDX", MG_PATH(target));
        add("target_samples", "100", "artifact", "points drawn when `target` is a mixture spec",
            MG_COUNT(target_samples, 1));
        add("source", "", "artifact", "comma-separated source checkpoints for `mine`",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path& base) {
                c.source.clear();
                for (auto item : split_list(v)) c.source.push_back(resolve_path(k, item, base));
            },
            [](const RunConfig& c) { return join(c.source); });
        add("checkpoint", "", "artifact", "input checkpoint for finetune/sample/eval", MG_PATH(checkpoint));
        add("real", "", "artifact", "reference set for `eval`; defaults to `target`", MG_PATH(real));
        add("real_samples", "10000", "artifact", "points drawn when `real` is a mixture spec", MG_COUNT(real_samples, 1));
        add("eval_cap", "10000", "paper-preset", "generated sample cap for metrics (>= 1)", MG_COUNT(eval_cap, 1));
        add("kmmd_bandwidth", "median", "artifact", "Gaussian kernel sigma, or `median` for the median heuristic",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                if (v == "median") {
                    c.kmmd_bandwidth = 0.0;
                    return;
                }
                const double x = to_double(k, v);
                if (!(x > 0)) throw ConfigError(k, "must be > 0 or `median`");
                c.kmmd_bandwidth = x;
            },
            [](const RunConfig& c) { return c.kmmd_bandwidth == 0.0 ? std::string("median") : fmt(c.kmmd_bandwidth); });
        add("classifier_data", "", "artifact", "labelled mixture spec the eval classifier trains on", MG_PATH(classifier_data));
        add("target_class", "-1", "artifact", "intended class for classifier error; -1 skips it",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                c.target_class = to_long(k, v);
                if (c.target_class < -1) throw ConfigError(k, "must be >= -1");
            },
            [](const RunConfig& c) { return std::to_string(c.target_class); });
        add("classifier_iterations", "500", "artifact", "classifier training steps", MG_COUNT(classifier_iterations, 1));
        add("sample_count", "1000", "artifact", "points written by `sample`", MG_COUNT(sample_count, 1));
        add("ablate_depths", "1,2,3,4", "paper-preset", "miner depths swept by `ablate`",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path&) {
                c.ablate_depths.clear();
                for (auto item : split_list(v)) c.ablate_depths.push_back(to_count(k, item, 1));
            },
            [](const RunConfig& c) { return join(c.ablate_depths); });
        add("reports", "", "artifact", "comma-separated report.json files collated by `report`",
            [](RunConfig& c, const std::string& k, std::string_view v, const std::filesystem::path& base) {
                c.reports.clear();
                for (auto item : split_list(v)) c.reports.push_back(resolve_path(k, item, base));
            },
            [](const RunConfig& c) { return join(c.reports); });
        return t;
    }();
    return table;
}

#undef MG_COUNT
#undef MG_REAL
#undef MG_PATH

const Entry* find_entry(std::string_view key) {
    for (const auto& e : entries()) {
        if (e.info.name == key) return &e;
    }
    return nullptr;
}

struct Preset {
    std::string name;
    std::vector<std::pair<std::string, std::string>> values;
};

const std::vector<Preset>& presets() {
    static const std::vector<Preset> table{
        {"desk", {}},
        {"appendixA-mnist",
         {{"lr_generator", "0.0004"}, {"lr_critic", "0.0004"}, {"lr_miner", "0.0004"}, {"beta1", "0.5"},
          {"beta2", "0.999"}, {"batch_size", "64"}}},
        {"appendixA-progan",
         {{"lr_generator", "0.0015"}, {"lr_critic", "0.0015"}, {"lr_miner", "0.0015"}, {"beta1", "0"},
          {"beta2", "0.99"}, {"batch_size", "4"}, {"miner_layers", "4"}}},
        {"appendixA-sngan",
         {{"lr_generator", "0.0002"}, {"lr_critic", "0.0002"}, {"lr_miner", "0.0002"}, {"beta1", "0"},
          {"beta2", "0.9"}, {"batch_size", "8"}}},
        {"appendixA-biggan",
         {{"lr_generator", "0.0001"}, {"lr_critic", "0.0004"}, {"lr_miner", "0.0001"}, {"beta1", "0"},
          {"beta2", "0.999"}, {"batch_size", "256"}}},
    };
    return table;
}

void apply(RunConfig& c, std::string_view key, std::string_view value, const std::filesystem::path& base,
           const std::string& origin) {
    const auto* e = find_entry(key);
    if (!e) throw ConfigError(std::string(key), "unknown config key");
    e->set(c, e->info.name, value, base);
    c.provenance[e->info.name] = origin;
}

void apply_preset(RunConfig& c, std::string_view name) {
    for (const auto& p : presets()) {
        if (p.name != name) continue;
        c.preset = p.name;
        for (const auto& [k, v] : p.values) apply(c, k, v, {}, "preset:" + p.name);
        return;
    }
    std::string valid;
    for (const auto& p : presets()) valid += (valid.empty() ? "" : ", ") + p.name;
    throw ConfigError("preset", "unknown preset '" + std::string(name) + "' (valid: " + valid + ")");
}

} // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> out;
        for (const auto& e : entries()) out.push_back(e.info);
        return out;
    }();
    return keys;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : presets()) out.push_back(p.name);
    return out;
}

std::string config_help() {
    std::ostringstream out;
    out << "Config keys (key = default  [provenance]  description):\n";
    for (const auto& k : config_keys()) {
        out << "  " << k.name << " = " << (k.default_value.empty() ? "\"\"" : k.default_value) << "  [" << k.tag
            << "]  " << k.doc << "\n";
    }
    out << "Presets (key `preset`):";
    for (const auto& p : presets()) {
        out << "\n  " << p.name << ":";
        if (p.values.empty()) out << " defaults";
        for (const auto& [k, v] : p.values) out << " " << k << "=" << v;
    }
    out << "\n";
    return out.str();
}

ConfigOverride parse_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError(std::string(trim(assignment)), "override must look like key=value");
    }
    return {std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1)))};
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const std::vector<ConfigOverride>& overrides) {
    RunConfig c;
    for (const auto& e : entries()) c.provenance[e.info.name] = "default:" + e.info.tag;

    std::vector<std::pair<ConfigOverride, std::size_t>> lines;
    std::string preset;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(std::string(line), "line " + std::to_string(lineno) + ": expected key = value");
        }
        ConfigOverride kv{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
        if (kv.key == "preset") {
            preset = kv.value;
            continue;
        }
        lines.emplace_back(std::move(kv), lineno);
    }
    for (const auto& o : overrides) {
        if (o.key == "preset") preset = o.value;
    }
    if (!preset.empty()) apply_preset(c, preset);
    for (const auto& [kv, n] : lines) apply(c, kv.key, kv.value, base_dir, "set");
    for (const auto& o : overrides) {
        if (o.key != "preset") apply(c, o.key, o.value, std::filesystem::current_path(), "set");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path(), overrides);
}

std::string render_config(const RunConfig& config) {
    std::ostringstream out;
    out << "preset = " << config.preset << "\n";
    for (const auto& e : entries()) {
        const auto p = config.provenance.find(e.info.name);
        const auto value = e.get(config);
        out << e.info.name << " = " << value;
        if (p != config.provenance.end()) out << "  # " << p->second;
        out << "\n";
    }
    return out.str();
}

} // namespace minegan
