#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace minegan {

enum class Selection : std::uint8_t { max, mean };
enum class CondStrategy : std::uint8_t { dual_miner, as_family };

// Every knob the CLI and the experiment drivers read. Field names match the
// config keys.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t batch_size = 64;
    double lr_generator = 1e-5;
    double lr_critic = 4e-4;
    double lr_miner = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double gp_lambda = 10.0;
    std::size_t n_critic = 5;

    std::size_t iterations = 2000;
    std::size_t stage1_iterations = 1000;
    std::size_t stage2_iterations = 500;
    double stage2_lr_scale = 0.1;
    std::size_t log_every = 50;

    std::size_t latent_dim = 8;
    std::size_t gen_layers = 4;
    std::size_t gen_width = 64;
    std::size_t critic_layers = 3;
    std::size_t critic_width = 64;
    std::size_t miner_layers = 0;  // 0: 2 for data of dimension <= 2, else 4
    std::size_t miner_width = 16;
    double miner_init_std = 0.01;

    Selection selection = Selection::max;
    std::size_t selector_window = 200;
    std::size_t critic_source = 0;
    bool lr_decay = true;
    bool conditional = false;
    double cond_lr_generator = 1e-4;
    CondStrategy cond_strategy = CondStrategy::dual_miner;
    std::size_t embedding_dim = 8;

    std::string data;
    std::size_t data_samples = 10000;
    std::string target;
    std::size_t target_samples = 100;
    std::vector<std::string> source;
    std::string checkpoint;
    std::string real;
    std::size_t real_samples = 10000;
    std::size_t eval_cap = 10000;
    double kmmd_bandwidth = 0.0;  // 0: median heuristic
    std::string classifier_data;
    long target_class = -1;
    std::size_t classifier_iterations = 500;
    std::size_t sample_count = 1000;
    std::vector<std::size_t> ablate_depths{1, 2, 3, 4};
    std::vector<std::string> reports;

    std::string preset = "desk";
    // key -> where its value came from: "default:<tag>", "preset:<name>" or "set".
    std::map<std::string, std::string> provenance;

    std::size_t miner_depth_for(std::size_t data_dim) const noexcept {
        return miner_layers != 0 ? miner_layers : (data_dim <= 2 ? 2 : 4);
    }
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string tag;  // paper-preset | convention | artifact
    std::string doc;
};

// Every key with its default and provenance tag, in documentation order.
const std::vector<ConfigKey>& config_keys();
std::string config_help();

std::vector<std::string> preset_names();

struct ConfigOverride {
    std::string key;
    std::string value;
};

// Flat "key = value" lines, '#' comments. A `preset` line applies a named
// preset before the remaining keys regardless of its position. Relative
// paths resolve against `base_dir` and must exist. Errors: ConfigError
// carrying the key.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                       const std::vector<ConfigOverride>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides = {});

ConfigOverride parse_override(std::string_view assignment);

// Canonical text form: every key, one per line, in config_keys() order.
// parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& config);

} // namespace minegan
