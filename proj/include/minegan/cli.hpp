#pragma once

#include "minegan/config.hpp"
#include "minegan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace minegan::cli {

enum class Command : std::uint8_t { pretrain, mine, finetune, sample, eval, ablate, report };

std::string_view command_name(Command c);
Command parse_command(std::string_view name);

struct Invocation {
    Command command = Command::pretrain;
    std::filesystem::path config;  // empty: defaults only
    std::vector<ConfigOverride> overrides;
    std::filesystem::path out;
    std::optional<std::uint64_t> seed;
};

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitOther = 1;

// Git-style content hash: SHA-1 of "blob <size>\0" + bytes, lower-case hex.
std::string blob_hash(std::span<const std::uint8_t> bytes);
std::string file_hash(const std::filesystem::path& path);

// Runs one subcommand. Artifacts, manifest.json and config.resolved appear in
// `out` only once the run has finished; `out` must not exist or be empty.
void run(const Invocation& invocation);
// Repeats the run recorded in a manifest into `out`. Inputs whose content
// changed since raise IntegrityError.
void rerun(const std::filesystem::path& manifest, const std::filesystem::path& out);

int exit_code(const std::exception& e) noexcept;
nlohmann::ordered_json error_record(const std::exception& e);

// Command-line entry point: parses argv, runs, and writes a one-line JSON
// error record to `err` on failure.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Dependency-free scatter plot; `overlay` (may be empty) is drawn in a second colour.
std::string scatter_svg(const Tensor& points, const Tensor& overlay);
// Projection onto the first two principal components.
Tensor pca2(const Tensor& points);

} // namespace minegan::cli
