#pragma once

#include "minegan/network.hpp"
#include "minegan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace minegan {

enum class CheckpointKind : std::uint8_t { gan = 1, miner = 2, family = 3, conditional = 4, classifier = 5 };

std::string_view checkpoint_kind_name(CheckpointKind kind);

// Named tensors in insertion order plus a JSON metadata block.
//
// Binary layout, little-endian:
//   u8 version | "MGCK" | u8 kind | u32 tensor count
//   per tensor: u32 name length | name | u8 rank | u64 dims[rank] | f64 values
//   u64 metadata length | metadata (JSON text)
//   u64 FNV-1a of every preceding byte
struct Checkpoint {
    static constexpr std::uint8_t kVersion = 1;

    CheckpointKind kind = CheckpointKind::gan;
    std::vector<std::pair<std::string, Tensor>> tensors;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

    void put(std::string name, Tensor value);
    bool has(std::string_view name) const noexcept;
    // Throws FormatError naming the missing tensor.
    const Tensor& get(std::string_view name) const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Network layers under `prefix`: tensors prefix.w<i> / prefix.b<i>, layer
// activations and frozen flags in metadata["networks"][prefix].
void put_network(Checkpoint& ckpt, const std::string& prefix, const DenseNetwork& net);
DenseNetwork get_network(const Checkpoint& ckpt, const std::string& prefix);

// Writes bytes atomically (temporary sibling + rename).
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

} // namespace minegan
