#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vggfire/model.hpp"

namespace vggfire {

// VGGW v1 layout, little-endian, no padding:
//   "VGGW" | u32 version | u32 tensor_count
//   per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank
//               | rank x u32 dims | prod(dims) x f32 (row-major)
inline constexpr char kVggwMagic[4] = {'V', 'G', 'G', 'W'};
inline constexpr std::uint32_t kVggwVersion = 1;
inline constexpr std::uint8_t kVggwFloat32 = 0;

struct NamedTensor {
    std::string name;
    Tensor32 tensor;
};

struct TensorRecord {
    std::string name;
    Shape shape;
};

/// Serialises tensors in the given order.
void write_vggw(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Tensor32*>>& tensors);
void write_vggw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Reads every tensor. Throws FormatError on bad magic, unknown version or
/// dtype, or truncation; IoError if the file cannot be opened.
std::vector<NamedTensor> read_vggw(const std::filesystem::path& path);

/// Names and shapes only; payloads are skipped.
std::vector<TensorRecord> read_vggw_inventory(const std::filesystem::path& path);

struct LoadOptions {
    /// Skip the file's final classifier layer and re-initialise the model's
    /// head (He-uniform from `seed`), so a checkpoint with a different class
    /// count can seed a fine-tuning run.
    bool replace_head = false;
    std::uint64_t seed = 0;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Copies file tensors into `model`, validating that every model tensor is
/// present with the right shape and that the file holds nothing else.
/// Throws IntegrityError naming the offending tensor.
void load_interchange(Model& model, const std::filesystem::path& path, const LoadOptions& options = {});

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const LoadOptions& options = {});

/// Class count recorded in a file's final classifier weight, if present.
std::size_t checkpoint_num_classes(const std::filesystem::path& path, const ModelConfig& config);

} // namespace vggfire
