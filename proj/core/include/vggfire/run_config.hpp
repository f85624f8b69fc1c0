#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "vggfire/dataset.hpp"
#include "vggfire/model.hpp"
#include "vggfire/optim.hpp"

namespace vggfire {

struct RunConfig {
    std::filesystem::path data_root;
    Layout layout = Layout::Binary;
    double test_fraction = 0.2;
    double val_fraction = 0.0;
    bool stratified = true;

    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    AdamConfig adam{};

    ModelConfig model = ModelConfig::vgg16();
    /// Empty disables augmentation.
    std::optional<AugmentPolicy> augment = AugmentPolicy{};
    bool freeze_features = false;

    std::optional<std::filesystem::path> weights;
    bool replace_head = false;

    std::filesystem::path out_dir = "runs/latest";
    /// Number of per-epoch checkpoints kept on disk; 0 keeps all.
    std::size_t keep_checkpoints = 2;
    bool strict_decode = false;
    std::size_t threads = 1;

    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// Overlays an INI file onto `base`. Sections and keys:
///   [data]    root, layout, test_fraction, val_fraction, stratified
///   [model]   arch, width, input_size, num_classes, dropout, weights,
///             replace_head, freeze_features
///   [optim]   lr, beta1, beta2, eps
///   [augment] enabled, rotation, max_degrees, flip, hflip_prob, brightness,
///             brightness_min, brightness_max, noise, noise_sigma
///   [train]   epochs, batch_size, seed, out, keep_checkpoints, strict,
///             threads
/// Unknown sections or keys raise ConfigError. Relative paths resolve
/// against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// The same document rendered back to INI text.
std::string render_run_config(const RunConfig& config);

} // namespace vggfire
