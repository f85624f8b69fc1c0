#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vggfire/layers.hpp"

namespace vggfire {

enum class Architecture { Vgg16, VggMini };

const char* architecture_name(Architecture arch) noexcept;
Architecture parse_architecture(const std::string& name);

/// Channel scale for vgg-mini, kept as an exact fraction so scaled widths
/// are ceil(channels * num / den) without rounding drift.
struct WidthMultiplier {
    std::uint32_t num = 1;
    std::uint32_t den = 1;

    std::size_t scale(std::size_t channels) const { return (channels * num + den - 1) / den; }
    bool is_one() const { return num == den; }
    std::string str() const;
};

/// Parses "1", "1/8", or "0.125".
WidthMultiplier parse_width(const std::string& text);

struct ModelConfig {
    Architecture architecture = Architecture::Vgg16;
    std::size_t num_classes = 2;
    std::size_t input_height = 224;
    std::size_t input_width = 224;
    double dropout_p = 0.5;
    WidthMultiplier width{};

    static ModelConfig vgg16(std::size_t num_classes = 2);
    static ModelConfig vgg_mini(WidthMultiplier width = {1, 8}, std::size_t input_size = 32,
                                std::size_t num_classes = 2);

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;

    /// Adaptive-pool output side: 7 x 7 for vgg16; for vgg-mini the feature
    /// map side after five poolings, capped at 7.
    std::size_t pool_height() const;
    std::size_t pool_width() const;
};

enum class Section { Features, AvgPool, Classifier };

struct NamedParameter {
    std::string name;  // e.g. "features.0.weight"
    Parameter<float>* param;
    Section section;
};

struct ConstNamedParameter {
    std::string name;
    const Parameter<float>* param;
    Section section;
};

struct LayerCounts {
    std::size_t conv = 0;
    std::size_t relu = 0;
    std::size_t maxpool = 0;
    std::size_t avgpool = 0;
    std::size_t linear = 0;
    std::size_t dropout = 0;
};

/// The VGG stack: a feature section of conv blocks, an adaptive average
/// pool, an implicit flatten, and the classifier section. Parameter names
/// follow "<section>.<index>.<weight|bias>" with the section's sequential
/// indices.
class Model {
public:
    explicit Model(const ModelConfig& config, std::uint64_t dropout_seed = 0);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const noexcept { return config_; }

    void set_mode(Mode mode) noexcept { mode_ = mode; }
    Mode mode() const noexcept { return mode_; }

    /// Raw logits N x num_classes. Uses the model's current mode.
    Tensor32 forward(const Tensor32& batch);
    Tensor32 forward(const Tensor32& batch, Mode mode);

    /// Evaluation-mode forward that touches no layer state; safe for
    /// concurrent callers sharing one model.
    Tensor32 infer(const Tensor32& batch) const;

    /// Back-propagates dL/dlogits through the last training forward and
    /// fills parameter gradients. Stops at the classifier input when the
    /// feature section is frozen.
    void backward(const Tensor32& grad_logits);

    std::vector<NamedParameter> parameters();
    std::vector<ConstNamedParameter> parameters() const;

    /// Parameters the optimizer should update (excludes frozen ones).
    std::vector<NamedParameter> trainable_parameters();

    void set_features_frozen(bool frozen);
    bool features_frozen() const noexcept { return features_frozen_; }

    void reseed_dropout(std::uint64_t seed);

    std::size_t param_count() const;
    std::size_t section_param_count(Section section) const;
    LayerCounts layer_counts() const;

    const std::vector<std::unique_ptr<Layer<float>>>& features() const noexcept { return features_; }
    const std::vector<std::unique_ptr<Layer<float>>>& classifier() const noexcept { return classifier_; }
    const Layer<float>& avgpool() const noexcept { return *avgpool_; }

    /// Module printout:
    ///   VGG(
    ///     (features): Sequential(
    ///       (0): Conv2d(3, 64, ...)
    ///   ...
    std::string describe() const;

    void reset_caches();

    /// Index of the final classifier Linear (the replaceable head).
    std::size_t head_index() const noexcept { return classifier_.size() - 1; }

private:
    void check_input(const Tensor32& batch) const;

    ModelConfig config_;
    std::vector<std::unique_ptr<Layer<float>>> features_;
    std::unique_ptr<Layer<float>> avgpool_;
    std::unique_ptr<Layer<float>> flatten_;
    std::vector<std::unique_ptr<Layer<float>>> classifier_;
    Mode mode_ = Mode::Eval;
    bool features_frozen_ = false;
};

/// Layer specs of the feature section: 13 conv (3x3/s1/p1) each followed by
/// ReLU, with a 2x2/s2 max pool closing each of the five blocks.
std::vector<LayerSpec> feature_specs(const ModelConfig& config);
std::vector<LayerSpec> classifier_specs(const ModelConfig& config);

Model build_model(const ModelConfig& config, std::uint64_t seed = 0);

enum class InitScheme { HeUniform, InterchangeFile };

struct InitOptions {
    InitScheme scheme = InitScheme::HeUniform;
    std::uint64_t seed = 0;
    std::filesystem::path path;  // interchange-file only
    bool replace_head = false;
};

/// He-uniform: weights ~ U(-b, b) with b = sqrt(6 / fan_in), biases zero.
/// Interchange-file delegates to load_interchange.
void init_weights(Model& model, const InitOptions& options);

/// He-uniform initialisation of a single Conv2d/Linear parameter pair.
void he_uniform(Parameter<float>& weight, Parameter<float>& bias, std::uint64_t seed);

/// Seed for the parameter at `index` in model order, derived from a run seed.
std::uint64_t parameter_seed(std::uint64_t seed, std::size_t index);

} // namespace vggfire
