#include "vggfire/model.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "vggfire/checkpoint.hpp"

namespace vggfire {

namespace {

constexpr std::size_t kPool = 0;  // marker in the channel plan
constexpr std::array<std::size_t, 18> kVgg16Plan = {64,  64,  kPool, 128, 128, kPool, 256, 256, 256,
                                                     kPool, 512, 512, 512, kPool, 512, 512, 512, kPool};
constexpr std::size_t kHiddenFeatures = 4096;
constexpr std::size_t kImageChannels = 3;
constexpr std::size_t kDownsample = 32;  // five 2x2 poolings

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

const char* architecture_name(Architecture arch) noexcept {
    return arch == Architecture::Vgg16 ? "vgg16" : "vgg-mini";
}

Architecture parse_architecture(const std::string& name) {
    if (name == "vgg16") return Architecture::Vgg16;
    if (name == "vgg-mini" || name == "vgg_mini") return Architecture::VggMini;
    throw ConfigError(fmt::format("unknown architecture '{}' (expected vgg16 or vgg-mini)", name));
}

std::string WidthMultiplier::str() const { return den == 1 ? fmt::format("{}", num) : fmt::format("{}/{}", num, den); }

WidthMultiplier parse_width(const std::string& text) {
    auto parse_uint = [&](std::string_view part) {
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size()) {
            throw ConfigError(fmt::format("invalid width multiplier '{}'", text));
        }
        return v;
    };
    WidthMultiplier w;
    if (auto slash = text.find('/'); slash != std::string::npos) {
        w.num = parse_uint(std::string_view(text).substr(0, slash));
        w.den = parse_uint(std::string_view(text).substr(slash + 1));
    } else if (text.find('.') != std::string::npos) {
        double value = 0;
        try {
            value = std::stod(text);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("invalid width multiplier '{}'", text));
        }
        w.den = 1u << 16;
        w.num = static_cast<std::uint32_t>(std::lround(value * w.den));
        while (w.num % 2 == 0 && w.den % 2 == 0 && w.den > 1) {
            w.num /= 2;
            w.den /= 2;
        }
    } else {
        w.num = parse_uint(text);
        w.den = 1;
    }
    if (w.num == 0 || w.den == 0 || w.num > w.den) {
        throw ConfigError(fmt::format("width multiplier must lie in (0, 1], got '{}'", text));
    }
    return w;
}

ModelConfig ModelConfig::vgg16(std::size_t num_classes) {
    ModelConfig c;
    c.num_classes = num_classes;
    return c;
}

ModelConfig ModelConfig::vgg_mini(WidthMultiplier width, std::size_t input_size, std::size_t num_classes) {
    ModelConfig c;
    c.architecture = Architecture::VggMini;
    c.width = width;
    c.input_height = input_size;
    c.input_width = input_size;
    c.num_classes = num_classes;
    return c;
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw ConfigError(fmt::format("num_classes must be >= 2, got {}", num_classes));
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw ConfigError(fmt::format("dropout probability must be in [0, 1), got {}", dropout_p));
    }
    if (width.num == 0 || width.den == 0 || width.num > width.den) {
        throw ConfigError(fmt::format("width multiplier must lie in (0, 1], got {}", width.str()));
    }
    if (architecture == Architecture::Vgg16) {
        if (!width.is_one()) throw ConfigError("vgg16 requires width multiplier 1");
        if (input_height != 224 || input_width != 224) {
            throw ConfigError(fmt::format("vgg16 requires 224x224 input, got {}x{}", input_height, input_width));
        }
    } else {
        if (input_height < kDownsample || input_width < kDownsample || input_height % kDownsample != 0 ||
            input_width % kDownsample != 0) {
            throw ConfigError(fmt::format("vgg-mini input size must be a positive multiple of 32, got {}x{}",
                                          input_height, input_width));
        }
    }
}

std::size_t ModelConfig::pool_height() const {
    return architecture == Architecture::Vgg16 ? 7 : std::min<std::size_t>(7, input_height / kDownsample);
}

std::size_t ModelConfig::pool_width() const {
    return architecture == Architecture::Vgg16 ? 7 : std::min<std::size_t>(7, input_width / kDownsample);
}

std::vector<LayerSpec> feature_specs(const ModelConfig& config) {
    std::vector<LayerSpec> specs;
    std::size_t channels = kImageChannels;
    for (std::size_t entry : kVgg16Plan) {
        if (entry == kPool) {
            specs.emplace_back(MaxPool2dSpec{2, 2});
            continue;
        }
        const std::size_t out = config.width.scale(entry);
        specs.emplace_back(Conv2dSpec{channels, out, 3, 1, 1});
        specs.emplace_back(ReLUSpec{});
        channels = out;
    }
    return specs;
}

std::vector<LayerSpec> classifier_specs(const ModelConfig& config) {
    const std::size_t last_channels = config.width.scale(512);
    const std::size_t flat = last_channels * config.pool_height() * config.pool_width();
    const std::size_t hidden = config.width.scale(kHiddenFeatures);
    return {
        LinearSpec{flat, hidden},   ReLUSpec{}, DropoutSpec{config.dropout_p},
        LinearSpec{hidden, hidden}, ReLUSpec{}, DropoutSpec{config.dropout_p},
        LinearSpec{hidden, config.num_classes},
    };
}

Model::Model(const ModelConfig& config, std::uint64_t dropout_seed) : config_(config) {
    config_.validate();
    for (const auto& spec : feature_specs(config_)) features_.push_back(make_layer<float>(spec));
    avgpool_ = make_layer<float>(AdaptiveAvgPool2dSpec{config_.pool_height(), config_.pool_width()});
    flatten_ = make_layer<float>(FlattenSpec{});
    for (const auto& spec : classifier_specs(config_)) classifier_.push_back(make_layer<float>(spec));
    reseed_dropout(dropout_seed);
}

void Model::reseed_dropout(std::uint64_t seed) {
    for (std::size_t i = 0; i < classifier_.size(); ++i) {
        if (auto* dropout = dynamic_cast<Dropout<float>*>(classifier_[i].get())) {
            dropout->reseed(splitmix64(seed ^ splitmix64(0xD0D0 + i)));
        }
    }
}

void Model::check_input(const Tensor32& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != kImageChannels || batch.dim(2) != config_.input_height ||
        batch.dim(3) != config_.input_width) {
        throw ShapeError(fmt::format("model expects N x 3 x {} x {} input, got {}", config_.input_height,
                                     config_.input_width, shape_string(batch.shape())));
    }
}

Tensor32 Model::forward(const Tensor32& batch) { return forward(batch, mode_); }

Tensor32 Model::forward(const Tensor32& batch, Mode mode) {
    if (mode == Mode::Eval) return infer(batch);
    check_input(batch);
    Tensor32 x = batch;
    for (auto& layer : features_) x = layer->forward(x, mode);
    x = avgpool_->forward(x, mode);
    x = flatten_->forward(x, mode);
    for (auto& layer : classifier_) x = layer->forward(x, mode);
    return x;
}

Tensor32 Model::infer(const Tensor32& batch) const {
    check_input(batch);
    Tensor32 x = features_.front()->infer(batch);
    for (std::size_t i = 1; i < features_.size(); ++i) x = features_[i]->infer(x);
    x = avgpool_->infer(x);
    x = flatten_->infer(x);
    for (const auto& layer : classifier_) x = layer->infer(x);
    return x;
}

void Model::backward(const Tensor32& grad_logits) {
    Tensor32 grad = grad_logits;
    for (auto it = classifier_.rbegin(); it != classifier_.rend(); ++it) grad = (*it)->backward(grad);
    if (features_frozen_) return;
    grad = flatten_->backward(grad);
    grad = avgpool_->backward(grad);
    for (auto it = features_.rbegin(); it != features_.rend(); ++it) grad = (*it)->backward(grad);
}

std::vector<NamedParameter> Model::parameters() {
    std::vector<NamedParameter> out;
    for (std::size_t i = 0; i < features_.size(); ++i)
        for (auto* p : features_[i]->parameters())
            out.push_back({fmt::format("features.{}.{}", i, p->name), p, Section::Features});
    for (std::size_t i = 0; i < classifier_.size(); ++i)
        for (auto* p : classifier_[i]->parameters())
            out.push_back({fmt::format("classifier.{}.{}", i, p->name), p, Section::Classifier});
    return out;
}

std::vector<ConstNamedParameter> Model::parameters() const {
    std::vector<ConstNamedParameter> out;
    for (std::size_t i = 0; i < features_.size(); ++i)
        for (const auto* p : std::as_const(*features_[i]).parameters())
            out.push_back({fmt::format("features.{}.{}", i, p->name), p, Section::Features});
    for (std::size_t i = 0; i < classifier_.size(); ++i)
        for (const auto* p : std::as_const(*classifier_[i]).parameters())
            out.push_back({fmt::format("classifier.{}.{}", i, p->name), p, Section::Classifier});
    return out;
}

std::vector<NamedParameter> Model::trainable_parameters() {
    auto all = parameters();
    std::erase_if(all, [](const NamedParameter& p) { return p.param->frozen; });
    return all;
}

void Model::set_features_frozen(bool frozen) {
    features_frozen_ = frozen;
    for (auto& layer : features_)
        for (auto* p : layer->parameters()) p->frozen = frozen;
}

std::size_t Model::param_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += p.param->value.size();
    return total;
}

std::size_t Model::section_param_count(Section section) const {
    std::size_t total = 0;
    for (const auto& p : parameters())
        if (p.section == section) total += p.param->value.size();
    return total;
}

LayerCounts Model::layer_counts() const {
    LayerCounts counts;
    auto tally = [&counts](const Layer<float>& layer) {
        switch (layer.kind()) {
        case LayerKind::Conv2d: ++counts.conv; break;
        case LayerKind::ReLU: ++counts.relu; break;
        case LayerKind::MaxPool2d: ++counts.maxpool; break;
        case LayerKind::AdaptiveAvgPool2d: ++counts.avgpool; break;
        case LayerKind::Linear: ++counts.linear; break;
        case LayerKind::Dropout: ++counts.dropout; break;
        default: break;
        }
    };
    for (const auto& layer : features_) tally(*layer);
    tally(*avgpool_);
    for (const auto& layer : classifier_) tally(*layer);
    return counts;
}

std::string Model::describe() const {
    std::string out = "VGG(\n  (features): Sequential(\n";
    for (std::size_t i = 0; i < features_.size(); ++i)
        out += fmt::format("    ({}): {}\n", i, features_[i]->describe());
    out += fmt::format("  )\n  (avgpool): {}\n  (classifier): Sequential(\n", avgpool_->describe());
    for (std::size_t i = 0; i < classifier_.size(); ++i)
        out += fmt::format("    ({}): {}\n", i, classifier_[i]->describe());
    out += "  )\n)\n";
    return out;
}

void Model::reset_caches() {
    for (auto& layer : features_) layer->reset_cache();
    avgpool_->reset_cache();
    flatten_->reset_cache();
    for (auto& layer : classifier_) layer->reset_cache();
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    Model model(config, seed);
    init_weights(model, InitOptions{InitScheme::HeUniform, seed, {}, false});
    return model;
}

std::uint64_t parameter_seed(std::uint64_t seed, std::size_t index) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

void he_uniform(Parameter<float>& weight, Parameter<float>& bias, std::uint64_t seed) {
    const Shape& shape = weight.value.shape();
    std::size_t fan_in = 1;
    for (std::size_t axis = 1; axis < shape.size(); ++axis) fan_in *= shape[axis];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::mt19937_64 rng(seed);
    for (auto& w : weight.value.data()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        w = static_cast<float>((2.0 * u - 1.0) * bound);
    }
    bias.value.fill(0.0f);
}

void init_weights(Model& model, const InitOptions& options) {
    if (options.scheme == InitScheme::InterchangeFile) {
        if (options.path.empty()) throw ConfigError("interchange-file initialisation requires a weights path");
        load_interchange(model, options.path, LoadOptions{options.replace_head, options.seed});
        return;
    }
    auto params = model.parameters();
    for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
        he_uniform(*params[i].param, *params[i + 1].param, parameter_seed(options.seed, i));
    }
}

} // namespace vggfire
