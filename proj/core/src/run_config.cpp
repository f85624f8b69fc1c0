#include "vggfire/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace vggfire {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"data", {"root", "layout", "test_fraction", "val_fraction", "stratified"}},
        {"model",
         {"arch", "width", "input_size", "num_classes", "dropout", "weights", "replace_head", "freeze_features"}},
        {"optim", {"lr", "beta1", "beta2", "eps"}},
        {"augment",
         {"enabled", "rotation", "max_degrees", "flip", "hflip_prob", "brightness", "brightness_min",
          "brightness_max", "noise", "noise_sigma"}},
        {"train", {"epochs", "batch_size", "seed", "out", "keep_checkpoints", "strict", "threads"}},
    };
    return keys;
}

class IniSection {
public:
    IniSection(const pt::ptree* tree, std::string name, std::filesystem::path base)
        : tree_(tree), name_(std::move(name)), base_(std::move(base)) {}

    std::optional<std::string> raw(const char* key) const {
        if (!tree_) return std::nullopt;
        auto value = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!value) return std::nullopt;
        return *value;
    }

    template <typename F>
    void apply(const char* key, F&& setter) const {
        if (auto value = raw(key)) setter(*value);
    }

    std::uint64_t to_uint(const std::string& text, const char* key) const {
        std::uint64_t out = 0;
        const auto* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, out);
        if (ec != std::errc{} || ptr != end) throw bad(key, text, "an unsigned integer");
        return out;
    }

    double to_double(const std::string& text, const char* key) const {
        try {
            std::size_t used = 0;
            const double out = std::stod(text, &used);
            if (used != text.size() || !std::isfinite(out)) throw bad(key, text, "a finite number");
            return out;
        } catch (const std::logic_error&) {
            throw bad(key, text, "a number");
        }
    }

    bool to_bool(std::string text, const char* key) const {
        std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
        if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
        if (text == "false" || text == "0" || text == "no" || text == "off") return false;
        throw bad(key, text, "a boolean");
    }

    std::filesystem::path to_path(const std::string& text) const {
        std::filesystem::path p(text);
        return p.is_relative() ? base_ / p : p;
    }

private:
    ConfigError bad(const char* key, const std::string& text, const char* expected) const {
        return ConfigError(fmt::format("[{}] {} = '{}' is not {}", name_, key, text, expected));
    }

    const pt::ptree* tree_;
    std::string name_;
    std::filesystem::path base_;
};

} // namespace

void RunConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError(fmt::format("test fraction must lie in [0, 1), got {}", test_fraction));
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw ConfigError(fmt::format("validation fraction must lie in [0, 1), got {}", val_fraction));
    }
    if (!(test_fraction + val_fraction < 1.0)) {
        throw ConfigError(fmt::format("test fraction {} plus validation fraction {} must be below 1", test_fraction,
                                      val_fraction));
    }
    adam.validate();
    model.validate();
    if (augment) augment->validate();
    if (replace_head && !weights) throw ConfigError("replace-head requires a weights file");
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("cannot read config '{}': {}", path.string(), e.message()));
    }

    for (const auto& [section, body] : tree) {
        auto it = known_keys().find(section);
        if (it == known_keys().end()) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError(fmt::format("{}: key '{}' outside any section", path.string(), section));
            }
            throw ConfigError(fmt::format("{}: unknown section [{}]", path.string(), section));
        }
        for (const auto& entry : body) {
            if (!it->second.count(entry.first)) {
                throw ConfigError(fmt::format("{}: unknown key '{}' in [{}]", path.string(), entry.first, section));
            }
        }
    }

    const std::filesystem::path dir = path.parent_path();
    auto section = [&](const char* name) {
        auto child = tree.get_child_optional(pt::ptree::path_type(name, '\0'));
        return IniSection(child ? &*child : nullptr, name, dir);
    };

    RunConfig c = std::move(base);

    const IniSection data = section("data");
    data.apply("root", [&](const std::string& v) { c.data_root = data.to_path(v); });
    data.apply("layout", [&](const std::string& v) { c.layout = parse_layout(v); });
    data.apply("test_fraction", [&](const std::string& v) { c.test_fraction = data.to_double(v, "test_fraction"); });
    data.apply("val_fraction", [&](const std::string& v) { c.val_fraction = data.to_double(v, "val_fraction"); });
    data.apply("stratified", [&](const std::string& v) { c.stratified = data.to_bool(v, "stratified"); });

    const IniSection model = section("model");
    model.apply("arch", [&](const std::string& v) {
        const Architecture arch = parse_architecture(v);
        if (arch != c.model.architecture) {
            const std::size_t classes = c.model.num_classes;
            c.model = arch == Architecture::Vgg16 ? ModelConfig::vgg16(classes)
                                                  : ModelConfig::vgg_mini(WidthMultiplier{1, 8}, 32, classes);
        }
    });
    model.apply("width", [&](const std::string& v) { c.model.width = parse_width(v); });
    model.apply("input_size", [&](const std::string& v) {
        c.model.input_height = c.model.input_width = model.to_uint(v, "input_size");
    });
    model.apply("num_classes", [&](const std::string& v) { c.model.num_classes = model.to_uint(v, "num_classes"); });
    model.apply("dropout", [&](const std::string& v) { c.model.dropout_p = model.to_double(v, "dropout"); });
    model.apply("weights", [&](const std::string& v) { c.weights = model.to_path(v); });
    model.apply("replace_head", [&](const std::string& v) { c.replace_head = model.to_bool(v, "replace_head"); });
    model.apply("freeze_features",
                [&](const std::string& v) { c.freeze_features = model.to_bool(v, "freeze_features"); });

    const IniSection optim = section("optim");
    optim.apply("lr", [&](const std::string& v) { c.adam.lr = optim.to_double(v, "lr"); });
    optim.apply("beta1", [&](const std::string& v) { c.adam.beta1 = optim.to_double(v, "beta1"); });
    optim.apply("beta2", [&](const std::string& v) { c.adam.beta2 = optim.to_double(v, "beta2"); });
    optim.apply("eps", [&](const std::string& v) { c.adam.eps = optim.to_double(v, "eps"); });

    const IniSection aug = section("augment");
    AugmentPolicy policy = c.augment.value_or(AugmentPolicy{});
    bool enabled = c.augment.has_value();
    aug.apply("enabled", [&](const std::string& v) { enabled = aug.to_bool(v, "enabled"); });
    aug.apply("rotation", [&](const std::string& v) { policy.rotate = aug.to_bool(v, "rotation"); });
    aug.apply("max_degrees", [&](const std::string& v) { policy.rotation_max_deg = aug.to_double(v, "max_degrees"); });
    aug.apply("flip", [&](const std::string& v) { policy.flip = aug.to_bool(v, "flip"); });
    aug.apply("hflip_prob", [&](const std::string& v) { policy.hflip_prob = aug.to_double(v, "hflip_prob"); });
    aug.apply("brightness", [&](const std::string& v) { policy.brightness = aug.to_bool(v, "brightness"); });
    aug.apply("brightness_min",
              [&](const std::string& v) { policy.brightness_min = aug.to_double(v, "brightness_min"); });
    aug.apply("brightness_max",
              [&](const std::string& v) { policy.brightness_max = aug.to_double(v, "brightness_max"); });
    aug.apply("noise", [&](const std::string& v) { policy.noise = aug.to_bool(v, "noise"); });
    aug.apply("noise_sigma", [&](const std::string& v) { policy.noise_sigma = aug.to_double(v, "noise_sigma"); });
    c.augment = enabled ? std::optional<AugmentPolicy>(policy) : std::nullopt;

    const IniSection train = section("train");
    train.apply("epochs", [&](const std::string& v) { c.epochs = train.to_uint(v, "epochs"); });
    train.apply("batch_size", [&](const std::string& v) { c.batch_size = train.to_uint(v, "batch_size"); });
    train.apply("seed", [&](const std::string& v) { c.seed = train.to_uint(v, "seed"); });
    train.apply("out", [&](const std::string& v) { c.out_dir = train.to_path(v); });
    train.apply("keep_checkpoints",
                [&](const std::string& v) { c.keep_checkpoints = train.to_uint(v, "keep_checkpoints"); });
    train.apply("strict", [&](const std::string& v) { c.strict_decode = train.to_bool(v, "strict"); });
    train.apply("threads", [&](const std::string& v) { c.threads = train.to_uint(v, "threads"); });

    return c;
}

std::string render_run_config(const RunConfig& c) {
    const auto b = [](bool v) { return v ? "true" : "false"; };
    const AugmentPolicy policy = c.augment.value_or(AugmentPolicy{});
    std::string out;
    out += fmt::format("[data]\nroot = {}\nlayout = {}\ntest_fraction = {}\nval_fraction = {}\nstratified = {}\n\n",
                       c.data_root.generic_string(), layout_name(c.layout), c.test_fraction, c.val_fraction,
                       b(c.stratified));
    out += fmt::format("[model]\narch = {}\nwidth = {}\ninput_size = {}\nnum_classes = {}\ndropout = {}\n",
                       architecture_name(c.model.architecture), c.model.width.str(), c.model.input_height,
                       c.model.num_classes, c.model.dropout_p);
    if (c.weights) out += fmt::format("weights = {}\n", c.weights->generic_string());
    out += fmt::format("replace_head = {}\nfreeze_features = {}\n\n", b(c.replace_head), b(c.freeze_features));
    out += fmt::format("[optim]\nlr = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\n\n", c.adam.lr, c.adam.beta1,
                       c.adam.beta2, c.adam.eps);
    out += fmt::format(
        "[augment]\nenabled = {}\nrotation = {}\nmax_degrees = {}\nflip = {}\nhflip_prob = {}\nbrightness = {}\n"
        "brightness_min = {}\nbrightness_max = {}\nnoise = {}\nnoise_sigma = {}\n\n",
        b(c.augment.has_value()), b(policy.rotate), policy.rotation_max_deg, b(policy.flip), policy.hflip_prob,
        b(policy.brightness), policy.brightness_min, policy.brightness_max, b(policy.noise), policy.noise_sigma);
    out += fmt::format("[train]\nepochs = {}\nbatch_size = {}\nseed = {}\nout = {}\nkeep_checkpoints = {}\n"
                       "strict = {}\nthreads = {}\n",
                       c.epochs, c.batch_size, c.seed, c.out_dir.generic_string(), c.keep_checkpoints,
                       b(c.strict_decode), c.threads);
    return out;
}

} // namespace vggfire
