#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vggfire/checkpoint.hpp"
#include "vggfire/kernels.hpp"
#include "vggfire/trainer.hpp"

namespace {

using namespace vggfire;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Values given on the command line; unset ones leave the file/default value.
struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> data_root;
    std::optional<std::string> layout;
    std::optional<std::string> arch;
    std::optional<std::string> width;
    std::optional<std::size_t> input_size;
    std::optional<std::size_t> num_classes;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<double> test_fraction;
    std::optional<double> val_fraction;
    std::optional<std::string> weights;
    bool freeze_features = false;
    bool replace_head = false;
    bool no_augment = false;
    bool strict = false;
    std::optional<std::string> out;
    std::optional<std::size_t> keep_checkpoints;
    std::optional<std::size_t> threads;
};

void add_model_flags(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--config", o.config, "Run configuration file (INI)");
    cmd.add_option("--arch", o.arch, "Architecture")->check(CLI::IsMember({"vgg16", "vgg-mini"}));
    cmd.add_option("--width", o.width, "vgg-mini channel multiplier, e.g. 1/8");
    cmd.add_option("--input-size", o.input_size, "Input side length");
    cmd.add_option("--num-classes", o.num_classes, "Classifier outputs");
    cmd.add_option("--weights", o.weights, "VGGW weights file");
    cmd.add_flag("--replace-head", o.replace_head, "Re-initialise the final classifier layer after loading");
    cmd.add_option("--threads", o.threads, "Kernel worker threads");
}

void add_data_flags(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--data-root", o.data_root, "Dataset root directory");
    cmd.add_option("--layout", o.layout, "Dataset layout")->check(CLI::IsMember({"binary", "dfire4"}));
    cmd.add_option("--seed", o.seed, "Run seed");
    cmd.add_option("--test-fraction", o.test_fraction, "Held-out test fraction");
    cmd.add_option("--val-fraction", o.val_fraction, "Validation fraction");
    cmd.add_option("--batch-size", o.batch_size, "Batch size");
    cmd.add_flag("--strict", o.strict, "Fail on undecodable images instead of skipping them");
    cmd.add_option("--out", o.out, "Output directory");
}

void add_train_flags(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--epochs", o.epochs, "Training epochs");
    cmd.add_option("--lr", o.lr, "Adam learning rate");
    cmd.add_flag("--freeze-features", o.freeze_features, "Train only the classifier section");
    cmd.add_flag("--no-augment", o.no_augment, "Disable training augmentation");
    cmd.add_option("--keep-checkpoints", o.keep_checkpoints, "Per-epoch checkpoints to keep (0 = all)");
}

RunConfig resolve(const Overrides& o) {
    RunConfig c;
    if (o.config) c = load_run_config(*o.config, c);
    if (o.arch) {
        const Architecture arch = parse_architecture(*o.arch);
        if (arch != c.model.architecture) {
            c.model = arch == Architecture::Vgg16 ? ModelConfig::vgg16(c.model.num_classes)
                                                  : ModelConfig::vgg_mini(WidthMultiplier{1, 8}, 32, c.model.num_classes);
        }
    }
    if (o.width) c.model.width = parse_width(*o.width);
    if (o.input_size) c.model.input_height = c.model.input_width = *o.input_size;
    if (o.num_classes) c.model.num_classes = *o.num_classes;
    if (o.data_root) c.data_root = *o.data_root;
    if (o.layout) c.layout = parse_layout(*o.layout);
    if (o.epochs) c.epochs = *o.epochs;
    if (o.batch_size) c.batch_size = *o.batch_size;
    if (o.lr) c.adam.lr = *o.lr;
    if (o.seed) c.seed = *o.seed;
    if (o.test_fraction) c.test_fraction = *o.test_fraction;
    if (o.val_fraction) c.val_fraction = *o.val_fraction;
    if (o.weights) c.weights = *o.weights;
    if (o.freeze_features) c.freeze_features = true;
    if (o.replace_head) c.replace_head = true;
    if (o.no_augment) c.augment.reset();
    if (o.strict) c.strict_decode = true;
    if (o.out) c.out_dir = *o.out;
    if (o.keep_checkpoints) c.keep_checkpoints = *o.keep_checkpoints;
    if (o.threads) c.threads = *o.threads;
    return c;
}

void print_line(const std::string& line) {
    std::fputs(line.c_str(), stdout);
    std::fputc('\n', stdout);
    std::fflush(stdout);
}

std::string with_commas(std::size_t value) {
    std::string digits = std::to_string(value);
    for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
    return digits;
}

Model load_trained(RunConfig& c) {
    if (!c.weights) throw ConfigError("--weights is required");
    if (c.replace_head) return make_model(c);
    return load_checkpoint(*c.weights, c.model);
}

int run_train(const Overrides& o) {
    RunConfig c = resolve(o);
    c.validate();
    set_kernel_threads(static_cast<unsigned>(c.threads));
    const TrainResult result = train(c, print_line);
    const auto counts = result.splits.train.counts();
    print_line(fmt::format("train samples: {} ({} fire, {} no_fire)", counts.total(), counts.fire, counts.no_fire));
    print_line(fmt::format("final checkpoint: {}", (c.out_dir / "final.vggw").string()));
    return kOk;
}

int run_eval(const Overrides& o) {
    RunConfig c = resolve(o);
    c.validate();
    set_kernel_threads(static_cast<unsigned>(c.threads));
    if (c.data_root.empty()) throw ConfigError("--data-root is required");
    const Model model = load_trained(c);
    const Dataset dataset = load_dataset(c.data_root, c.layout);
    const Dataset target = c.test_fraction > 0.0 ? make_splits(dataset, c).test : dataset;

    EvalOptions options;
    options.batch_size = c.batch_size;
    options.strict = c.strict_decode;
    const EvalResult result = evaluate(model, target, options);
    const fs::path out = o.out ? fs::path(*o.out) : c.out_dir / "eval";
    write_eval_outputs(result, out);

    std::fputs(render_summary_table(result.report).c_str(), stdout);
    std::fputs("\n", stdout);
    std::fputs(render_classification_report(result.report).c_str(), stdout);
    const auto& cm = result.report.confusion;
    print_line(fmt::format("\nconfusion: tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn, cm.tn));
    print_line(fmt::format("auc: {:.6f}", result.roc.auc));
    print_line(fmt::format("reports written to {}", out.string()));
    return kOk;
}

int run_predict(const Overrides& o, const std::vector<std::string>& images) {
    RunConfig c = resolve(o);
    c.model.validate();
    set_kernel_threads(static_cast<unsigned>(c.threads));
    const Model model = load_trained(c);
    for (const auto& path : images) print_line(format_prediction(path, predict(model, path)));
    return kOk;
}

int run_export_curves(const std::string& history_path, const std::string& out_dir) {
    const TrainingHistory history = read_history(history_path);
    print_line(export_curves(history, out_dir).string());
    return kOk;
}

int run_inspect(const Overrides& o) {
    RunConfig c = resolve(o);
    if (c.weights && !c.replace_head && !o.num_classes) {
        c.model.num_classes = checkpoint_num_classes(*c.weights, c.model);
    }
    c.model.validate();
    Model model(c.model, c.seed);
    if (c.weights) {
        load_interchange(model, *c.weights, LoadOptions{c.replace_head, c.seed});
    }
    std::fputs(model.describe().c_str(), stdout);
    std::fputs("\n", stdout);
    const LayerCounts n = model.layer_counts();
    print_line(fmt::format("Layers: {} conv, {} relu, {} maxpool, {} avgpool, {} linear, {} dropout", n.conv, n.relu,
                           n.maxpool, n.avgpool, n.linear, n.dropout));
    print_line(fmt::format("Input: 3x{}x{}", c.model.input_height, c.model.input_width));
    print_line(fmt::format("Features params: {}", with_commas(model.section_param_count(Section::Features))));
    print_line(fmt::format("Classifier params: {}", with_commas(model.section_param_count(Section::Classifier))));
    print_line(fmt::format("Total params: {}", with_commas(model.param_count())));
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"VGG16 wildfire image classifier"};
    app.require_subcommand(1);
    Overrides o;

    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
    add_model_flags(*train_cmd, o);
    add_data_flags(*train_cmd, o);
    add_train_flags(*train_cmd, o);

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint and write metric reports");
    add_model_flags(*eval_cmd, o);
    add_data_flags(*eval_cmd, o);

    std::vector<std::string> images;
    auto* predict_cmd = app.add_subcommand("predict", "Classify image files");
    add_model_flags(*predict_cmd, o);
    predict_cmd->add_option("images", images, "Image files")->required();

    std::string history_path;
    std::string curves_out = ".";
    auto* curves_cmd = app.add_subcommand("export-curves", "Write curves.csv from a training history");
    curves_cmd->add_option("--history", history_path, "history.json written by train")->required();
    curves_cmd->add_option("--out", curves_out, "Output directory");

    auto* inspect_cmd = app.add_subcommand("inspect", "Print the architecture and parameter count");
    add_model_flags(*inspect_cmd, o);
    inspect_cmd->add_option("--seed", o.seed, "Seed for a re-initialised head");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return run_train(o);
        if (*eval_cmd) return run_eval(o);
        if (*predict_cmd) return run_predict(o, images);
        if (*curves_cmd) return run_export_curves(history_path, curves_out);
        if (*inspect_cmd) return run_inspect(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
