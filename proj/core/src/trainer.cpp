#include "vggfire/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vggfire/checkpoint.hpp"
#include "vggfire/kernels.hpp"
#include "vggfire/optim.hpp"

namespace vggfire {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCacheBudgetBytes = std::size_t{1} << 30;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    out << text;
    out.close();
    if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
    }
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInitStream = 0, kDropoutStream = 1, kSplitStream = 2, kLoaderStream = 3 };

std::shared_ptr<PreprocessCache> cache_for(const Dataset& dataset, std::size_t image_size) {
    const std::size_t bytes = dataset.size() * 3 * image_size * image_size * sizeof(float);
    return bytes <= kCacheBudgetBytes ? std::make_shared<PreprocessCache>() : nullptr;
}

void require_binary_head(const Model& model, const char* what) {
    if (model.config().num_classes != 2) {
        throw ConfigError(fmt::format("{} needs a 2-class model, got {} classes", what, model.config().num_classes));
    }
}

struct EpochTotals {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
};

void accumulate(EpochTotals& totals, const Tensor32& logits, std::span<const int> labels, double batch_loss) {
    const std::size_t n = labels.size();
    totals.loss_sum += batch_loss * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        const std::size_t k = logits.dim(1);
        for (std::size_t j = 1; j < k; ++j) {
            if (logits[i * k + j] > logits[i * k + best]) best = j;
        }
        totals.correct += static_cast<int>(best) == labels[i] ? 1 : 0;
    }
    totals.seen += n;
}

double percent(std::size_t part, std::size_t whole) {
    return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

} // namespace

bool TrainingHistory::has_validation() const {
    return std::any_of(records.begin(), records.end(), [](const EpochRecord& r) { return r.val_loss.has_value(); });
}

std::string format_epoch_line(std::size_t epoch, std::size_t total, double loss, double accuracy_percent) {
    return fmt::format("Epoch {}/{}, Loss: {:.4f}, Accuracy: {:.2f}%", epoch, total, loss, accuracy_percent);
}

std::string history_to_json(const TrainingHistory& history) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : history.records) {
        nlohmann::json row = {{"epoch", r.epoch},
                              {"train_loss", r.train_loss},
                              {"train_accuracy", r.train_accuracy},
                              {"seconds", r.seconds}};
        if (r.val_loss) row["val_loss"] = *r.val_loss;
        if (r.val_accuracy) row["val_accuracy"] = *r.val_accuracy;
        records.push_back(std::move(row));
    }
    return nlohmann::json{{"total_epochs", history.total_epochs}, {"epochs", records}}.dump(2) + "\n";
}

TrainingHistory history_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        TrainingHistory history;
        history.total_epochs = doc.at("total_epochs").get<std::size_t>();
        for (const auto& row : doc.at("epochs")) {
            EpochRecord r;
            r.epoch = row.at("epoch").get<std::size_t>();
            r.train_loss = row.at("train_loss").get<double>();
            r.train_accuracy = row.at("train_accuracy").get<double>();
            r.seconds = row.value("seconds", 0.0);
            if (row.contains("val_loss")) r.val_loss = row["val_loss"].get<double>();
            if (row.contains("val_accuracy")) r.val_accuracy = row["val_accuracy"].get<double>();
            history.records.push_back(r);
        }
        return history;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("malformed training history: {}", e.what()));
    }
}

TrainingHistory read_history(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return history_from_json(buffer.str());
}

std::string render_curves_csv(const TrainingHistory& history) {
    const bool validation = history.has_validation();
    std::string out = validation ? "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n"
                                 : "epoch,train_loss,train_accuracy\n";
    for (const auto& r : history.records) {
        out += fmt::format("{},{:.4f},{:.2f}", r.epoch, r.train_loss, r.train_accuracy);
        if (validation) out += fmt::format(",{:.4f},{:.2f}", r.val_loss.value_or(NAN), r.val_accuracy.value_or(NAN));
        out += '\n';
    }
    return out;
}

fs::path export_curves(const TrainingHistory& history, const fs::path& out_dir) {
    if (history.records.empty()) throw InputError("export_curves: history has no epochs");
    ensure_directory(out_dir);
    const fs::path path = out_dir / "curves.csv";
    write_text(path, render_curves_csv(history));
    return path;
}

Splits make_splits(const Dataset& dataset, const RunConfig& config) {
    const std::uint64_t seed = sub_seed(config.seed, kSplitStream);
    Splits splits;
    Dataset rest = dataset;
    if (config.test_fraction > 0.0) {
        auto [train, test] = split(rest, config.test_fraction, seed, config.stratified);
        rest = std::move(train);
        splits.test = std::move(test);
    }
    if (config.val_fraction > 0.0) {
        const double within = config.val_fraction / (1.0 - config.test_fraction);
        auto [train, val] = split(rest, within, seed + 1, config.stratified);
        rest = std::move(train);
        splits.validation = std::move(val);
    }
    splits.train = std::move(rest);
    return splits;
}

Model make_model(const RunConfig& config) {
    Model model(config.model, sub_seed(config.seed, kDropoutStream));
    InitOptions init;
    init.seed = sub_seed(config.seed, kInitStream);
    if (config.weights) {
        init.scheme = InitScheme::InterchangeFile;
        init.path = *config.weights;
        init.replace_head = config.replace_head;
    }
    init_weights(model, init);
    return model;
}

TrainingHistory fit(Model& model, const Dataset& train_set, const Dataset& validation, const RunConfig& config,
                    const LogSink& log) {
    config.validate();
    if (train_set.empty()) throw DatasetError("training split is empty");
    set_kernel_threads(static_cast<unsigned>(config.threads));

    model.set_features_frozen(config.freeze_features);
    Adam<float> adam(config.adam);
    const fs::path& out = config.out_dir;
    ensure_directory(out);

    const std::size_t image_size = config.model.input_height;
    LoaderOptions loader;
    loader.image_size = image_size;
    loader.batch_size = config.batch_size;
    loader.shuffle = true;
    loader.seed = sub_seed(config.seed, kLoaderStream);
    loader.augment = config.augment;
    loader.strict = config.strict_decode;
    loader.cache = cache_for(train_set, image_size);

    EvalOptions val_options;
    val_options.image_size = image_size;
    val_options.batch_size = config.batch_size;
    val_options.strict = config.strict_decode;
    auto val_cache = cache_for(validation, image_size);

    TrainingHistory history;
    history.total_epochs = config.epochs;
    std::vector<fs::path> kept;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        model.set_mode(Mode::Train);
        BatchIterator batches(train_set, loader, epoch);
        EpochTotals totals;
        std::size_t batch_index = 0;
        while (auto batch = batches.next()) {
            ++batch_index;
            const Tensor32 logits = model.forward(batch->images, Mode::Train);
            const LossValue loss = cross_entropy(softmax(logits), batch->labels);
            if (!std::isfinite(loss.value)) {
                throw NumericalError(fmt::format("non-finite loss {} at epoch {} batch {} (first sample '{}')",
                                                 loss.value, epoch, batch_index, batch->ids.front()));
            }
            model.backward(softmax_ce_backward(logits, std::span<const int>(batch->labels)));
            std::vector<Parameter<float>*> params;
            for (auto& p : model.trainable_parameters()) params.push_back(p.param);
            adam.step(params);
            accumulate(totals, logits, batch->labels, loss.value);
        }
        model.reset_caches();
        model.set_mode(Mode::Eval);
        if (totals.seen == 0) throw DatasetError(fmt::format("epoch {}: no decodable training images", epoch));

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = totals.loss_sum / static_cast<double>(totals.seen);
        record.train_accuracy = percent(totals.correct, totals.seen);
        if (!validation.empty()) {
            EpochTotals val;
            LoaderOptions vl;
            vl.image_size = image_size;
            vl.batch_size = config.batch_size;
            vl.strict = config.strict_decode;
            vl.cache = val_cache;
            BatchIterator it(validation, vl, 0);
            while (auto batch = it.next()) {
                const Tensor32 logits = model.infer(batch->images);
                accumulate(val, logits, batch->labels, cross_entropy(softmax(logits), batch->labels).value);
            }
            if (val.seen > 0) {
                record.val_loss = val.loss_sum / static_cast<double>(val.seen);
                record.val_accuracy = percent(val.correct, val.seen);
            }
        }
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        history.records.push_back(record);
        if (log) log(format_epoch_line(epoch, config.epochs, record.train_loss, record.train_accuracy));

        const fs::path checkpoint = out / fmt::format("epoch_{}.vggw", epoch);
        save_checkpoint(model, checkpoint);
        kept.push_back(checkpoint);
        while (config.keep_checkpoints > 0 && kept.size() > config.keep_checkpoints) {
            std::error_code ec;
            fs::remove(kept.front(), ec);
            kept.erase(kept.begin());
        }
    }

    save_checkpoint(model, out / "final.vggw");
    write_text(out / "history.json", history_to_json(history));
    export_curves(history, out);
    return history;
}

TrainResult train(const RunConfig& config, const LogSink& log) {
    config.validate();
    if (config.data_root.empty()) throw ConfigError("no dataset root given");
    const Dataset dataset = load_dataset(config.data_root, config.layout);
    Splits splits = make_splits(dataset, config);
    Model model = make_model(config);
    ensure_directory(config.out_dir);
    write_text(config.out_dir / "run.ini", render_run_config(config));
    TrainingHistory history = fit(model, splits.train, splits.validation, config, log);
    return {std::move(model), std::move(history), std::move(splits)};
}

int argmax_label(float no_fire_logit, float fire_logit) noexcept { return fire_logit > no_fire_logit ? 1 : 0; }

EvalResult evaluate(const LogitFn& logits_of, const Dataset& dataset, const EvalOptions& options) {
    if (dataset.empty()) throw InputError("evaluate: dataset is empty");
    LoaderOptions loader;
    loader.image_size = options.image_size;
    loader.batch_size = options.batch_size;
    loader.strict = options.strict;
    loader.on_warning = options.on_warning;
    BatchIterator batches(dataset, loader, 0);

    EvalResult result;
    double loss_sum = 0.0;
    while (auto batch = batches.next()) {
        const Tensor32 logits = logits_of(batch->images);
        if (logits.rank() != 2 || logits.dim(0) != batch->labels.size() || logits.dim(1) != 2) {
            throw ShapeError(fmt::format("evaluate: expected logits {}x2, got {}", batch->labels.size(),
                                         shape_string(logits.shape())));
        }
        const Tensor32 probs = softmax(logits);
        loss_sum += cross_entropy(probs, batch->labels, Reduction::Sum).value;
        for (std::size_t i = 0; i < batch->labels.size(); ++i) {
            result.ids.push_back(batch->ids[i]);
            result.truth.push_back(batch->labels[i]);
            result.predictions.push_back(argmax_label(logits[i * 2], logits[i * 2 + 1]));
            result.scores.push_back(static_cast<double>(probs[i * 2 + 1]));
        }
    }
    if (result.truth.empty()) throw DatasetError("evaluate: no decodable images");
    result.mean_loss = loss_sum / static_cast<double>(result.truth.size());
    result.roc = roc_auc(result.scores, result.truth);
    result.report = classification_report(result.predictions, result.truth);
    result.report.auc = result.roc.auc;
    return result;
}

EvalResult evaluate(const Model& model, const Dataset& dataset, EvalOptions options) {
    require_binary_head(model, "evaluate");
    options.image_size = model.config().input_height;
    return evaluate([&model](const Tensor32& batch) { return model.infer(batch); }, dataset, options);
}

void write_eval_outputs(const EvalResult& result, const fs::path& out_dir) {
    ensure_directory(out_dir);
    write_text(out_dir / "report.txt", render_report_text(result.report));
    write_text(out_dir / "report.json", render_report_json(result.report));
    write_text(out_dir / "summary.txt", render_summary_table(result.report));
    write_text(out_dir / "classification_report.txt", render_classification_report(result.report));
    write_text(out_dir / "roc.csv", render_roc_csv(result.roc));
    std::string rows = "id,truth,prediction,fire_probability\n";
    for (std::size_t i = 0; i < result.ids.size(); ++i) {
        rows += fmt::format("{},{},{},{:.6f}\n", result.ids[i], label_name(static_cast<Label>(result.truth[i])),
                            label_name(static_cast<Label>(result.predictions[i])), result.scores[i]);
    }
    write_text(out_dir / "predictions.csv", rows);
}

Prediction prediction_from_logits(float no_fire_logit, float fire_logit) {
    const double a = no_fire_logit, b = fire_logit;
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return {static_cast<Label>(argmax_label(no_fire_logit, fire_logit)), eb / (ea + eb)};
}

Prediction predict(const Model& model, const fs::path& image_path) {
    require_binary_head(model, "predict");
    const Tensor32 pixels = preprocess(read_image(image_path, image_path.string()), model.config().input_height);
    const Tensor32 logits = model.infer(pixels.reshaped({1, 3, pixels.dim(1), pixels.dim(2)}));
    return prediction_from_logits(logits[0], logits[1]);
}

std::string format_prediction(const std::string& path, const Prediction& prediction) {
    return fmt::format("{}\t{}\t{:.4f}", path, label_name(prediction.label), prediction.fire_probability);
}

} // namespace vggfire
