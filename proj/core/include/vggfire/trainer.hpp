#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vggfire/dataset.hpp"
#include "vggfire/metrics.hpp"
#include "vggfire/model.hpp"
#include "vggfire/run_config.hpp"

namespace vggfire {

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;  // percent
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;  // percent
    double seconds = 0.0;
};

struct TrainingHistory {
    std::size_t total_epochs = 0;
    std::vector<EpochRecord> records;

    bool has_validation() const;
};

/// "Epoch 1/10, Loss: 0.3250, Accuracy: 85.17%"
std::string format_epoch_line(std::size_t epoch, std::size_t total, double loss, double accuracy_percent);

std::string history_to_json(const TrainingHistory& history);
/// Throws FormatError on a malformed document.
TrainingHistory history_from_json(const std::string& text);
TrainingHistory read_history(const std::filesystem::path& path);

/// Header `epoch,train_loss,train_accuracy` plus `val_loss,val_accuracy`
/// when the history carries validation figures; loss at 4 decimals,
/// accuracy at 2.
std::string render_curves_csv(const TrainingHistory& history);

/// Writes `<out_dir>/curves.csv`. Throws InputError on an empty history and
/// IoError if the file cannot be written.
std::filesystem::path export_curves(const TrainingHistory& history, const std::filesystem::path& out_dir);

using LogSink = std::function<void(const std::string&)>;

struct Splits {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Test split first (test_fraction of the whole set), then the validation
/// split taken from the remainder so that it is val_fraction of the whole.
/// Zero fractions leave the split empty.
Splits make_splits(const Dataset& dataset, const RunConfig& config);

/// Builds the model described by `config`: He-uniform from the run seed, or
/// the weights file (optionally with a re-initialised head).
Model make_model(const RunConfig& config);

struct TrainResult {
    Model model;
    TrainingHistory history;
    Splits splits;
};

/// Full run: load and split the dataset, train, and write checkpoints
/// (`epoch_<k>.vggw`, `final.vggw`), `history.json`, `curves.csv` and
/// `run.ini` under `config.out_dir`. One epoch line per epoch goes to `log`.
TrainResult train(const RunConfig& config, const LogSink& log = {});

/// Trains `model` in place on `train_set`; the dataset-independent core of
/// `train`. `validation` may be empty.
TrainingHistory fit(Model& model, const Dataset& train_set, const Dataset& validation, const RunConfig& config,
                    const LogSink& log = {});

struct EvalOptions {
    std::size_t image_size = kVggInputSize;
    std::size_t batch_size = 32;
    bool strict = false;
    LogSink on_warning;
};

struct EvalResult {
    MetricsReport report;
    RocCurve roc;
    std::vector<std::string> ids;
    std::vector<int> truth;
    std::vector<int> predictions;
    std::vector<double> scores;  // Fire probability
    double mean_loss = 0.0;
};

/// Maps a batch N x 3 x S x S to logits N x 2.
using LogitFn = std::function<Tensor32(const Tensor32&)>;

/// Predicted class index from two logits; ties go to NoFire.
int argmax_label(float no_fire_logit, float fire_logit) noexcept;

/// Evaluation-mode pass over `dataset` (no augmentation, no dropout).
/// Throws InputError if the dataset lacks either class.
EvalResult evaluate(const LogitFn& logits, const Dataset& dataset, const EvalOptions& options = {});
EvalResult evaluate(const Model& model, const Dataset& dataset, EvalOptions options = {});

/// report.txt, report.json, summary.txt, classification_report.txt, roc.csv
/// and predictions.csv under `out_dir`.
void write_eval_outputs(const EvalResult& result, const std::filesystem::path& out_dir);

struct Prediction {
    Label label = Label::NoFire;
    double fire_probability = 0.0;
};

Prediction prediction_from_logits(float no_fire_logit, float fire_logit);
Prediction predict(const Model& model, const std::filesystem::path& image_path);

/// `<path>\t<class>\t<fire probability to 4 decimals>`
std::string format_prediction(const std::string& path, const Prediction& prediction);

} // namespace vggfire
