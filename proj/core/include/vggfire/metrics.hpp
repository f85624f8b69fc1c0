#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vggfire/dataset.hpp"

namespace vggfire {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    Label positive = Label::Fire;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    /// The same counts seen with the other class as positive.
    ConfusionMatrix swapped() const noexcept;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Labels are class indices (0 = NoFire, 1 = Fire). Throws InputError on a
/// length mismatch, an empty input or an out-of-range label.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truth, Label positive = Label::Fire);

/// (tp + tn) / total. Throws InputError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// Zero denominators give 0 and set the matching flag.
struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm);

struct ClassRow {
    Label label = Label::NoFire;
    PrecisionRecallF1 scores;
    std::size_t support = 0;
};

struct AverageRow {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    ConfusionMatrix confusion;  // positive class Fire
    double accuracy = 0.0;
    PrecisionRecallF1 aggregate;  // Fire as positive
    std::array<ClassRow, 2> per_class;  // indexed by Label
    AverageRow macro_avg;
    AverageRow weighted_avg;
    std::optional<double> auc;
    /// Truth held a single class; rows for the absent class are flagged.
    bool single_class = false;
};

MetricsReport classification_report(const ConfusionMatrix& cm);
MetricsReport classification_report(std::span<const int> preds, std::span<const int> truth);

struct RocPoint {
    double threshold = 0.0;  // +inf for the (0, 0) origin
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

/// Empirical ROC over every distinct score (descending), starting at (0, 0)
/// and ending at (1, 1); equal scores share one step. AUC by the trapezoidal
/// rule. `scores` is the Fire probability. Throws InputError unless both
/// classes are present.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> truth);

/// Metric/Value table with values at 6 decimals.
std::string render_summary_table(const MetricsReport& report);

/// precision / recall / f1-score / support table at 2 decimals.
std::string render_classification_report(const MetricsReport& report);

/// Indented key: value document with nested per-class rows.
std::string render_report_text(const MetricsReport& report);

std::string render_report_json(const MetricsReport& report);

/// `threshold,fpr,tpr` rows with a header line.
std::string render_roc_csv(const RocCurve& curve);

} // namespace vggfire
