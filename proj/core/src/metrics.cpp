#include "vggfire/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace vggfire {

namespace {

void check_pair(std::span<const int> a, std::span<const int> b, const char* what) {
    if (a.size() != b.size()) {
        throw InputError(fmt::format("{}: {} predictions but {} labels", what, a.size(), b.size()));
    }
    if (a.empty()) throw InputError(fmt::format("{}: no samples", what));
}

void check_label(int label, const char* what) {
    if (label != 0 && label != 1) throw InputError(fmt::format("{}: label {} is not 0 or 1", what, label));
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

const char* display_name(Label label) { return label == Label::Fire ? "Fire" : "No Fire"; }

nlohmann::json row_json(const ClassRow& row) {
    return {{"label", label_name(row.label)},
            {"precision", row.scores.precision},
            {"recall", row.scores.recall},
            {"f1", row.scores.f1},
            {"support", row.support},
            {"precision_undefined", row.scores.precision_undefined},
            {"recall_undefined", row.scores.recall_undefined},
            {"f1_undefined", row.scores.f1_undefined}};
}

nlohmann::json average_json(const AverageRow& row) {
    return {{"precision", row.precision}, {"recall", row.recall}, {"f1", row.f1}, {"support", row.support}};
}

} // namespace

ConfusionMatrix ConfusionMatrix::swapped() const noexcept {
    return {tn, fn, fp, tp, positive == Label::Fire ? Label::NoFire : Label::Fire};
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truth, Label positive) {
    check_pair(preds, truth, "confusion");
    const int pos = static_cast<int>(positive);
    ConfusionMatrix cm;
    cm.positive = positive;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        check_label(preds[i], "confusion");
        check_label(truth[i], "confusion");
        const bool p = preds[i] == pos, t = truth[i] == pos;
        if (p && t) {
            ++cm.tp;
        } else if (p) {
            ++cm.fp;
        } else if (t) {
            ++cm.fn;
        } else {
            ++cm.tn;
        }
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw InputError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm) {
    PrecisionRecallF1 r;
    r.precision = ratio(cm.tp, cm.tp + cm.fp, r.precision_undefined);
    r.recall = ratio(cm.tp, cm.tp + cm.fn, r.recall_undefined);
    const double sum = r.precision + r.recall;
    r.f1_undefined = sum == 0.0;
    r.f1 = r.f1_undefined ? 0.0 : 2.0 * r.precision * r.recall / sum;
    return r;
}

MetricsReport classification_report(const ConfusionMatrix& matrix) {
    const ConfusionMatrix fire = matrix.positive == Label::Fire ? matrix : matrix.swapped();
    const ConfusionMatrix no_fire = fire.swapped();

    MetricsReport report;
    report.confusion = fire;
    report.accuracy = accuracy(fire);
    report.aggregate = precision_recall_f1(fire);
    report.per_class[0] = {Label::NoFire, precision_recall_f1(no_fire), no_fire.tp + no_fire.fn};
    report.per_class[1] = {Label::Fire, report.aggregate, fire.tp + fire.fn};
    report.single_class = report.per_class[0].support == 0 || report.per_class[1].support == 0;

    const double total = static_cast<double>(fire.total());
    for (const auto& row : report.per_class) {
        const double w = static_cast<double>(row.support) / total;
        report.macro_avg.precision += row.scores.precision / 2.0;
        report.macro_avg.recall += row.scores.recall / 2.0;
        report.macro_avg.f1 += row.scores.f1 / 2.0;
        report.weighted_avg.precision += w * row.scores.precision;
        report.weighted_avg.recall += w * row.scores.recall;
        report.weighted_avg.f1 += w * row.scores.f1;
    }
    report.macro_avg.support = fire.total();
    report.weighted_avg.support = fire.total();
    return report;
}

MetricsReport classification_report(std::span<const int> preds, std::span<const int> truth) {
    return classification_report(confusion(preds, truth, Label::Fire));
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size()) {
        throw InputError(fmt::format("roc_auc: {} scores but {} labels", scores.size(), truth.size()));
    }
    std::size_t positives = 0;
    for (int t : truth) {
        check_label(t, "roc_auc");
        positives += t == 1 ? 1 : 0;
    }
    const std::size_t negatives = truth.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw InputError("roc_auc: both classes must be present in the labels");
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw InputError(fmt::format("roc_auc: score {} is NaN", i));
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == threshold; ++i) {
            if (truth[order[i]] == 1) {
                ++tp;
            } else {
                ++fp;
            }
        }
        curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
    }
    const RocPoint& last = curve.points.back();
    if (last.fpr != 1.0 || last.tpr != 1.0) curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});

    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const RocPoint& a = curve.points[i - 1];
        const RocPoint& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return curve;
}

std::string render_summary_table(const MetricsReport& report) {
    const std::pair<const char*, double> rows[] = {{"Accuracy", report.accuracy},
                                                   {"Precision", report.aggregate.precision},
                                                   {"Recall", report.aggregate.recall},
                                                   {"F1-Score", report.aggregate.f1}};
    std::string out = fmt::format("{:>1}  {:>9}  {:>8}\n", "", "Metric", "Value");
    for (std::size_t i = 0; i < std::size(rows); ++i) {
        out += fmt::format("{:<1}  {:>9}  {:.6f}\n", i, rows[i].first, rows[i].second);
    }
    return out;
}

std::string render_classification_report(const MetricsReport& report) {
    constexpr int width = 12;
    std::string out = fmt::format("{:>{}} {:>9} {:>9} {:>9} {:>9}\n\n", "", width, "precision", "recall",
                                  "f1-score", "support");
    for (const auto& row : report.per_class) {
        out += fmt::format("{:>{}} {:>9.2f} {:>9.2f} {:>9.2f} {:>9}\n", display_name(row.label), width,
                           row.scores.precision, row.scores.recall, row.scores.f1, row.support);
    }
    out += '\n';
    out += fmt::format("{:>{}} {:>9} {:>9} {:>9.2f} {:>9}\n", "accuracy", width, "", "", report.accuracy,
                       report.confusion.total());
    for (const auto& [name, row] : {std::pair{"macro avg", report.macro_avg}, {"weighted avg", report.weighted_avg}}) {
        out += fmt::format("{:>{}} {:>9.2f} {:>9.2f} {:>9.2f} {:>9}\n", name, width, row.precision, row.recall,
                           row.f1, row.support);
    }
    return out;
}

std::string render_report_text(const MetricsReport& report) {
    std::string out;
    out += fmt::format("accuracy: {:.6f}\n", report.accuracy);
    out += fmt::format("precision: {:.6f}\n", report.aggregate.precision);
    out += fmt::format("recall: {:.6f}\n", report.aggregate.recall);
    out += fmt::format("f1: {:.6f}\n", report.aggregate.f1);
    out += report.auc ? fmt::format("auc: {:.6f}\n", *report.auc) : std::string("auc: n/a\n");
    const auto& cm = report.confusion;
    out += fmt::format("confusion:\n  tp: {}\n  fp: {}\n  fn: {}\n  tn: {}\n", cm.tp, cm.fp, cm.fn, cm.tn);
    out += "per_class:\n";
    for (const auto& row : report.per_class) {
        out += fmt::format("  {}:\n    precision: {:.6f}{}\n    recall: {:.6f}{}\n    f1: {:.6f}{}\n    support: {}\n",
                           label_name(row.label), row.scores.precision,
                           row.scores.precision_undefined ? " (undefined)" : "", row.scores.recall,
                           row.scores.recall_undefined ? " (undefined)" : "", row.scores.f1,
                           row.scores.f1_undefined ? " (undefined)" : "", row.support);
    }
    for (const auto& [name, row] : {std::pair{"macro_avg", report.macro_avg}, {"weighted_avg", report.weighted_avg}}) {
        out += fmt::format("{}:\n  precision: {:.6f}\n  recall: {:.6f}\n  f1: {:.6f}\n  support: {}\n", name,
                           row.precision, row.recall, row.f1, row.support);
    }
    return out;
}

std::string render_report_json(const MetricsReport& report) {
    const auto& cm = report.confusion;
    nlohmann::json doc = {
        {"accuracy", report.accuracy},
        {"precision", report.aggregate.precision},
        {"recall", report.aggregate.recall},
        {"f1", report.aggregate.f1},
        {"auc", report.auc ? nlohmann::json(*report.auc) : nlohmann::json(nullptr)},
        {"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}, {"positive", label_name(cm.positive)}}},
        {"per_class", {row_json(report.per_class[0]), row_json(report.per_class[1])}},
        {"macro_avg", average_json(report.macro_avg)},
        {"weighted_avg", average_json(report.weighted_avg)},
        {"single_class", report.single_class},
    };
    return doc.dump(2) + "\n";
}

std::string render_roc_csv(const RocCurve& curve) {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
        if (std::isinf(p.threshold)) {
            out += fmt::format("{},{:.9g},{:.9g}\n", p.threshold > 0 ? "inf" : "-inf", p.fpr, p.tpr);
        } else {
            out += fmt::format("{:.9g},{:.9g},{:.9g}\n", p.threshold, p.fpr, p.tpr);
        }
    }
    return out;
}

} // namespace vggfire
