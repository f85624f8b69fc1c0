#pragma once

// Figures printed with the published D-FIRE run, and the reconciliation of its
// confusion matrix.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "vggfire/metrics.hpp"

namespace vggfire::test {

constexpr std::size_t kFireSupport = 2301;
constexpr std::size_t kNoFireSupport = 2005;

constexpr double kPublishedAccuracy = 0.975615;
constexpr double kPublishedPrecision = 0.968830;
constexpr double kPublishedRecall = 0.986093;
constexpr double kPublishedF1 = 0.977385;

inline const ConfusionMatrix kPublishedMatrix{2269, 73, 32, 1932};

/// (loss, accuracy %) for epochs 1..10.
inline const std::pair<double, double> kPublishedEpochs[10] = {
    {0.3250, 85.17}, {0.1685, 93.63}, {0.1090, 96.06}, {0.0760, 97.25}, {0.0644, 97.72},
    {0.0601, 97.80}, {0.0471, 98.32}, {0.0429, 98.54}, {0.0435, 98.51}, {0.0517, 98.26},
};

/// Every integer matrix with the published supports whose accuracy,
/// precision and recall agree with the six-decimal figures to within 5e-7.
inline std::vector<ConfusionMatrix> reconcile_published_matrix() {
    const double n = static_cast<double>(kFireSupport + kNoFireSupport);
    std::vector<ConfusionMatrix> hits;
    for (std::size_t tp = 0; tp <= kFireSupport; ++tp) {
        const double recall = static_cast<double>(tp) / static_cast<double>(kFireSupport);
        if (std::abs(recall - kPublishedRecall) > 5e-7) continue;
        for (std::size_t tn = 0; tn <= kNoFireSupport; ++tn) {
            const std::size_t fp = kNoFireSupport - tn;
            if (tp + fp == 0) continue;
            const double acc = static_cast<double>(tp + tn) / n;
            const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
            if (std::abs(acc - kPublishedAccuracy) <= 5e-7 && std::abs(prec - kPublishedPrecision) <= 5e-7) {
                hits.push_back({tp, fp, kFireSupport - tp, tn});
            }
        }
    }
    return hits;
}

} // namespace vggfire::test
