#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vggfire/layers.hpp"

namespace vggfire {

enum class Reduction { Mean, Sum };

/// Lower clamp applied to probabilities before the log.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossValue {
    double value = 0.0;
    std::size_t batch = 0;
};

/// Negative log-likelihood of the labelled class, reduced over the batch.
/// Throws InputError for labels outside [0, K).
template <typename T>
LossValue cross_entropy(const Tensor<T>& probs, std::span<const int> labels, Reduction reduction = Reduction::Mean);

/// Gradient of cross_entropy(softmax(logits)) w.r.t. the logits:
/// (softmax - onehot) / N for the mean reduction.
template <typename T>
Tensor<T> softmax_ce_backward(const Tensor<T>& logits, std::span<const int> labels,
                              Reduction reduction = Reduction::Mean);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep matching the parameter list on every later step.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    void step(std::span<Parameter<T>* const> params);

    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }
    const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

private:
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

} // namespace vggfire
