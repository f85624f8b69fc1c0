#include "vggfire/optim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace vggfire {

namespace {

template <typename T>
void check_labels(const Tensor<T>& scores, std::span<const int> labels, const char* what) {
    require_rank(scores, 2, what);
    if (labels.size() != scores.dim(0)) {
        throw InputError(fmt::format("{}: {} labels for batch of {}", what, labels.size(), scores.dim(0)));
    }
    const auto k = static_cast<int>(scores.dim(1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw InputError(fmt::format("{}: label {} at row {} outside [0, {})", what, labels[i], i, k));
        }
    }
}

} // namespace

template <typename T>
LossValue cross_entropy(const Tensor<T>& probs, std::span<const int> labels, Reduction reduction) {
    check_labels(probs, labels, "cross_entropy");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(probs[i * k + static_cast<std::size_t>(labels[i])]);
        total -= std::log(std::max(p, kProbabilityFloor));
    }
    return {reduction == Reduction::Mean ? total / static_cast<double>(n) : total, n};
}

template <typename T>
Tensor<T> softmax_ce_backward(const Tensor<T>& logits, std::span<const int> labels, Reduction reduction) {
    check_labels(logits, labels, "softmax_ce_backward");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor<T> grad = softmax(logits);
    const T scale = reduction == Reduction::Mean ? T{1} / static_cast<T>(n) : T{1};
    for (std::size_t i = 0; i < n; ++i) {
        grad[i * k + static_cast<std::size_t>(labels[i])] -= T{1};
        for (std::size_t j = 0; j < k; ++j) grad[i * k + j] *= scale;
    }
    return grad;
}

void AdamConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(fmt::format("Adam lr must be positive, got {}", lr));
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError(fmt::format("Adam betas must lie in [0, 1), got ({}, {})", beta1, beta2));
    }
    if (!(eps > 0.0)) throw ConfigError(fmt::format("Adam eps must be positive, got {}", eps));
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
    config_.validate();
}

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (params.size() != m_.size()) {
        throw ShapeError(fmt::format("Adam: got {} parameters, state holds {}", params.size(), m_.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto* p = params[i];
        if (p->value.shape() != m_[i].shape()) {
            throw ShapeError(fmt::format("Adam: parameter '{}' shape {} does not match state {}", p->name,
                                         shape_string(p->value.shape()), shape_string(m_[i].shape())));
        }
        if (!p->grad || p->grad->shape() != p->value.shape()) {
            throw ShapeError(fmt::format("Adam: parameter '{}' has no gradient of matching shape", p->name));
        }
    }

    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i]->value.data();
        const auto g = params[i]->grad->data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
            const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double m_hat = mj / correction1;
            const double v_hat = vj / correction2;
            theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                      config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
        }
    }
}

template LossValue cross_entropy<float>(const Tensor<float>&, std::span<const int>, Reduction);
template LossValue cross_entropy<double>(const Tensor<double>&, std::span<const int>, Reduction);
template Tensor<float> softmax_ce_backward<float>(const Tensor<float>&, std::span<const int>, Reduction);
template Tensor<double> softmax_ce_backward<double>(const Tensor<double>&, std::span<const int>, Reduction);
template class Adam<float>;
template class Adam<double>;

} // namespace vggfire
