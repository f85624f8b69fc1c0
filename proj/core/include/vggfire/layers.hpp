#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "vggfire/kernels.hpp"
#include "vggfire/tensor.hpp"

namespace vggfire {

enum class Mode { Train, Eval };

enum class LayerKind { Conv2d, ReLU, MaxPool2d, AdaptiveAvgPool2d, Flatten, Linear, Dropout, Softmax };

const char* layer_kind_name(LayerKind kind) noexcept;

struct Conv2dSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
};
struct ReLUSpec {};
struct MaxPool2dSpec {
    std::size_t kernel = 2;
    std::size_t stride = 2;
};
struct AdaptiveAvgPool2dSpec {
    std::size_t output_h = 7;
    std::size_t output_w = 7;
};
struct FlattenSpec {};
struct LinearSpec {
    std::size_t in_features = 1;
    std::size_t out_features = 1;
};
struct DropoutSpec {
    double p = 0.5;
};
struct SoftmaxSpec {};

using LayerSpec = std::variant<Conv2dSpec, ReLUSpec, MaxPool2dSpec, AdaptiveAvgPool2dSpec, FlattenSpec, LinearSpec,
                               DropoutSpec, SoftmaxSpec>;

LayerKind kind_of(const LayerSpec& spec) noexcept;

/// Text rendering in the style of a PyTorch module printout, e.g.
/// "Conv2d(3, 64, kernel_size=(3, 3), stride=(1, 1), padding=(1, 1))".
std::string describe(const LayerSpec& spec);

/// A trainable tensor and its gradient slot. The gradient is allocated by
/// the first backward pass and then always has the value's shape.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool frozen = false;

    Tensor<T>& grad_slot() {
        if (!grad || grad->shape() != value.shape()) grad.emplace(value.shape());
        return *grad;
    }
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerSpec spec() const = 0;
    LayerKind kind() const { return kind_of(spec()); }
    std::string describe() const { return vggfire::describe(spec()); }

    /// Train mode caches whatever backward needs. Eval mode is `infer` and
    /// leaves the layer untouched.
    Tensor<T> forward(const Tensor<T>& input, Mode mode) {
        return mode == Mode::Eval ? infer(input) : train_forward(input);
    }

    /// Stateless evaluation-mode forward; safe to call concurrently.
    virtual Tensor<T> infer(const Tensor<T>& input) const = 0;

    /// Returns dL/dinput and overwrites parameter gradient slots. Throws
    /// StateError if no training-mode forward preceded it.
    virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;

    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    virtual std::vector<const Parameter<T>*> parameters() const { return {}; }

    virtual bool has_cache() const = 0;
    virtual void reset_cache() = 0;

protected:
    virtual Tensor<T> train_forward(const Tensor<T>& input) = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
public:
    explicit Conv2d(const Conv2dSpec& spec);

    LayerSpec spec() const override { return spec_; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
    std::vector<const Parameter<T>*> parameters() const override { return {&weight_, &bias_}; }
    bool has_cache() const override { return input_.has_value(); }
    void reset_cache() override { input_.reset(); }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    Window2d window() const;

    Conv2dSpec spec_;
    Parameter<T> weight_;  // out x in x k x k
    Parameter<T> bias_;    // out
    std::optional<Tensor<T>> input_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    LayerSpec spec() const override { return ReLUSpec{}; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return input_.has_value(); }
    void reset_cache() override { input_.reset(); }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    std::optional<Tensor<T>> input_;
};

/// Max pooling without padding. Ties resolve to the first maximum in
/// row-major window order.
template <typename T>
class MaxPool2d final : public Layer<T> {
public:
    explicit MaxPool2d(const MaxPool2dSpec& spec = {});

    LayerSpec spec() const override { return spec_; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return input_shape_.has_value(); }
    void reset_cache() override {
        input_shape_.reset();
        argmax_.clear();
    }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    MaxPool2dSpec spec_;
    std::optional<Shape> input_shape_;
    std::vector<std::size_t> argmax_;  // flat input index per output element
};

/// Output cell (i, j) averages rows [floor(i*H/Oh), ceil((i+1)*H/Oh)) and the
/// matching column range.
template <typename T>
class AdaptiveAvgPool2d final : public Layer<T> {
public:
    explicit AdaptiveAvgPool2d(const AdaptiveAvgPool2dSpec& spec = {});

    LayerSpec spec() const override { return spec_; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return input_shape_.has_value(); }
    void reset_cache() override { input_shape_.reset(); }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    AdaptiveAvgPool2dSpec spec_;
    std::optional<Shape> input_shape_;
};

/// N x ... -> N x (product of remaining dims).
template <typename T>
class Flatten final : public Layer<T> {
public:
    LayerSpec spec() const override { return FlattenSpec{}; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return input_shape_.has_value(); }
    void reset_cache() override { input_shape_.reset(); }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    std::optional<Shape> input_shape_;
};

/// y = x W^T + b with W stored out x in.
template <typename T>
class Linear final : public Layer<T> {
public:
    explicit Linear(const LinearSpec& spec);

    LayerSpec spec() const override { return spec_; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
    std::vector<const Parameter<T>*> parameters() const override { return {&weight_, &bias_}; }
    bool has_cache() const override { return input_.has_value(); }
    void reset_cache() override { input_.reset(); }

    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    LinearSpec spec_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    std::optional<Tensor<T>> input_;
};

/// Inverted dropout: training zeroes each element with probability p and
/// scales survivors by 1/(1-p); evaluation is the identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(const DropoutSpec& spec = {}, std::uint64_t seed = 0);

    LayerSpec spec() const override { return spec_; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return mask_.has_value(); }
    void reset_cache() override { mask_.reset(); }

    void reseed(std::uint64_t seed) { rng_.seed(seed); }

    /// While frozen, training-mode forward reuses the cached mask instead of
    /// drawing a new one (used by gradient checks).
    void freeze_mask(bool frozen) { mask_frozen_ = frozen; }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    DropoutSpec spec_;
    std::mt19937_64 rng_;
    bool mask_frozen_ = false;
    std::optional<Tensor<T>> mask_;  // 0 or 1/(1-p)
};

/// Row-wise softmax over an N x K tensor, max-subtracted for stability.
template <typename T>
class Softmax final : public Layer<T> {
public:
    LayerSpec spec() const override { return SoftmaxSpec{}; }
    Tensor<T> infer(const Tensor<T>& input) const override;
    Tensor<T> backward(const Tensor<T>& grad_output) override;
    bool has_cache() const override { return output_.has_value(); }
    void reset_cache() override { output_.reset(); }

private:
    Tensor<T> train_forward(const Tensor<T>& input) override;
    std::optional<Tensor<T>> output_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::uint64_t seed = 0);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

} // namespace vggfire
