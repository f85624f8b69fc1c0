#include "vggfire/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace vggfire {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

template <typename T>
void require_same_shape(const Tensor<T>& got, const Shape& expected, const char* what) {
    if (got.shape() != expected) {
        throw ShapeError(fmt::format("{}: gradient shape {} does not match forward shape {}", what,
                                     shape_string(got.shape()), shape_string(expected)));
    }
}

[[noreturn]] void missing_cache(const char* layer) {
    throw StateError(fmt::format("{}: backward called without a cached training-mode forward", layer));
}

// Uniform double in [0, 1) from the top 53 bits, independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace

const char* layer_kind_name(LayerKind kind) noexcept {
    switch (kind) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::MaxPool2d: return "MaxPool2d";
    case LayerKind::AdaptiveAvgPool2d: return "AdaptiveAvgPool2d";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Linear: return "Linear";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Softmax: return "Softmax";
    }
    return "?";
}

LayerKind kind_of(const LayerSpec& spec) noexcept {
    return std::visit(Overloaded{
                          [](const Conv2dSpec&) { return LayerKind::Conv2d; },
                          [](const ReLUSpec&) { return LayerKind::ReLU; },
                          [](const MaxPool2dSpec&) { return LayerKind::MaxPool2d; },
                          [](const AdaptiveAvgPool2dSpec&) { return LayerKind::AdaptiveAvgPool2d; },
                          [](const FlattenSpec&) { return LayerKind::Flatten; },
                          [](const LinearSpec&) { return LayerKind::Linear; },
                          [](const DropoutSpec&) { return LayerKind::Dropout; },
                          [](const SoftmaxSpec&) { return LayerKind::Softmax; },
                      },
                      spec);
}

std::string describe(const LayerSpec& spec) {
    return std::visit(
        Overloaded{
            [](const Conv2dSpec& s) {
                return fmt::format("Conv2d({}, {}, kernel_size=({}, {}), stride=({}, {}), padding=({}, {}))",
                                   s.in_channels, s.out_channels, s.kernel, s.kernel, s.stride, s.stride, s.padding,
                                   s.padding);
            },
            [](const ReLUSpec&) { return std::string("ReLU(inplace=True)"); },
            [](const MaxPool2dSpec& s) {
                return fmt::format("MaxPool2d(kernel_size={}, stride={}, padding=0, dilation=1, ceil_mode=False)",
                                   s.kernel, s.stride);
            },
            [](const AdaptiveAvgPool2dSpec& s) {
                return fmt::format("AdaptiveAvgPool2d(output_size=({}, {}))", s.output_h, s.output_w);
            },
            [](const FlattenSpec&) { return std::string("Flatten(start_dim=1, end_dim=-1)"); },
            [](const LinearSpec& s) {
                return fmt::format("Linear(in_features={}, out_features={}, bias=True)", s.in_features,
                                   s.out_features);
            },
            [](const DropoutSpec& s) { return fmt::format("Dropout(p={}, inplace=False)", s.p); },
            [](const SoftmaxSpec&) { return std::string("Softmax(dim=1)"); },
        },
        spec);
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const Conv2dSpec& spec) : spec_(spec) {
    if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
        throw ConfigError("Conv2d: channels, kernel and stride must be >= 1");
    }
    weight_.name = "weight";
    weight_.value = Tensor<T>({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
    bias_.name = "bias";
    bias_.value = Tensor<T>({spec.out_channels});
}

template <typename T>
Window2d Conv2d<T>::window() const {
    return Window2d{spec_.kernel, spec_.kernel, spec_.stride, spec_.stride, spec_.padding, spec_.padding};
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& input) const {
    require_rank(input, 4, "Conv2d");
    if (input.dim(1) != spec_.in_channels) {
        throw ShapeError(fmt::format("Conv2d: expected {} input channels, got input {}", spec_.in_channels,
                                     shape_string(input.shape())));
    }
    const Window2d win = window();
    const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
    const std::size_t out_h = window_output_size(h, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(w, win.kernel_w, win.stride_w, win.pad_w);
    const std::size_t patch = spec_.in_channels * spec_.kernel * spec_.kernel;
    const std::size_t positions = out_h * out_w;
    const std::size_t in_image = spec_.in_channels * h * w;
    const std::size_t out_image = spec_.out_channels * positions;

    Tensor<T> out({n, spec_.out_channels, out_h, out_w});
    std::vector<T> cols(patch * positions);
    for (std::size_t s = 0; s < n; ++s) {
        im2col<T>(input.data().subspan(s * in_image, in_image), spec_.in_channels, h, w, win, cols, positions, 0);
        auto out_slice = out.data().subspan(s * out_image, out_image);
        gemm<T>(spec_.out_channels, positions, patch, weight_.value.data(), cols, out_slice, false);
        for (std::size_t co = 0; co < spec_.out_channels; ++co) {
            const T b = bias_.value[co];
            T* row = out_slice.data() + co * positions;
            for (std::size_t p = 0; p < positions; ++p) row[p] += b;
        }
    }
    return out;
}

template <typename T>
Tensor<T> Conv2d<T>::train_forward(const Tensor<T>& input) {
    Tensor<T> out = infer(input);
    input_ = input;
    return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_output) {
    if (!input_) missing_cache("Conv2d");
    const Tensor<T>& input = *input_;
    const Window2d win = window();
    const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
    const std::size_t out_h = window_output_size(h, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(w, win.kernel_w, win.stride_w, win.pad_w);
    require_same_shape(grad_output, Shape{n, spec_.out_channels, out_h, out_w}, "Conv2d");

    const std::size_t cout = spec_.out_channels;
    const std::size_t patch = spec_.in_channels * spec_.kernel * spec_.kernel;
    const std::size_t positions = out_h * out_w;
    const std::size_t in_image = spec_.in_channels * h * w;
    const std::size_t out_image = cout * positions;

    std::vector<T> weight_t(patch * cout);
    transpose<T>(weight_.value.data(), cout, patch, weight_t);

    std::vector<T> cols(patch * positions);
    std::vector<T> grad_cols(patch * positions);
    std::vector<T> grad_out_t(positions * cout);
    std::vector<T> grad_weight_t(patch * cout, T{0});
    Tensor<T>& grad_bias = bias_.grad_slot();
    grad_bias.fill(T{0});
    Tensor<T> grad_input(input.shape());

    for (std::size_t s = 0; s < n; ++s) {
        const auto dy = grad_output.data().subspan(s * out_image, out_image);
        im2col<T>(input.data().subspan(s * in_image, in_image), spec_.in_channels, h, w, win, cols, positions, 0);

        // dW^T += cols * dY^T
        transpose<T>(dy, cout, positions, grad_out_t);
        gemm<T>(patch, cout, positions, cols, grad_out_t, grad_weight_t, true);

        for (std::size_t co = 0; co < cout; ++co) {
            const T* row = dy.data() + co * positions;
            T acc = grad_bias[co];
            for (std::size_t p = 0; p < positions; ++p) acc += row[p];
            grad_bias[co] = acc;
        }

        // dcols = W^T * dY
        gemm<T>(patch, positions, cout, weight_t, dy, grad_cols, false);
        col2im<T>(grad_cols, positions, 0, spec_.in_channels, h, w, win,
                  grad_input.data().subspan(s * in_image, in_image));
    }

    transpose<T>(grad_weight_t, patch, cout, weight_.grad_slot().data());
    return grad_input;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const auto in = input.data();
    auto o = out.data();
    // NaN passes through.
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] < T{0} ? T{0} : in[i];
    return out;
}

template <typename T>
Tensor<T> ReLU<T>::infer(const Tensor<T>& input) const {
    return relu(input);
}

template <typename T>
Tensor<T> ReLU<T>::train_forward(const Tensor<T>& input) {
    input_ = input;
    return relu(input);
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_output) {
    if (!input_) missing_cache("ReLU");
    require_same_shape(grad_output, input_->shape(), "ReLU");
    Tensor<T> grad(grad_output.shape());
    const auto x = input_->data();
    const auto dy = grad_output.data();
    auto dx = grad.data();
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
    return grad;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(const MaxPool2dSpec& spec) : spec_(spec) {
    if (spec.kernel == 0 || spec.stride == 0) throw ConfigError("MaxPool2d: kernel and stride must be >= 1");
}

namespace {

template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, const MaxPool2dSpec& spec_, std::vector<std::size_t>* argmax_out) {
    require_rank(input, 4, "MaxPool2d");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t out_h = window_output_size(h, spec_.kernel, spec_.stride, 0);
    const std::size_t out_w = window_output_size(w, spec_.kernel, spec_.stride, 0);
    Tensor<T> out({n, c, out_h, out_w});
    std::vector<std::size_t> argmax;
    if (argmax_out) argmax.resize(out.size());

    const auto in = input.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
            for (std::size_t ow = 0; ow < out_w; ++ow, ++o) {
                std::size_t best = base + (oh * spec_.stride) * w + ow * spec_.stride;
                for (std::size_t di = 0; di < spec_.kernel; ++di) {
                    const std::size_t row = base + (oh * spec_.stride + di) * w + ow * spec_.stride;
                    for (std::size_t dj = 0; dj < spec_.kernel; ++dj) {
                        const T v = in[row + dj];
                        if (v > in[best] || (std::isnan(v) && !std::isnan(in[best]))) best = row + dj;
                    }
                }
                out[o] = in[best];
                if (argmax_out) argmax[o] = best;
            }
        }
    }

    if (argmax_out) *argmax_out = std::move(argmax);
    return out;
}

} // namespace

template <typename T>
Tensor<T> MaxPool2d<T>::infer(const Tensor<T>& input) const {
    return max_pool(input, spec_, nullptr);
}

template <typename T>
Tensor<T> MaxPool2d<T>::train_forward(const Tensor<T>& input) {
    Tensor<T> out = max_pool(input, spec_, &argmax_);
    input_shape_ = input.shape();
    return out;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_output) {
    if (!input_shape_) missing_cache("MaxPool2d");
    if (grad_output.size() != argmax_.size()) {
        throw ShapeError(fmt::format("MaxPool2d: gradient {} does not match cached output size {}",
                                     shape_string(grad_output.shape()), argmax_.size()));
    }
    Tensor<T> grad(*input_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) grad[argmax_[o]] += grad_output[o];
    return grad;
}

// ---------------------------------------------------------------- AdaptiveAvgPool2d

namespace {

struct PoolRange {
    std::size_t begin;
    std::size_t end;
};

PoolRange adaptive_range(std::size_t index, std::size_t in, std::size_t out) {
    return {index * in / out, ((index + 1) * in + out - 1) / out};
}

} // namespace

template <typename T>
AdaptiveAvgPool2d<T>::AdaptiveAvgPool2d(const AdaptiveAvgPool2dSpec& spec) : spec_(spec) {
    if (spec.output_h == 0 || spec.output_w == 0) throw ConfigError("AdaptiveAvgPool2d: output size must be >= 1");
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::infer(const Tensor<T>& input) const {
    require_rank(input, 4, "AdaptiveAvgPool2d");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h < spec_.output_h || w < spec_.output_w) {
        throw ShapeError(fmt::format("AdaptiveAvgPool2d: input {} smaller than output size ({}, {})",
                                     shape_string(input.shape()), spec_.output_h, spec_.output_w));
    }
    Tensor<T> out({n, c, spec_.output_h, spec_.output_w});
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const T* src = input.data().data() + plane * h * w;
        for (std::size_t i = 0; i < spec_.output_h; ++i) {
            const auto rows = adaptive_range(i, h, spec_.output_h);
            for (std::size_t j = 0; j < spec_.output_w; ++j, ++o) {
                const auto cols = adaptive_range(j, w, spec_.output_w);
                T sum{0};
                for (std::size_t r = rows.begin; r < rows.end; ++r)
                    for (std::size_t col = cols.begin; col < cols.end; ++col) sum += src[r * w + col];
                out[o] = sum / static_cast<T>((rows.end - rows.begin) * (cols.end - cols.begin));
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::train_forward(const Tensor<T>& input) {
    Tensor<T> out = infer(input);
    input_shape_ = input.shape();
    return out;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::backward(const Tensor<T>& grad_output) {
    if (!input_shape_) missing_cache("AdaptiveAvgPool2d");
    const Shape& shape = *input_shape_;
    const std::size_t n = shape[0], c = shape[1], h = shape[2], w = shape[3];
    require_same_shape(grad_output, Shape{n, c, spec_.output_h, spec_.output_w}, "AdaptiveAvgPool2d");
    Tensor<T> grad(shape);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        T* dst = grad.data().data() + plane * h * w;
        for (std::size_t i = 0; i < spec_.output_h; ++i) {
            const auto rows = adaptive_range(i, h, spec_.output_h);
            for (std::size_t j = 0; j < spec_.output_w; ++j, ++o) {
                const auto cols = adaptive_range(j, w, spec_.output_w);
                const T share =
                    grad_output[o] / static_cast<T>((rows.end - rows.begin) * (cols.end - cols.begin));
                for (std::size_t r = rows.begin; r < rows.end; ++r)
                    for (std::size_t col = cols.begin; col < cols.end; ++col) dst[r * w + col] += share;
            }
        }
    }
    return grad;
}

// ---------------------------------------------------------------- Flatten

template <typename T>
Tensor<T> Flatten<T>::infer(const Tensor<T>& input) const {
    const std::size_t n = input.dim(0);
    return input.reshaped({n, input.size() / n});
}

template <typename T>
Tensor<T> Flatten<T>::train_forward(const Tensor<T>& input) {
    input_shape_ = input.shape();
    return infer(input);
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_output) {
    if (!input_shape_) missing_cache("Flatten");
    return grad_output.reshaped(*input_shape_);
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const LinearSpec& spec) : spec_(spec) {
    if (spec.in_features == 0 || spec.out_features == 0) throw ConfigError("Linear: feature sizes must be >= 1");
    weight_.name = "weight";
    weight_.value = Tensor<T>({spec.out_features, spec.in_features});
    bias_.name = "bias";
    bias_.value = Tensor<T>({spec.out_features});
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& input) const {
    if (input.rank() != 2 || input.dim(1) != spec_.in_features) {
        throw ShapeError(fmt::format("Linear: expected N x {} input, got {}", spec_.in_features,
                                     shape_string(input.shape())));
    }
    const std::size_t n = input.dim(0), f = spec_.in_features, g = spec_.out_features;

    // Y^T = W X^T keeps the large weight matrix as the streamed left operand.
    std::vector<T> input_t(f * n);
    transpose<T>(input.data(), n, f, input_t);
    std::vector<T> out_t(g * n);
    gemm<T>(g, n, f, weight_.value.data(), input_t, out_t, false);

    Tensor<T> out({n, g});
    transpose<T>(out_t, g, n, out.data());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < g; ++j) out[r * g + j] += bias_.value[j];
    return out;
}

template <typename T>
Tensor<T> Linear<T>::train_forward(const Tensor<T>& input) {
    Tensor<T> out = infer(input);
    input_ = input;
    return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_output) {
    if (!input_) missing_cache("Linear");
    const std::size_t n = input_->dim(0), f = spec_.in_features, g = spec_.out_features;
    require_same_shape(grad_output, Shape{n, g}, "Linear");

    Tensor<T> grad_input({n, f});
    gemm<T>(n, f, g, grad_output.data(), weight_.value.data(), grad_input.data(), false);

    std::vector<T> grad_out_t(g * n);
    transpose<T>(grad_output.data(), n, g, grad_out_t);
    gemm<T>(g, f, n, grad_out_t, input_->data(), weight_.grad_slot().data(), false);

    Tensor<T>& grad_bias = bias_.grad_slot();
    for (std::size_t j = 0; j < g; ++j) {
        T acc{0};
        for (std::size_t r = 0; r < n; ++r) acc += grad_output[r * g + j];
        grad_bias[j] = acc;
    }
    return grad_input;
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(const DropoutSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
    if (!(spec.p >= 0.0 && spec.p < 1.0)) {
        throw ConfigError(fmt::format("Dropout: p must be in [0, 1), got {}", spec.p));
    }
}

template <typename T>
Tensor<T> Dropout<T>::infer(const Tensor<T>& input) const {
    return input;
}

template <typename T>
Tensor<T> Dropout<T>::train_forward(const Tensor<T>& input) {
    if (!(mask_frozen_ && mask_ && mask_->shape() == input.shape())) {
        Tensor<T> mask(input.shape());
        const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.p));
        for (auto& m : mask.data()) m = unit_uniform(rng_) < spec_.p ? T{0} : keep_scale;
        mask_ = std::move(mask);
    }
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] * (*mask_)[i];
    return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_output) {
    if (!mask_) missing_cache("Dropout");
    require_same_shape(grad_output, mask_->shape(), "Dropout");
    Tensor<T> grad(grad_output.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad_output[i] * (*mask_)[i];
    return grad;
}

// ---------------------------------------------------------------- Softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor<T> out({n, k});
    for (std::size_t r = 0; r < n; ++r) {
        const T* z = logits.data().data() + r * k;
        T* y = out.data().data() + r * k;
        const T peak = *std::max_element(z, z + k);
        T total{0};
        for (std::size_t j = 0; j < k; ++j) {
            y[j] = std::exp(z[j] - peak);
            total += y[j];
        }
        for (std::size_t j = 0; j < k; ++j) y[j] /= total;
    }
    return out;
}

template <typename T>
Tensor<T> Softmax<T>::infer(const Tensor<T>& input) const {
    return softmax(input);
}

template <typename T>
Tensor<T> Softmax<T>::train_forward(const Tensor<T>& input) {
    output_ = softmax(input);
    return *output_;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& grad_output) {
    if (!output_) missing_cache("Softmax");
    require_same_shape(grad_output, output_->shape(), "Softmax");
    const std::size_t n = output_->dim(0), k = output_->dim(1);
    Tensor<T> grad({n, k});
    for (std::size_t r = 0; r < n; ++r) {
        const T* y = output_->data().data() + r * k;
        const T* dy = grad_output.data().data() + r * k;
        T dot{0};
        for (std::size_t j = 0; j < k; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < k; ++j) grad[r * k + j] = y[j] * (dy[j] - dot);
    }
    return grad;
}

// ---------------------------------------------------------------- factory

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::uint64_t seed) {
    return std::visit(
        Overloaded{
            [](const Conv2dSpec& s) -> std::unique_ptr<Layer<T>> { return std::make_unique<Conv2d<T>>(s); },
            [](const ReLUSpec&) -> std::unique_ptr<Layer<T>> { return std::make_unique<ReLU<T>>(); },
            [](const MaxPool2dSpec& s) -> std::unique_ptr<Layer<T>> { return std::make_unique<MaxPool2d<T>>(s); },
            [](const AdaptiveAvgPool2dSpec& s) -> std::unique_ptr<Layer<T>> {
                return std::make_unique<AdaptiveAvgPool2d<T>>(s);
            },
            [](const FlattenSpec&) -> std::unique_ptr<Layer<T>> { return std::make_unique<Flatten<T>>(); },
            [](const LinearSpec& s) -> std::unique_ptr<Layer<T>> { return std::make_unique<Linear<T>>(s); },
            [seed](const DropoutSpec& s) -> std::unique_ptr<Layer<T>> {
                return std::make_unique<Dropout<T>>(s, seed);
            },
            [](const SoftmaxSpec&) -> std::unique_ptr<Layer<T>> { return std::make_unique<Softmax<T>>(); },
        },
        spec);
}

#define VGGFIRE_INSTANTIATE_LAYERS(T)                                                                            \
    template class Conv2d<T>;                                                                                   \
    template class ReLU<T>;                                                                                     \
    template class MaxPool2d<T>;                                                                                \
    template class AdaptiveAvgPool2d<T>;                                                                        \
    template class Flatten<T>;                                                                                  \
    template class Linear<T>;                                                                                   \
    template class Dropout<T>;                                                                                  \
    template class Softmax<T>;                                                                                  \
    template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, std::uint64_t);                         \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                               \
    template Tensor<T> softmax<T>(const Tensor<T>&);

VGGFIRE_INSTANTIATE_LAYERS(float)
VGGFIRE_INSTANTIATE_LAYERS(double)

#undef VGGFIRE_INSTANTIATE_LAYERS

} // namespace vggfire
