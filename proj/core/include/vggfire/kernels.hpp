#pragma once

#include <cstddef>
#include <span>

#include "vggfire/tensor.hpp"

namespace vggfire {

/// Cache-blocking parameters for gemm. Rows are split across worker threads
/// in multiples of kRowBlock.
struct GemmBlocking {
    static constexpr std::size_t kRowBlock = 64;
    static constexpr std::size_t kDepthBlock = 256;
    static constexpr std::size_t kColBlock = 512;
};

/// Number of worker threads used by gemm. Results are bitwise identical for
/// any worker count: each output element is owned by one worker and
/// accumulates over k in ascending order.
void set_kernel_threads(unsigned threads);
unsigned kernel_threads() noexcept;

/// C[m x n] (+)= A[m x k] * B[k x n]; all operands dense row-major.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

/// dst[cols x rows] = transpose(src[rows x cols]).
template <typename T>
void transpose(std::span<const T> src, std::size_t rows, std::size_t cols, std::span<T> dst);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// Sliding-window geometry shared by convolution and pooling.
struct Window2d {
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
};

/// (in + 2*pad - kernel) / stride + 1. Throws ShapeError when the window does
/// not tile the padded extent exactly or the result would be empty.
std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Unrolls one C x H x W image into a (C*kh*kw) x (Ho*Wo) patch block, written
/// into `cols` at column offset `col_offset` of a matrix whose rows are
/// `row_stride` long. Padding reads as zero.
template <typename T>
void im2col(std::span<const T> image, std::size_t channels, std::size_t height, std::size_t width,
            const Window2d& window, std::span<T> cols, std::size_t row_stride, std::size_t col_offset);

/// Adjoint of im2col: scatter-adds the patch block back into `image`.
template <typename T>
void col2im(std::span<const T> cols, std::size_t row_stride, std::size_t col_offset, std::size_t channels,
            std::size_t height, std::size_t width, const Window2d& window, std::span<T> image);

/// N x C x H x W -> (C*kh*kw) x (N*Ho*Wo); column n*Ho*Wo + oh*Wo + ow holds
/// the receptive field of output (n, oh, ow).
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window2d& window);

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window2d& window);

} // namespace vggfire
