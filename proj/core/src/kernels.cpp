#include "vggfire/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include <fmt/format.h>

namespace vggfire {

namespace {

std::atomic<unsigned> g_kernel_threads{1};

// Four rows of C share each load of a B row segment. Every c[i][j] is
// updated once per kk in ascending order, so the accumulation sequence is
// independent of how rows are grouped or partitioned.
template <typename T>
void gemm_row_range(std::size_t row_begin, std::size_t row_end, std::size_t n, std::size_t k, const T* a,
                    const T* b, T* c) {
    for (std::size_t jb = 0; jb < n; jb += GemmBlocking::kColBlock) {
        const std::size_t jw = std::min(GemmBlocking::kColBlock, n - jb);
        for (std::size_t kb = 0; kb < k; kb += GemmBlocking::kDepthBlock) {
            const std::size_t kend = std::min(kb + GemmBlocking::kDepthBlock, k);
            for (std::size_t ib = row_begin; ib < row_end; ib += GemmBlocking::kRowBlock) {
                const std::size_t iend = std::min(ib + GemmBlocking::kRowBlock, row_end);
                std::size_t i = ib;
                for (; i + 4 <= iend; i += 4) {
                    T* c0 = c + i * n + jb;
                    T* c1 = c0 + n;
                    T* c2 = c1 + n;
                    T* c3 = c2 + n;
                    for (std::size_t kk = kb; kk < kend; ++kk) {
                        const T a0 = a[i * k + kk];
                        const T a1 = a[(i + 1) * k + kk];
                        const T a2 = a[(i + 2) * k + kk];
                        const T a3 = a[(i + 3) * k + kk];
                        const T* __restrict brow = b + kk * n + jb;
                        for (std::size_t j = 0; j < jw; ++j) {
                            const T bv = brow[j];
                            c0[j] += a0 * bv;
                            c1[j] += a1 * bv;
                            c2[j] += a2 * bv;
                            c3[j] += a3 * bv;
                        }
                    }
                }
                for (; i < iend; ++i) {
                    T* __restrict crow = c + i * n + jb;
                    for (std::size_t kk = kb; kk < kend; ++kk) {
                        const T av = a[i * k + kk];
                        const T* __restrict brow = b + kk * n + jb;
                        for (std::size_t j = 0; j < jw; ++j) crow[j] += av * brow[j];
                    }
                }
            }
        }
    }
}

} // namespace

void set_kernel_threads(unsigned threads) { g_kernel_threads.store(std::max(1u, threads)); }

unsigned kernel_threads() noexcept { return g_kernel_threads.load(); }

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
    if (a.size() < m * k || b.size() < k * n || c.size() < m * n) {
        throw ShapeError(fmt::format("gemm operand sizes ({}, {}, {}) too small for m={} n={} k={}", a.size(),
                                     b.size(), c.size(), m, n, k));
    }
    if (!accumulate) std::fill_n(c.begin(), m * n, T{0});
    if (m == 0 || n == 0 || k == 0) return;

    const std::size_t blocks = (m + GemmBlocking::kRowBlock - 1) / GemmBlocking::kRowBlock;
    const std::size_t workers = std::min<std::size_t>(kernel_threads(), blocks);
    if (workers <= 1) {
        gemm_row_range(0, m, n, k, a.data(), b.data(), c.data());
        return;
    }
    const std::size_t blocks_per_worker = (blocks + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = std::min(m, w * blocks_per_worker * GemmBlocking::kRowBlock);
        const std::size_t end = std::min(m, (w + 1) * blocks_per_worker * GemmBlocking::kRowBlock);
        if (begin >= end) break;
        pool.emplace_back([=] { gemm_row_range(begin, end, n, k, a.data(), b.data(), c.data()); });
    }
}

template <typename T>
void transpose(std::span<const T> src, std::size_t rows, std::size_t cols, std::span<T> dst) {
    constexpr std::size_t tile = 32;
    for (std::size_t rb = 0; rb < rows; rb += tile) {
        const std::size_t rend = std::min(rb + tile, rows);
        for (std::size_t cb = 0; cb < cols; cb += tile) {
            const std::size_t cend = std::min(cb + tile, cols);
            for (std::size_t r = rb; r < rend; ++r)
                for (std::size_t col = cb; col < cend; ++col) dst[col * rows + r] = src[r * cols + col];
        }
    }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError(fmt::format("matmul dimension mismatch: {} x {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    gemm<T>(m, n, k, a.data(), b.data(), c.data(), false);
    return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank(a, 2, "transpose");
    Tensor<T> out({a.dim(1), a.dim(0)});
    transpose<T>(a.data(), a.dim(0), a.dim(1), out.data());
    return out;
}

std::size_t window_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (kernel == 0 || stride == 0) throw ShapeError("window kernel and stride must be >= 1");
    const std::size_t padded = in + 2 * pad;
    if (padded < kernel || (padded - kernel) % stride != 0) {
        throw ShapeError(fmt::format("window (kernel {}, stride {}, pad {}) does not tile input extent {}", kernel,
                                     stride, pad, in));
    }
    return (padded - kernel) / stride + 1;
}

template <typename T>
void im2col(std::span<const T> image, std::size_t channels, std::size_t height, std::size_t width,
            const Window2d& win, std::span<T> cols, std::size_t row_stride, std::size_t col_offset) {
    const std::size_t out_h = window_output_size(height, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(width, win.kernel_w, win.stride_w, win.pad_w);
    const auto ph = static_cast<std::ptrdiff_t>(win.pad_h);
    const auto pw = static_cast<std::ptrdiff_t>(win.pad_w);
    const auto ih_max = static_cast<std::ptrdiff_t>(height);
    const auto iw_max = static_cast<std::ptrdiff_t>(width);

    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = image.data() + c * height * width;
        for (std::size_t di = 0; di < win.kernel_h; ++di) {
            for (std::size_t dj = 0; dj < win.kernel_w; ++dj, ++row) {
                T* dst = cols.data() + row * row_stride + col_offset;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * win.stride_h + di) - ph;
                    T* out_row = dst + oh * out_w;
                    if (ih < 0 || ih >= ih_max) {
                        std::fill_n(out_row, out_w, T{0});
                        continue;
                    }
                    const T* in_row = plane + static_cast<std::size_t>(ih) * width;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * win.stride_w + dj) - pw;
                        out_row[ow] = (iw < 0 || iw >= iw_max) ? T{0} : in_row[iw];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(std::span<const T> cols, std::size_t row_stride, std::size_t col_offset, std::size_t channels,
            std::size_t height, std::size_t width, const Window2d& win, std::span<T> image) {
    const std::size_t out_h = window_output_size(height, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(width, win.kernel_w, win.stride_w, win.pad_w);
    const auto ph = static_cast<std::ptrdiff_t>(win.pad_h);
    const auto pw = static_cast<std::ptrdiff_t>(win.pad_w);
    const auto ih_max = static_cast<std::ptrdiff_t>(height);
    const auto iw_max = static_cast<std::ptrdiff_t>(width);

    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = image.data() + c * height * width;
        for (std::size_t di = 0; di < win.kernel_h; ++di) {
            for (std::size_t dj = 0; dj < win.kernel_w; ++dj, ++row) {
                const T* src = cols.data() + row * row_stride + col_offset;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * win.stride_h + di) - ph;
                    if (ih < 0 || ih >= ih_max) continue;
                    T* in_row = plane + static_cast<std::size_t>(ih) * width;
                    const T* col_row = src + oh * out_w;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * win.stride_w + dj) - pw;
                        if (iw >= 0 && iw < iw_max) in_row[iw] += col_row[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window2d& win) {
    require_rank(input, 4, "im2col");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t out_h = window_output_size(h, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(w, win.kernel_w, win.stride_w, win.pad_w);
    const std::size_t per_image = out_h * out_w;
    Tensor<T> cols({c * win.kernel_h * win.kernel_w, n * per_image});
    for (std::size_t s = 0; s < n; ++s) {
        im2col<T>(input.data().subspan(s * c * h * w, c * h * w), c, h, w, win, cols.data(), n * per_image,
                  s * per_image);
    }
    return cols;
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window2d& win) {
    if (input_shape.size() != 4) throw ShapeError("col2im: input shape must be rank 4");
    const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    const std::size_t out_h = window_output_size(h, win.kernel_h, win.stride_h, win.pad_h);
    const std::size_t out_w = window_output_size(w, win.kernel_w, win.stride_w, win.pad_w);
    const std::size_t per_image = out_h * out_w;
    if (cols.rank() != 2 || cols.dim(0) != c * win.kernel_h * win.kernel_w || cols.dim(1) != n * per_image) {
        throw ShapeError(fmt::format("col2im: column matrix {} does not match input {}", shape_string(cols.shape()),
                                     shape_string(input_shape)));
    }
    Tensor<T> image(input_shape);
    for (std::size_t s = 0; s < n; ++s) {
        col2im<T>(cols.data(), n * per_image, s * per_image, c, h, w, win,
                  image.data().subspan(s * c * h * w, c * h * w));
    }
    return image;
}

#define VGGFIRE_INSTANTIATE_KERNELS(T)                                                                          \
    template void gemm<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,       \
                          std::span<T>, bool);                                                                  \
    template void transpose<T>(std::span<const T>, std::size_t, std::size_t, std::span<T>);                    \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                                         \
    template void im2col<T>(std::span<const T>, std::size_t, std::size_t, std::size_t, const Window2d&,        \
                            std::span<T>, std::size_t, std::size_t);                                            \
    template void col2im<T>(std::span<const T>, std::size_t, std::size_t, std::size_t, std::size_t,            \
                            std::size_t, const Window2d&, std::span<T>);                                        \
    template Tensor<T> im2col<T>(const Tensor<T>&, const Window2d&);                                           \
    template Tensor<T> col2im<T>(const Tensor<T>&, const Shape&, const Window2d&);

VGGFIRE_INSTANTIATE_KERNELS(float)
VGGFIRE_INSTANTIATE_KERNELS(double)

#undef VGGFIRE_INSTANTIATE_KERNELS

} // namespace vggfire
