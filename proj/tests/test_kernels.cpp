#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vggfire/kernels.hpp"

using namespace vggfire;
using test::random_tensor;

namespace {

struct GemmCase {
    std::size_t m, n, k;
};

class GemmSizes : public ::testing::TestWithParam<GemmCase> {};

} // namespace

TEST_P(GemmSizes, MatchesNaiveProduct) {
    const auto [m, n, k] = GetParam();
    std::mt19937_64 rng(m * 131 + n * 17 + k);
    const auto a = random_tensor<double>({m, k}, rng);
    const auto b = random_tensor<double>({k, n}, rng);
    const auto expected = oracle::naive_matmul<double>(m, n, k, a.data(), b.data());
    const auto c = matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c[i], expected[i], 1e-12) << i;
}

INSTANTIATE_TEST_SUITE_P(Blocking, GemmSizes,
                         ::testing::Values(GemmCase{1, 1, 1}, GemmCase{3, 5, 7}, GemmCase{4, 4, 4},
                                           GemmCase{65, 33, 17}, GemmCase{70, 520, 300}, GemmCase{130, 9, 600},
                                           GemmCase{5, 1030, 3}));

TEST(Gemm, AccumulateAddsToOutput) {
    std::vector<float> a{1, 2, 3, 4}, b{1, 0, 0, 1}, c{10, 10, 10, 10};
    gemm<float>(2, 2, 2, a, b, c, true);
    EXPECT_EQ(c, (std::vector<float>{11, 12, 13, 14}));
    gemm<float>(2, 2, 2, a, b, c, false);
    EXPECT_EQ(c, (std::vector<float>{1, 2, 3, 4}));
}

TEST(Gemm, BitwiseIdenticalAcrossThreadCounts) {
    std::mt19937_64 rng(3);
    const auto a = random_tensor<float>({300, 200}, rng);
    const auto b = random_tensor<float>({200, 150}, rng);
    set_kernel_threads(1);
    const auto one = matmul(a, b);
    set_kernel_threads(3);
    const auto three = matmul(a, b);
    set_kernel_threads(1);
    EXPECT_EQ(one, three);
}

TEST(Gemm, MatmulRejectsMismatch) {
    EXPECT_THROW(matmul(Tensor32({2, 3}), Tensor32({4, 2})), ShapeError);
}

TEST(Transpose, SwapsAxes) {
    auto t = Tensor32::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto tt = transpose(t);
    EXPECT_EQ(tt.shape(), (Shape{3, 2}));
    EXPECT_EQ(tt.values(), (std::vector<float>{1, 4, 2, 5, 3, 6}));
    EXPECT_EQ(transpose(tt), t);
}

TEST(Window, OutputSize) {
    EXPECT_EQ(window_output_size(224, 3, 1, 1), 224u);
    EXPECT_EQ(window_output_size(224, 2, 2, 0), 112u);
    EXPECT_THROW(window_output_size(7, 2, 2, 0), ShapeError);
    EXPECT_THROW(window_output_size(1, 3, 1, 0), ShapeError);
}

TEST(Im2col, ColumnsHoldReceptiveFields) {
    std::mt19937_64 rng(5);
    const auto x = random_tensor<double>({2, 3, 5, 4}, rng);
    const Window2d win{3, 3, 1, 1, 1, 1};
    const auto cols = im2col(x, win);
    ASSERT_EQ(cols.shape(), (Shape{27, 40}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t oy = 0; oy < 5; ++oy)
            for (std::size_t ox = 0; ox < 4; ++ox)
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const long iy = static_cast<long>(oy + ky) - 1, ix = static_cast<long>(ox + kx) - 1;
                            const double expected = (iy < 0 || ix < 0 || iy >= 5 || ix >= 4)
                                                        ? 0.0
                                                        : x.at({n, c, static_cast<std::size_t>(iy),
                                                                static_cast<std::size_t>(ix)});
                            EXPECT_EQ(cols.at({(c * 3 + ky) * 3 + kx, n * 20 + oy * 4 + ox}), expected);
                        }
}

TEST(Im2col, Col2imIsAdjoint) {
    // <im2col(x), y> == <x, col2im(y)> for random x, y.
    std::mt19937_64 rng(11);
    const Window2d win{3, 3, 2, 2, 1, 1};
    const auto x = random_tensor<double>({2, 2, 7, 5}, rng);
    const auto cols = im2col(x, win);
    const auto y = random_tensor<double>(cols.shape(), rng);
    const auto back = col2im(y, x.shape(), win);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}
