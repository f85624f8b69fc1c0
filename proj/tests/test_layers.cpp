#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "checks.hpp"
#include "vggfire/layers.hpp"

using namespace vggfire;
using test::random_tensor;

TEST(Conv2d, MatchesDirectConvolutionDouble) {
    const auto stats = test::conv_oracle<double>(50, 101);
    EXPECT_EQ(stats.cases, 50u);
    EXPECT_LT(stats.worst, 1e-12);
}

TEST(Conv2d, MatchesDirectConvolutionFloat) {
    EXPECT_LT(test::conv_oracle<float>(50, 202).worst, 1e-5);
}

TEST(Conv2d, ElementwiseAgreementInDouble) {
    std::mt19937_64 rng(9);
    Conv2d<double> conv(Conv2dSpec{3, 4, 3, 1, 1});
    conv.weight().value = random_tensor<double>(conv.weight().value.shape(), rng);
    conv.bias().value = random_tensor<double>(conv.bias().value.shape(), rng);
    const auto x = random_tensor<double>({2, 3, 8, 8}, rng);
    const auto want = oracle::direct_conv2d(x, conv.weight().value, conv.bias().value, 1, 1);
    EXPECT_LT(test::elementwise_relative_error(conv.infer(x), want, 1e-9), 1e-9);
}

TEST(Conv2d, SamePaddingKeepsSpatialSize) {
    Conv2d<float> conv(Conv2dSpec{3, 8, 3, 1, 1});
    EXPECT_EQ(conv.infer(Tensor32({1, 3, 10, 6})).shape(), (Shape{1, 8, 10, 6}));
}

TEST(Conv2d, RejectsWrongChannels) {
    Conv2d<float> conv(Conv2dSpec{3, 8, 3, 1, 1});
    EXPECT_THROW(conv.infer(Tensor32({1, 4, 8, 8})), ShapeError);
    EXPECT_THROW(conv.infer(Tensor32({3, 8, 8})), ShapeError);
}

TEST(Conv2d, BackwardWithoutForwardIsStateError) {
    Conv2d<float> conv(Conv2dSpec{1, 1, 3, 1, 1});
    EXPECT_THROW(conv.backward(Tensor32({1, 1, 4, 4})), StateError);
    conv.infer(Tensor32({1, 1, 4, 4}));
    EXPECT_THROW(conv.backward(Tensor32({1, 1, 4, 4})), StateError);
}

TEST(ReLU, ClampsNegatives) {
    auto x = Tensor32::from({4}, {-1.0f, 0.0f, 2.0f, -0.5f});
    EXPECT_EQ(relu(x).values(), (std::vector<float>{0, 0, 2, 0}));
}

TEST(MaxPool2d, MatchesWindowEnumeration) {
    EXPECT_EQ(test::maxpool_oracle<float>(50, 303).worst, 0.0);
}

TEST(MaxPool2d, TiesRouteGradientToFirstMaximum) {
    MaxPool2d<float> pool;
    const auto x = Tensor32::filled({1, 1, 2, 2}, 1.0f);
    pool.forward(x, Mode::Train);
    const auto dx = pool.backward(Tensor32::filled({1, 1, 1, 1}, 3.0f));
    EXPECT_EQ(dx.values(), (std::vector<float>{3, 0, 0, 0}));
}

TEST(MaxPool2d, HalvesVggFeatureMaps) {
    MaxPool2d<float> pool;
    EXPECT_EQ(pool.infer(Tensor32({1, 64, 224, 224})).shape(), (Shape{1, 64, 112, 112}));
    EXPECT_THROW(pool.infer(Tensor32({1, 1, 7, 7})), ShapeError);
}

TEST(AdaptiveAvgPool2d, MatchesWindowEnumeration) {
    EXPECT_LT(test::avgpool_oracle<double>(50, 404).worst, 1e-12);
    EXPECT_LT(test::avgpool_oracle<float>(50, 405).worst, 1e-5);
}

TEST(AdaptiveAvgPool2d, IdentityWhenSizesMatch) {
    std::mt19937_64 rng(2);
    const auto x = random_tensor<float>({1, 2, 7, 7}, rng);
    AdaptiveAvgPool2d<float> pool(AdaptiveAvgPool2dSpec{7, 7});
    EXPECT_EQ(pool.infer(x), x);
}

TEST(AdaptiveAvgPool2d, OverlappingRegions) {
    // 5 -> 3: rows [0,2), [1,4), [3,5).
    auto x = Tensor64::from({1, 1, 5, 1}, {1, 2, 3, 4, 5});
    AdaptiveAvgPool2d<double> pool(AdaptiveAvgPool2dSpec{3, 1});
    const auto y = pool.infer(x);
    EXPECT_DOUBLE_EQ(y[0], 1.5);
    EXPECT_DOUBLE_EQ(y[1], 3.0);
    EXPECT_DOUBLE_EQ(y[2], 4.5);
}

TEST(AdaptiveAvgPool2d, RejectsInputSmallerThanOutput) {
    AdaptiveAvgPool2d<float> pool(AdaptiveAvgPool2dSpec{7, 7});
    EXPECT_THROW(pool.infer(Tensor32({1, 1, 5, 5})), ShapeError);
}

TEST(Linear, ComputesAffineMap) {
    Linear<float> lin(LinearSpec{3, 2});
    lin.weight().value = Tensor32::from({2, 3}, {1, 2, 3, 4, 5, 6});
    lin.bias().value = Tensor32::from({2}, {0.5f, -1.0f});
    const auto y = lin.infer(Tensor32::from({1, 3}, {1, 1, 2}));
    EXPECT_EQ(y.values(), (std::vector<float>{9.5f, 20.0f}));
    EXPECT_THROW(lin.infer(Tensor32({1, 4})), ShapeError);
}

TEST(Dropout, EvalIsIdentity) {
    std::mt19937_64 rng(1);
    const auto x = random_tensor<float>({4, 16}, rng);
    Dropout<float> d(DropoutSpec{0.5}, 3);
    EXPECT_EQ(d.forward(x, Mode::Eval), x);
    EXPECT_FALSE(d.has_cache());
}

TEST(Dropout, TrainZeroesOrScales) {
    const auto x = Tensor32::filled({1, 10000}, 1.0f);
    Dropout<float> d(DropoutSpec{0.5}, 3);
    const auto y = d.forward(x, Mode::Train);
    std::size_t kept = 0;
    for (float v : y.data()) {
        EXPECT_TRUE(v == 0.0f || v == 2.0f);
        kept += v != 0.0f;
    }
    EXPECT_NEAR(static_cast<double>(kept) / 10000.0, 0.5, 0.03);
}

TEST(Dropout, SameSeedSameMask) {
    const auto x = Tensor32::filled({1, 64}, 1.0f);
    Dropout<float> a(DropoutSpec{0.5}, 17), b(DropoutSpec{0.5}, 17);
    EXPECT_EQ(a.forward(x, Mode::Train), b.forward(x, Mode::Train));
    EXPECT_THROW(Dropout<float>(DropoutSpec{1.0}), ConfigError);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
    auto z = Tensor64::from({2, 3}, {1000, 1001, 1002, -5, 0, 5});
    const auto p = softmax(z);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_TRUE(std::isfinite(p[r * 3 + j]));
            s += p[r * 3 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_NEAR(p[2], std::exp(2.0) / (1 + std::exp(1.0) + std::exp(2.0)), 1e-12);
}

TEST(Describe, PrintoutStyle) {
    EXPECT_EQ(describe(Conv2dSpec{3, 64, 3, 1, 1}),
              "Conv2d(3, 64, kernel_size=(3, 3), stride=(1, 1), padding=(1, 1))");
    EXPECT_EQ(describe(MaxPool2dSpec{}), "MaxPool2d(kernel_size=2, stride=2, padding=0, dilation=1, ceil_mode=False)");
    EXPECT_EQ(describe(LinearSpec{25088, 4096}), "Linear(in_features=25088, out_features=4096, bias=True)");
    EXPECT_EQ(describe(DropoutSpec{0.5}), "Dropout(p=0.5, inplace=False)");
    EXPECT_EQ(describe(AdaptiveAvgPool2dSpec{7, 7}), "AdaptiveAvgPool2d(output_size=(7, 7))");
}

TEST(GradientCheck, EveryLayerTypeAgreesWithFiniteDifferences) {
    const auto r = test::gradient_checks(6, 2024);
    EXPECT_LT(r.conv, 1e-4);
    EXPECT_LT(r.relu, 1e-4);
    EXPECT_LT(r.maxpool, 1e-4);
    EXPECT_LT(r.avgpool, 1e-4);
    EXPECT_LT(r.linear, 1e-4);
    EXPECT_LT(r.dropout, 1e-4);
    EXPECT_LT(r.softmax, 1e-4);
    EXPECT_LT(r.softmax_ce, 1e-4);
}

TEST(GradientCheck, BackwardOverwritesGradients) {
    std::mt19937_64 rng(4);
    Linear<double> lin(LinearSpec{3, 2});
    const auto x = random_tensor<double>({2, 3}, rng);
    const auto g = random_tensor<double>({2, 2}, rng);
    lin.forward(x, Mode::Train);
    lin.backward(g);
    const auto first = *lin.weight().grad;
    lin.forward(x, Mode::Train);
    lin.backward(g);
    EXPECT_EQ(*lin.weight().grad, first);
}
