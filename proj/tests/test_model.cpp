#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "support.hpp"
#include "vggfire/model.hpp"

using namespace vggfire;

namespace {

// Parameter count of a VGG16-shaped network from its channel plan alone.
std::size_t vgg16_oracle_count(std::size_t classes) {
    const std::size_t plan[13] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    std::size_t total = 0, in = 3;
    for (std::size_t out : plan) {
        total += out * in * 9 + out;
        in = out;
    }
    total += 512 * 7 * 7 * 4096 + 4096;
    total += 4096 * 4096 + 4096;
    total += 4096 * classes + classes;
    return total;
}

} // namespace

TEST(Architecture, Vgg16LayerInventory) {
    const Model model(ModelConfig::vgg16());
    const auto n = model.layer_counts();
    EXPECT_EQ(n.conv, 13u);
    EXPECT_EQ(n.maxpool, 5u);
    EXPECT_EQ(n.linear, 3u);
    EXPECT_EQ(n.dropout, 2u);
    EXPECT_EQ(n.relu, 15u);
    EXPECT_EQ(n.avgpool, 1u);
    EXPECT_EQ(model.features().size(), 31u);
    EXPECT_EQ(model.classifier().size(), 7u);
}

TEST(Architecture, Vgg16ParameterCount) {
    EXPECT_EQ(vgg16_oracle_count(2), 134268738u);
    EXPECT_EQ(Model(ModelConfig::vgg16(2)).param_count(), 134268738u);
    EXPECT_EQ(Model(ModelConfig::vgg16(1000)).param_count(), 138357544u);
    EXPECT_EQ(Model(ModelConfig::vgg16(2)).section_param_count(Section::Features), 14714688u);
}

TEST(Architecture, ParameterNamesFollowSectionIndices) {
    const Model model(ModelConfig::vgg16());
    const auto params = model.parameters();
    ASSERT_EQ(params.size(), 32u);
    EXPECT_EQ(params.front().name, "features.0.weight");
    EXPECT_EQ(params[1].name, "features.0.bias");
    EXPECT_EQ(params[25].name, "features.28.bias");
    EXPECT_EQ(params[26].name, "classifier.0.weight");
    EXPECT_EQ(params.back().name, "classifier.6.bias");
    EXPECT_EQ(params.back().param->value.shape(), (Shape{2}));
    EXPECT_EQ(params[26].param->value.shape(), (Shape{4096, 25088}));
    std::set<std::string> unique;
    for (const auto& p : params) unique.insert(p.name);
    EXPECT_EQ(unique.size(), params.size());
}

TEST(Architecture, DescribeMatchesModulePrintout) {
    const std::string text = Model(ModelConfig::vgg16()).describe();
    EXPECT_EQ(text.rfind("VGG(\n  (features): Sequential(\n", 0), 0u);
    EXPECT_NE(text.find("    (0): Conv2d(3, 64, kernel_size=(3, 3), stride=(1, 1), padding=(1, 1))\n"), std::string::npos);
    EXPECT_NE(text.find("    (30): MaxPool2d(kernel_size=2, stride=2, padding=0, dilation=1, ceil_mode=False)\n"),
              std::string::npos);
    EXPECT_NE(text.find("  (avgpool): AdaptiveAvgPool2d(output_size=(7, 7))\n"), std::string::npos);
    EXPECT_NE(text.find("    (6): Linear(in_features=4096, out_features=2, bias=True)\n"), std::string::npos);
}

TEST(Architecture, Vgg16ForwardYieldsTwoLogits) {
    const Model model = build_model(ModelConfig::vgg16(), 1);
    std::mt19937_64 rng(1);
    const auto x = test::random_tensor<float>({1, 3, 224, 224}, rng, 0.0, 1.0);
    const auto y = model.infer(x);
    EXPECT_EQ(y.shape(), (Shape{1, 2}));
    EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
}

TEST(Architecture, RejectsWrongInputSize) {
    const Model model(ModelConfig::vgg_mini());
    EXPECT_THROW(model.infer(Tensor32({1, 3, 64, 64})), ShapeError);
    EXPECT_THROW(model.infer(Tensor32({1, 1, 32, 32})), ShapeError);
}

TEST(ModelConfig, Validation) {
    auto c = ModelConfig::vgg16();
    c.input_height = 128;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(ModelConfig::vgg16(1).validate(), ConfigError);
    EXPECT_THROW(ModelConfig::vgg_mini({1, 8}, 48).validate(), ConfigError);
    EXPECT_NO_THROW(ModelConfig::vgg_mini({1, 8}, 64).validate());
}

TEST(ModelConfig, WidthParsing) {
    EXPECT_EQ(parse_width("1/8").scale(64), 8u);
    EXPECT_EQ(parse_width("0.125").scale(512), 64u);
    EXPECT_TRUE(parse_width("1").is_one());
    EXPECT_EQ(parse_width("1/3").scale(64), 22u);
    EXPECT_THROW(parse_width("2"), ConfigError);
    EXPECT_THROW(parse_width("x"), ConfigError);
    EXPECT_THROW(parse_width("0"), ConfigError);
}

TEST(ModelConfig, MiniScalesChannelsAndHead) {
    const Model model(ModelConfig::vgg_mini({1, 8}, 32));
    const auto params = model.parameters();
    EXPECT_EQ(params[0].param->value.shape(), (Shape{8, 3, 3, 3}));
    EXPECT_EQ(params[24].param->value.shape(), (Shape{64, 64, 3, 3}));
    EXPECT_EQ(params[26].param->value.shape(), (Shape{512, 64}));
    EXPECT_EQ(model.config().pool_height(), 1u);
    EXPECT_EQ(ModelConfig::vgg_mini({1, 8}, 64).pool_height(), 2u);
    EXPECT_EQ(ModelConfig::vgg_mini({1, 8}, 256).pool_height(), 7u);
}

TEST(Init, HeUniformBoundsAndZeroBias) {
    const Model model = build_model(ModelConfig::vgg_mini({1, 8}, 32), 5);
    for (const auto& p : model.parameters()) {
        const auto& v = p.param->value;
        if (v.rank() == 1) {
            for (float x : v.data()) EXPECT_EQ(x, 0.0f) << p.name;
            continue;
        }
        const std::size_t fan_in = v.size() / v.dim(0);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        double sum_sq = 0.0;
        for (float x : v.data()) {
            EXPECT_LE(std::abs(x), bound) << p.name;
            sum_sq += static_cast<double>(x) * x;
        }
        // Var(U(-b, b)) = b^2 / 3
        const double var = sum_sq / static_cast<double>(v.size());
        if (v.size() >= 2000) EXPECT_NEAR(var, bound * bound / 3.0, 0.1 * bound * bound / 3.0) << p.name;
    }
}

TEST(Init, SeedDeterminesWeights) {
    const Model a = build_model(ModelConfig::vgg_mini(), 9);
    const Model b = build_model(ModelConfig::vgg_mini(), 9);
    const Model c = build_model(ModelConfig::vgg_mini(), 10);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].param->value, pb[i].param->value);
    EXPECT_FALSE(pa[0].param->value == pc[0].param->value);
    EXPECT_NE(parameter_seed(9, 0), parameter_seed(9, 1));
}

TEST(Model, InferMatchesEvalForwardAndLeavesNoCache) {
    Model model = build_model(ModelConfig::vgg_mini(), 3);
    std::mt19937_64 rng(3);
    const auto x = test::random_tensor<float>({2, 3, 32, 32}, rng, 0.0, 1.0);
    const auto a = model.infer(x);
    const auto b = model.forward(x, Mode::Eval);
    EXPECT_EQ(a, b);
    for (const auto& layer : model.features()) EXPECT_FALSE(layer->has_cache());
}

TEST(Model, BackwardFillsEveryGradient) {
    Model model = build_model(ModelConfig::vgg_mini(), 3);
    std::mt19937_64 rng(4);
    const auto x = test::random_tensor<float>({2, 3, 32, 32}, rng, 0.0, 1.0);
    const auto y = model.forward(x, Mode::Train);
    model.backward(Tensor32::filled(y.shape(), 0.5f));
    for (const auto& p : model.parameters()) {
        ASSERT_TRUE(p.param->grad.has_value()) << p.name;
        EXPECT_EQ(p.param->grad->shape(), p.param->value.shape());
    }
}

TEST(Model, FrozenFeaturesAreNotTrainable) {
    Model model = build_model(ModelConfig::vgg_mini(), 3);
    model.set_features_frozen(true);
    const auto trainable = model.trainable_parameters();
    EXPECT_EQ(trainable.size(), 6u);
    for (const auto& p : trainable) EXPECT_EQ(p.section, Section::Classifier);

    std::mt19937_64 rng(4);
    const auto y = model.forward(test::random_tensor<float>({1, 3, 32, 32}, rng), Mode::Train);
    model.backward(Tensor32::filled(y.shape(), 1.0f));
    EXPECT_FALSE(model.parameters()[0].param->grad.has_value());
}

TEST(Model, BackwardWithoutTrainingForwardFails) {
    Model model = build_model(ModelConfig::vgg_mini(), 3);
    EXPECT_THROW(model.backward(Tensor32({1, 2})), StateError);
}
