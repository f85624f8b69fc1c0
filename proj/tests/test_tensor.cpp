#include <gtest/gtest.h>

#include "vggfire/tensor.hpp"

using namespace vggfire;

TEST(Tensor, ShapeAndSize) {
    Tensor32 t({2, 3, 4});
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.dim(1), 3u);
    for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tensor, RejectsEmptyAndZeroDims) {
    EXPECT_THROW(Tensor32(Shape{}), ShapeError);
    EXPECT_THROW(Tensor32({2, 0, 3}), ShapeError);
    EXPECT_THROW(Tensor32({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, AtUsesRowMajorOrder) {
    Tensor32 t({2, 3});
    for (std::size_t i = 0; i < 6; ++i) t[i] = static_cast<float>(i);
    EXPECT_EQ(t.at({1, 2}), 5.0f);
    EXPECT_EQ(t.at({0, 1}), 1.0f);
    EXPECT_THROW(t.at({2, 0}), ShapeError);
    EXPECT_THROW(t.at({0}), ShapeError);
}

TEST(Tensor, FlatIndexRoundTrip) {
    const Shape shape{3, 4, 5};
    for (std::size_t i = 0; i < 60; ++i) {
        const Shape idx = unflatten_index(shape, i);
        EXPECT_EQ(flat_index(shape, idx), i);
    }
}

TEST(Tensor, ReshapeKeepsData) {
    auto t = Tensor32::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = t.reshaped({3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(r.values(), t.values());
    EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, CastAndEquality) {
    auto t = Tensor32::from({2}, {1.5f, -2.0f});
    auto d = t.cast<double>();
    EXPECT_EQ(d[0], 1.5);
    EXPECT_EQ(d.cast<float>(), t);
    EXPECT_FALSE(Tensor32::filled({2}, 1.0f) == t);
}

TEST(Tensor, ShapeString) {
    EXPECT_EQ(shape_string(Shape{1, 3, 224, 224}), "[1x3x224x224]");
    EXPECT_EQ(shape_numel(Shape{2, 3, 4}), 24u);
}

TEST(Tensor, RequireRank) {
    Tensor32 t({2, 2});
    EXPECT_NO_THROW(require_rank(t, 2, "x"));
    EXPECT_THROW(require_rank(t, 4, "x"), ShapeError);
}
