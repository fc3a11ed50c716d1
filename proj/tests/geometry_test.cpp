// SPDX-License-Identifier: Apache-2.0

#include "cigdetect/geometry.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

using namespace cigdetect;

namespace {

void expect_box(const CornerBox& b, double x1, double y1, double x2, double y2)
{
    EXPECT_DOUBLE_EQ(b.x1(), x1);
    EXPECT_DOUBLE_EQ(b.y1(), y1);
    EXPECT_DOUBLE_EQ(b.x2(), x2);
    EXPECT_DOUBLE_EQ(b.y2(), y2);
}

void expect_box(const CenterBox& b, double cx, double cy, double w, double h)
{
    EXPECT_DOUBLE_EQ(b.cx(), cx);
    EXPECT_DOUBLE_EQ(b.cy(), cy);
    EXPECT_DOUBLE_EQ(b.w(), w);
    EXPECT_DOUBLE_EQ(b.h(), h);
}

} // namespace

TEST(BoxTypes, RejectDegenerateValues)
{
    EXPECT_THROW(CenterBox(0, 0, 0, 1), ValidationError);
    EXPECT_THROW(CenterBox(0, 0, 1, -1), ValidationError);
    EXPECT_THROW(CenterBox(std::numeric_limits<double>::quiet_NaN(), 0, 1, 1), ValidationError);
    EXPECT_THROW(CornerBox(5, 0, 5, 1), ValidationError);
    EXPECT_THROW(CornerBox(6, 0, 5, 1), ValidationError);
    EXPECT_THROW(CornerBox(0, 0, std::numeric_limits<double>::infinity(), 1), ValidationError);
    EXPECT_THROW(AdjustmentDeltas(-1, 0), ValidationError);
    EXPECT_THROW(ImageExtent(0, 10), ValidationError);
    EXPECT_NO_THROW(CornerBox(-3, -3, -1, -1));
}

TEST(CenterToCorner, Examples)
{
    expect_box(center_to_corner({10, 20, 4, 6}), 8, 17, 12, 23);
    expect_box(center_to_corner({0, 0, 2, 2}), -1, -1, 1, 1);
    expect_box(center_to_corner({5.5, 5.5, 1, 1}), 5, 5, 6, 6);
}

TEST(CornerToCenter, Examples)
{
    expect_box(corner_to_center({8, 17, 12, 23}), 10, 20, 4, 6);
    expect_box(corner_to_center({-1, -1, 1, 1}), 0, 0, 2, 2);
    const CornerBox b(3, 4, 9, 10);
    EXPECT_EQ(center_to_corner(corner_to_center(b)), b);
}

TEST(AdjustFaceBox, Examples)
{
    expect_box(adjust_face_box({50, 40, 20, 30}, {10, 5}), 50, 45, 30, 30);
    expect_box(adjust_face_box({100, 100, 40, 40}, {8, 12}), 100, 112, 48, 40);
    const CenterBox b(7.25, 3.5, 2, 9);
    EXPECT_EQ(adjust_face_box(b, {}), b);
}

TEST(AdjustHandBox, Examples)
{
    expect_box(adjust_hand_box({10, 10, 30, 40}, {2, 3}), 8, 7, 32, 43);
    expect_box(adjust_hand_box({0, 0, 5, 5}, {1, 1}), -1, -1, 6, 6);
    const CornerBox b(1.5, 2.5, 3.5, 4.5);
    EXPECT_EQ(adjust_hand_box(b, {}), b);
}

TEST(ClipToExtent, Examples)
{
    const ImageExtent e(10, 10);
    expect_box(clip_to_extent({-1, -1, 6, 6}, e), 0, 0, 6, 6);
    expect_box(clip_to_extent({2, 2, 4, 4}, e), 2, 2, 4, 4);
    EXPECT_THROW(clip_to_extent({11, 11, 12, 12}, e), EmptyIntersection);
}

TEST(ClipToExtent, EdgeTouchIsEmpty)
{
    const ImageExtent e(10, 10);
    EXPECT_THROW(clip_to_extent({10, 0, 15, 5}, e), EmptyIntersection);
    EXPECT_THROW(clip_to_extent({-5, -5, 0, 3}, e), EmptyIntersection);
}

TEST(Contains, Examples)
{
    EXPECT_TRUE(contains({0, 0, 10, 10}, {2, 2, 5, 5}));
    EXPECT_FALSE(contains({0, 0, 10, 10}, {5, 5, 11, 11}));
    const CornerBox b(0.5, 1, 3, 4);
    EXPECT_TRUE(contains(b, b));
}

TEST(Rasterize, FloorsTopLeftCeilsBottomRight)
{
    EXPECT_EQ(rasterize({1.25, 104, 38.75, 120}), (PixelRect{1, 104, 38, 16}));
    EXPECT_EQ(rasterize({2, 2, 4, 4}), (PixelRect{2, 2, 2, 2}));
    EXPECT_EQ(rasterize({3.2, 0.1, 3.7, 0.9}), (PixelRect{3, 0, 1, 1}));
}

// Randomised properties --------------------------------------------------------

class GeometryProperty : public ::testing::Test {
protected:
    std::mt19937_64 rng{20240611};

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

    CenterBox random_center() { return {uniform(-500, 500), uniform(-500, 500), uniform(0.01, 300), uniform(0.01, 300)}; }
    AdjustmentDeltas random_deltas() { return {uniform(0, 50), uniform(0, 50)}; }
};

TEST_F(GeometryProperty, RoundTripWithinTolerance)
{
    for (int i = 0; i < 2000; ++i) {
        const auto b = random_center();
        const auto back = corner_to_center(center_to_corner(b));
        ASSERT_NEAR(back.cx(), b.cx(), 1e-9);
        ASSERT_NEAR(back.cy(), b.cy(), 1e-9);
        ASSERT_NEAR(back.w(), b.w(), 1e-9);
        ASSERT_NEAR(back.h(), b.h(), 1e-9);
    }
}

TEST_F(GeometryProperty, HandAdjustmentIsSuperset)
{
    for (int i = 0; i < 2000; ++i) {
        const auto b = center_to_corner(random_center());
        ASSERT_TRUE(contains(adjust_hand_box(b, random_deltas()), b));
    }
}

TEST_F(GeometryProperty, FaceAdjustmentWidensAndKeepsHeight)
{
    for (int i = 0; i < 2000; ++i) {
        const auto b = random_center();
        const auto a = adjust_face_box(b, random_deltas());
        ASSERT_GE(a.w(), b.w());
        ASSERT_EQ(a.h(), b.h());
        ASSERT_GE(a.cy(), b.cy()); // moves down or stays
    }
}

TEST_F(GeometryProperty, ClippingIsIdempotentAndInside)
{
    const ImageExtent e(320, 240);
    int clipped = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto b = center_to_corner(random_center());
        try {
            const auto once = clip_to_extent(b, e);
            ASSERT_EQ(clip_to_extent(once, e), once);
            ASSERT_TRUE(contains(e.bounds(), once));
            ++clipped;
        } catch (const EmptyIntersection&) {
            ASSERT_TRUE(b.x2() <= 0 || b.y2() <= 0 || b.x1() >= 320 || b.y1() >= 240);
        }
    }
    EXPECT_GT(clipped, 100);
}
