// SPDX-License-Identifier: Apache-2.0
// Bounding-box algebra: center and corner formats, proposal adjustments,
// clipping and containment.
//
// Coordinates are real-valued pixels with the y axis growing downward.
// Rounding to whole pixels only happens in rasterize().

#pragma once

#include "cigdetect/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace cigdetect {

namespace detail {

inline bool all_finite(std::initializer_list<double> values)
{
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

} // namespace detail

/** Box given by its center and size. */
class CenterBox {
public:
    CenterBox(double cx, double cy, double w, double h)
        : cx_(cx), cy_(cy), w_(w), h_(h)
    {
        if (!detail::all_finite({cx, cy, w, h}) || !(w > 0) || !(h > 0)) {
            std::ostringstream os;
            os << "invalid center box (" << cx << ", " << cy << ", " << w << ", " << h << ")";
            throw ValidationError(os.str());
        }
    }

    double cx() const noexcept { return cx_; }
    double cy() const noexcept { return cy_; }
    double w() const noexcept { return w_; }
    double h() const noexcept { return h_; }

    friend bool operator==(const CenterBox&, const CenterBox&) = default;

private:
    double cx_;
    double cy_;
    double w_;
    double h_;
};

/** Box given by its top-left (x1, y1) and bottom-right (x2, y2) corners. */
class CornerBox {
public:
    CornerBox(double x1, double y1, double x2, double y2)
        : x1_(x1), y1_(y1), x2_(x2), y2_(y2)
    {
        if (!detail::all_finite({x1, y1, x2, y2}) || !(x1 < x2) || !(y1 < y2)) {
            std::ostringstream os;
            os << "invalid corner box (" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
            throw ValidationError(os.str());
        }
    }

    double x1() const noexcept { return x1_; }
    double y1() const noexcept { return y1_; }
    double x2() const noexcept { return x2_; }
    double y2() const noexcept { return y2_; }
    double width() const noexcept { return x2_ - x1_; }
    double height() const noexcept { return y2_ - y1_; }
    double area() const noexcept { return width() * height(); }

    /** Same box moved by (dx, dy). */
    CornerBox translated(double dx, double dy) const
    {
        return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
    }

    friend bool operator==(const CornerBox&, const CornerBox&) = default;

private:
    double x1_;
    double y1_;
    double x2_;
    double y2_;
};

/** Non-negative expansion amounts in pixels. */
class AdjustmentDeltas {
public:
    AdjustmentDeltas() = default;

    AdjustmentDeltas(double horizontal, double vertical)
        : horizontal_(horizontal), vertical_(vertical)
    {
        if (!detail::all_finite({horizontal, vertical}) || horizontal < 0 || vertical < 0) {
            throw ValidationError("adjustment deltas must be finite and non-negative");
        }
    }

    double horizontal() const noexcept { return horizontal_; }
    double vertical() const noexcept { return vertical_; }

    friend bool operator==(const AdjustmentDeltas&, const AdjustmentDeltas&) = default;

private:
    double horizontal_ = 0;
    double vertical_ = 0;
};

/** Size of an image in pixels; the clipping domain for boxes. */
class ImageExtent {
public:
    ImageExtent(int width, int height)
        : width_(width), height_(height)
    {
        if (width <= 0 || height <= 0) {
            throw ValidationError("image extent must be positive, got " + std::to_string(width) + "x"
                                  + std::to_string(height));
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    CornerBox bounds() const { return {0.0, 0.0, double(width_), double(height_)}; }

    friend bool operator==(const ImageExtent&, const ImageExtent&) = default;

private:
    int width_;
    int height_;
};

/** Integer pixel rectangle: columns [x, x + width), rows [y, y + height). */
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline CornerBox center_to_corner(const CenterBox& b)
{
    const double hw = b.w() / 2;
    const double hh = b.h() / 2;
    return {b.cx() - hw, b.cy() - hh, b.cx() + hw, b.cy() + hh};
}

inline CenterBox corner_to_center(const CornerBox& b)
{
    return {(b.x1() + b.x2()) / 2, (b.y1() + b.y2()) / 2, b.width(), b.height()};
}

/** Face adjustment: move the center down by the vertical delta and widen by
 *  the horizontal delta. Height is kept. */
inline CenterBox adjust_face_box(const CenterBox& b, const AdjustmentDeltas& d)
{
    return {b.cx(), b.cy() + d.vertical(), b.w() + d.horizontal(), b.h()};
}

/** Hand adjustment: symmetric expansion on every side. */
inline CornerBox adjust_hand_box(const CornerBox& b, const AdjustmentDeltas& d)
{
    return {b.x1() - d.horizontal(), b.y1() - d.vertical(), b.x2() + d.horizontal(),
            b.y2() + d.vertical()};
}

/** Intersection of `b` with [0, width] x [0, height].
 *  Throws EmptyIntersection when nothing of positive area remains. */
inline CornerBox clip_to_extent(const CornerBox& b, const ImageExtent& e)
{
    const double x1 = std::max(b.x1(), 0.0);
    const double y1 = std::max(b.y1(), 0.0);
    const double x2 = std::min(b.x2(), double(e.width()));
    const double y2 = std::min(b.y2(), double(e.height()));
    if (!(x1 < x2) || !(y1 < y2)) {
        std::ostringstream os;
        os << "box (" << b.x1() << ", " << b.y1() << ", " << b.x2() << ", " << b.y2()
           << ") does not intersect the " << e.width() << "x" << e.height() << " image";
        throw EmptyIntersection(os.str());
    }
    return {x1, y1, x2, y2};
}

inline bool contains(const CornerBox& outer, const CornerBox& inner)
{
    return outer.x1() <= inner.x1() && outer.y1() <= inner.y1() && inner.x2() <= outer.x2()
        && inner.y2() <= outer.y2();
}

/** Smallest pixel rectangle covering `b`: floor on the top-left corner,
 *  ceil on the bottom-right one. */
inline PixelRect rasterize(const CornerBox& b)
{
    const auto x1 = static_cast<int>(std::floor(b.x1()));
    const auto y1 = static_cast<int>(std::floor(b.y1()));
    const auto x2 = static_cast<int>(std::ceil(b.x2()));
    const auto y2 = static_cast<int>(std::ceil(b.y2()));
    return {x1, y1, x2 - x1, y2 - y1};
}

inline CornerBox to_corner_box(const PixelRect& r)
{
    return {double(r.x), double(r.y), double(r.x + r.width), double(r.y + r.height)};
}

} // namespace cigdetect
