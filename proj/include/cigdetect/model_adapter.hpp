// SPDX-License-Identifier: Apache-2.0
// Pre- and post-processing shared by real-model backends: resizing, tensor
// packing, YOLO row decoding, non-maximum suppression and ensemble
// averaging. Nothing here depends on an inference runtime.

#pragma once

#include "cigdetect/geometry.hpp"
#include "cigdetect/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace cigdetect::model {

/** Bilinear resize with pixel-center alignment (half-pixel offsets). */
inline RgbImage resize_bilinear(const RgbImage& src, int width, int height)
{
    RgbImage dst(ImageExtent(width, height));
    const double sx = double(src.width()) / width;
    const double sy = double(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height() - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width() - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            const Rgb a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
            auto mix = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc, std::uint8_t pd) {
                const double top = pa + (pb - pa) * wx;
                const double bottom = pc + (pd - pc) * wx;
                return std::uint8_t(std::lround(top + (bottom - top) * wy));
            };
            dst.set(x, y, {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g), mix(a.b, b.b, c.b, d.b)});
        }
    }
    return dst;
}

/** Planar NCHW float tensor: value = (pixel / 255 - mean[c]) / stddev[c]. */
inline std::vector<float> to_planar_tensor(const RgbImage& img, std::array<float, 3> mean = {0, 0, 0},
                                           std::array<float, 3> stddev = {1, 1, 1})
{
    const std::size_t plane = std::size_t(img.width()) * std::size_t(img.height());
    std::vector<float> out(plane * 3);
    const auto bytes = img.bytes();
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[c * plane + i] = (float(bytes[i * 3 + c]) / 255.0f - mean[c]) / stddev[c];
        }
    }
    return out;
}

inline constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};

struct ScoredBox {
    CornerBox box;
    double confidence;
};

/** Decodes YOLO output rows laid out as [cx, cy, w, h, objectness, class
 *  scores...]. Confidence is objectness times the best class score (or
 *  objectness alone for single-output rows). Coordinates are scaled from
 *  network input pixels to image pixels. */
inline std::vector<ScoredBox> decode_yolo_rows(std::span<const float> data, std::size_t row_length,
                                               double min_confidence, double scale_x, double scale_y)
{
    std::vector<ScoredBox> out;
    if (row_length < 5) {
        return out;
    }
    for (std::size_t off = 0; off + row_length <= data.size(); off += row_length) {
        const auto row = data.subspan(off, row_length);
        double confidence = row[4];
        if (row_length > 5) {
            confidence *= *std::max_element(row.begin() + 5, row.end());
        }
        if (confidence < min_confidence || !(row[2] > 0) || !(row[3] > 0)) {
            continue;
        }
        const double cx = row[0] * scale_x, cy = row[1] * scale_y;
        const double w = row[2] * scale_x, h = row[3] * scale_y;
        out.push_back({CornerBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), std::clamp(confidence, 0.0, 1.0)});
    }
    return out;
}

inline double iou(const CornerBox& a, const CornerBox& b)
{
    const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (w <= 0 || h <= 0) {
        return 0.0;
    }
    const double inter = w * h;
    return inter / (a.area() + b.area() - inter);
}

/** Greedy NMS; result sorted by descending confidence. */
inline std::vector<ScoredBox> non_max_suppression(std::vector<ScoredBox> boxes, double iou_threshold)
{
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.confidence > b.confidence; });
    std::vector<ScoredBox> kept;
    for (const auto& candidate : boxes) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
            return iou(k.box, candidate.box) > iou_threshold;
        });
        if (!suppressed) {
            kept.push_back(candidate);
        }
    }
    return kept;
}

inline std::vector<double> softmax(std::span<const float> logits)
{
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(double(logits[i]) - peak);
        sum += out[i];
    }
    for (auto& v : out) {
        v /= sum;
    }
    return out;
}

/** Ensemble combination: element-wise mean of member probability vectors. */
inline std::vector<double> average_probabilities(std::span<const std::vector<double>> members)
{
    if (members.empty()) {
        return {};
    }
    std::vector<double> out(members.front().size(), 0.0);
    for (const auto& m : members) {
        if (m.size() != out.size()) {
            throw ValidationError("ensemble members disagree on class count");
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            out[i] += m[i];
        }
    }
    for (auto& v : out) {
        v /= double(members.size());
    }
    return out;
}

} // namespace cigdetect::model
