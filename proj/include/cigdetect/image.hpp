// SPDX-License-Identifier: Apache-2.0
// RGB rasters, PNG/JPEG codecs, proposal cropping and annotation rendering.

#pragma once

#include "cigdetect/error.hpp"
#include "cigdetect/geometry.hpp"
#include "cigdetect/types.hpp"

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace cigdetect {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/** Owned 8-bit RGB raster, row-major, no padding. */
class RgbImage {
public:
    explicit RgbImage(ImageExtent extent, Rgb fill = {})
        : extent_(extent)
        , data_(std::size_t(extent.width()) * std::size_t(extent.height()) * 3)
    {
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }

    RgbImage(ImageExtent extent, std::vector<std::uint8_t> data)
        : extent_(extent), data_(std::move(data))
    {
        if (data_.size() != std::size_t(extent.width()) * std::size_t(extent.height()) * 3) {
            throw ValidationError("pixel buffer size does not match extent");
        }
    }

    const ImageExtent& extent() const noexcept { return extent_; }
    int width() const noexcept { return extent_.width(); }
    int height() const noexcept { return extent_.height(); }

    Rgb at(int x, int y) const
    {
        const auto* p = &data_[offset(x, y)];
        return {p[0], p[1], p[2]};
    }

    void set(int x, int y, Rgb c)
    {
        auto* p = &data_[offset(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }

    std::span<const std::uint8_t> bytes() const noexcept { return data_; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    std::size_t offset(int x, int y) const
    {
        if (x < 0 || y < 0 || x >= width() || y >= height()) {
            throw std::out_of_range("pixel (" + std::to_string(x) + ", " + std::to_string(y)
                                    + ") outside image");
        }
        return (std::size_t(y) * std::size_t(width()) + std::size_t(x)) * 3;
    }

    ImageExtent extent_;
    std::vector<std::uint8_t> data_;
};

/** An input image: identifier plus an immutable, shared raster. */
class ImageRef {
public:
    ImageRef(std::string id, RgbImage raster)
        : id_(std::move(id)), raster_(std::make_shared<const RgbImage>(std::move(raster)))
    {
    }

    const std::string& id() const noexcept { return id_; }
    const ImageExtent& extent() const noexcept { return raster_->extent(); }
    const RgbImage& raster() const noexcept { return *raster_; }

private:
    std::string id_;
    std::shared_ptr<const RgbImage> raster_;
};

/** Pixels copied out of an image. `box` is integer-valued and lies inside
 *  the source extent. `origin` names the proposal the crop was taken for,
 *  empty for whole-image regions. */
struct PixelRegion {
    std::string source;
    CornerBox box;
    RgbImage pixels;
    std::optional<ProposalKey> origin;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DecodeError("cannot open image '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RgbImage decode_png(std::span<const std::uint8_t> bytes)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw DecodeError(std::string("png: ") + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    if (img.width == 0 || img.height == 0) {
        png_image_free(&img);
        throw DecodeError("png: empty image");
    }
    std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, data.data(), 0, nullptr)) {
        const std::string message = img.message;
        png_image_free(&img);
        throw DecodeError("png: " + message);
    }
    return RgbImage(ImageExtent(int(img.width), int(img.height)), std::move(data));
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    int warnings;
    char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_fail(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

extern "C" inline void jpeg_note(j_common_ptr cinfo, int level)
{
    // level -1 is a warning (e.g. premature end of data); treat as corruption.
    if (level < 0) {
        auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
        if (err->warnings++ == 0) {
            (*cinfo->err->format_message)(cinfo, err->message);
        }
    }
}

inline RgbImage decode_jpeg(std::span<const std::uint8_t> bytes)
{
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    std::vector<std::uint8_t> data;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_fail;
    err.base.emit_message = jpeg_note;
    err.warnings = 0;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError(std::string("jpeg: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t stride = std::size_t(cinfo.output_width) * 3;
    data.resize(stride * cinfo.output_height);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = data.data() + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    const int width = int(cinfo.output_width);
    const int height = int(cinfo.output_height);
    jpeg_destroy_decompress(&cinfo);
    if (err.warnings > 0) {
        throw DecodeError(std::string("jpeg: ") + err.message);
    }
    return RgbImage(ImageExtent(width, height), std::move(data));
}

} // namespace detail

/** Decodes PNG or JPEG bytes (format sniffed from the signature). */
inline RgbImage decode_bytes(std::span<const std::uint8_t> bytes)
{
    static constexpr std::array<std::uint8_t, 4> png_magic{0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::equal(png_magic.begin(), png_magic.end(), bytes.begin())) {
        return detail::decode_png(bytes);
    }
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
        return detail::decode_jpeg(bytes);
    }
    throw DecodeError("unrecognised image format");
}

/** Reads an image file. The image id is the file stem. */
inline ImageRef decode(const std::filesystem::path& path)
{
    const auto bytes = detail::read_file(path);
    try {
        return ImageRef(path.stem().string(), decode_bytes(bytes));
    } catch (const DecodeError& e) {
        throw DecodeError(path.string() + ": " + e.what());
    }
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& image)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = png_uint_32(image.width());
    img.height = png_uint_32(image.height());
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    const auto pixels = image.bytes();
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(std::string("png encode: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(std::string("png encode: ") + img.message);
    }
    out.resize(size);
    return out;
}

inline void write_png(const RgbImage& image, const std::filesystem::path& path)
{
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
}

/** Copies the pixels under `box` after clipping it to the image and
 *  rasterizing outward. Throws EmptyIntersection when nothing is left. */
inline PixelRegion crop(const ImageRef& image, const CornerBox& box,
                        std::optional<ProposalKey> origin = std::nullopt)
{
    const auto clipped = clip_to_extent(box, image.extent());
    const auto rect = rasterize(clipped);
    RgbImage pixels(ImageExtent(rect.width, rect.height));
    const auto& src = image.raster();
    for (int y = 0; y < rect.height; ++y) {
        for (int x = 0; x < rect.width; ++x) {
            pixels.set(x, y, src.at(rect.x + x, rect.y + y));
        }
    }
    return {image.id(), to_corner_box(rect), std::move(pixels), origin};
}

/** Whole-image region, as fed to a classifier that skips proposal extraction. */
inline PixelRegion full_region(const ImageRef& image)
{
    return crop(image, image.extent().bounds());
}

// Rendering -----------------------------------------------------------------

namespace palette {
inline constexpr Rgb face{0, 0, 255};
inline constexpr Rgb hand{0, 255, 0};
inline constexpr Rgb detection{255, 0, 0};
inline constexpr Rgb banner_smoker{192, 0, 0};
inline constexpr Rgb banner_nonsmoker{96, 96, 96};
inline constexpr Rgb banner_text{255, 255, 255};
} // namespace palette

inline constexpr int kStrokeWidth = 2;
inline constexpr int kBannerHeight = 14;

/** A proposal rectangle to overlay on the raw image. */
struct RegionOverlay {
    ProposalKind kind;
    CornerBox box;
};

/** Outlines `rect` with a stroke drawn inside it; parts outside the image
 *  are skipped. */
inline void draw_outline(RgbImage& image, const PixelRect& rect, Rgb color, int stroke = kStrokeWidth)
{
    const int x_end = std::min(rect.x + rect.width, image.width());
    const int y_end = std::min(rect.y + rect.height, image.height());
    for (int y = std::max(rect.y, 0); y < y_end; ++y) {
        for (int x = std::max(rect.x, 0); x < x_end; ++x) {
            const bool edge = x < rect.x + stroke || x >= rect.x + rect.width - stroke
                || y < rect.y + stroke || y >= rect.y + rect.height - stroke;
            if (edge) {
                image.set(x, y, color);
            }
        }
    }
}

namespace detail {

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
inline const std::array<std::uint8_t, 5>* glyph(char c)
{
    static constexpr std::array<std::uint8_t, 5> S{7, 4, 7, 1, 7};
    static constexpr std::array<std::uint8_t, 5> M{5, 7, 7, 5, 5};
    static constexpr std::array<std::uint8_t, 5> O{7, 5, 5, 5, 7};
    static constexpr std::array<std::uint8_t, 5> K{5, 5, 6, 5, 5};
    static constexpr std::array<std::uint8_t, 5> E{7, 4, 6, 4, 7};
    static constexpr std::array<std::uint8_t, 5> R{6, 5, 6, 5, 5};
    static constexpr std::array<std::uint8_t, 5> N{5, 7, 7, 7, 5};
    static constexpr std::array<std::uint8_t, 5> dash{0, 0, 7, 0, 0};
    switch (c) {
    case 'S': return &S;
    case 'M': return &M;
    case 'O': return &O;
    case 'K': return &K;
    case 'E': return &E;
    case 'R': return &R;
    case 'N': return &N;
    case '-': return &dash;
    default: return nullptr;
    }
}

inline void draw_text(RgbImage& image, int left, int top, std::string_view text, int scale, Rgb color)
{
    int pen = left;
    for (const char c : text) {
        if (const auto* g = glyph(c)) {
            for (int row = 0; row < 5; ++row) {
                for (int col = 0; col < 3; ++col) {
                    if (!((*g)[std::size_t(row)] & (4 >> col))) {
                        continue;
                    }
                    for (int dy = 0; dy < scale; ++dy) {
                        for (int dx = 0; dx < scale; ++dx) {
                            const int x = pen + col * scale + dx;
                            const int y = top + row * scale + dy;
                            if (x >= 0 && y >= 0 && x < image.width() && y < image.height()) {
                                image.set(x, y, color);
                            }
                        }
                    }
                }
            }
        }
        pen += 4 * scale;
    }
}

} // namespace detail

/** Fills the top rows with the verdict colour and caption. */
inline void draw_banner(RgbImage& image, ClassLabel verdict)
{
    const Rgb fill = verdict == ClassLabel::Smoker ? palette::banner_smoker : palette::banner_nonsmoker;
    const int rows = std::min(kBannerHeight, image.height());
    for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < image.width(); ++x) {
            image.set(x, y, fill);
        }
    }
    detail::draw_text(image, 2, 2, verdict == ClassLabel::Smoker ? "SMOKER" : "NON-SMOKER", 2,
                      palette::banner_text);
}

/** Returns a copy of `image` with the verdict banner, proposal outlines
 *  (face blue, hand green) and detection outlines (red). Boxes are in image
 *  coordinates. */
inline ImageRef render_annotations(const ImageRef& image, std::span<const RegionOverlay> proposals,
                                   std::span<const CornerBox> detections, ClassLabel verdict)
{
    RgbImage out = image.raster();
    draw_banner(out, verdict);
    for (const auto& p : proposals) {
        draw_outline(out, rasterize(p.box), p.kind == ProposalKind::Face ? palette::face : palette::hand);
    }
    for (const auto& d : detections) {
        draw_outline(out, rasterize(d), palette::detection);
    }
    return ImageRef(image.id(), std::move(out));
}

} // namespace cigdetect
