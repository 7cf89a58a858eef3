#include "vamae/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace vamae {

namespace {

void check_dims(int height, int width) {
    if (height <= 0 || width <= 0) {
        throw DimensionError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Png8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;
};

Png8 read_png8(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    Png8 out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(out.width)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported PNG layout: " + path.string());
    }
    out.data.resize(static_cast<std::size_t>(out.height) * out.width);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + static_cast<std::size_t>(y) * out.width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png8(const std::filesystem::path& path, int height, int width, std::vector<std::uint8_t> data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * width;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage::GrayImage(int height, int width, double fill)
    : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width, fill);
}

GrayImage::GrayImage(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != static_cast<std::size_t>(height) * width) {
        throw DimensionError("pixel buffer size does not match " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
}

BinaryImage::BinaryImage(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

BinaryImage::BinaryImage(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != static_cast<std::size_t>(height) * width) {
        throw DimensionError("mask buffer size does not match " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
    for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t BinaryImage::count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

GrayImage BinaryImage::to_gray() const {
    std::vector<double> d(data_.begin(), data_.end());
    return GrayImage(height_, width_, std::move(d));
}

PatchGrid PatchGrid::for_image(int height, int width, int patch_size) {
    if (patch_size <= 0) throw DimensionError("patch size must be positive");
    check_dims(height, width);
    if (height % patch_size != 0 || width % patch_size != 0) {
        throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not divisible by patch size " + std::to_string(patch_size));
    }
    return PatchGrid{patch_size, height / patch_size, width / patch_size};
}

namespace {

void require_grid_matches(const GrayImage& img, const PatchGrid& grid) {
    if (grid.patch_size <= 0 || img.height() != grid.height() || img.width() != grid.width()) {
        throw DimensionError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                             " does not tile into " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                             " patches of size " + std::to_string(grid.patch_size));
    }
}

}  // namespace

Patches patchify(const GrayImage& img, const PatchGrid& grid) {
    require_grid_matches(img, grid);
    const int p = grid.patch_size;
    Patches out(grid.patch_count(), std::vector<double>(grid.patch_area()));
    for (int i = 0; i < grid.patch_count(); ++i) {
        const int y0 = (i / grid.cols) * p;
        const int x0 = (i % grid.cols) * p;
        auto& patch = out[i];
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) patch[dy * p + dx] = img(y0 + dy, x0 + dx);
    }
    return out;
}

std::vector<double> patchify_flat(const GrayImage& img, const PatchGrid& grid) {
    require_grid_matches(img, grid);
    const int p = grid.patch_size;
    const int area = grid.patch_area();
    std::vector<double> out(static_cast<std::size_t>(grid.patch_count()) * area);
    for (int i = 0; i < grid.patch_count(); ++i) {
        const int y0 = (i / grid.cols) * p;
        const int x0 = (i % grid.cols) * p;
        double* row = out.data() + static_cast<std::size_t>(i) * area;
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) row[dy * p + dx] = img(y0 + dy, x0 + dx);
    }
    return out;
}

GrayImage unpatchify(const Patches& patches, const PatchGrid& grid) {
    if (grid.patch_size <= 0 || grid.rows <= 0 || grid.cols <= 0) throw DimensionError("empty patch grid");
    if (patches.size() != static_cast<std::size_t>(grid.patch_count())) {
        throw DimensionError("expected " + std::to_string(grid.patch_count()) + " patches, got " +
                             std::to_string(patches.size()));
    }
    const int p = grid.patch_size;
    GrayImage img(grid.height(), grid.width());
    for (int i = 0; i < grid.patch_count(); ++i) {
        const auto& patch = patches[i];
        if (patch.size() != static_cast<std::size_t>(grid.patch_area())) {
            throw DimensionError("patch " + std::to_string(i) + " has length " + std::to_string(patch.size()) +
                                 ", expected " + std::to_string(grid.patch_area()));
        }
        const int y0 = (i / grid.cols) * p;
        const int x0 = (i % grid.cols) * p;
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) img(y0 + dy, x0 + dx) = patch[dy * p + dx];
    }
    return img;
}

GrayImage read_png(const std::filesystem::path& path) {
    Png8 png = read_png8(path);
    std::vector<double> d(png.data.size());
    std::transform(png.data.begin(), png.data.end(), d.begin(), [](std::uint8_t v) { return v / 255.0; });
    return GrayImage(png.height, png.width, std::move(d));
}

BinaryImage read_binary_png(const std::filesystem::path& path) {
    Png8 png = read_png8(path);
    std::vector<std::uint8_t> d(png.data.size());
    std::transform(png.data.begin(), png.data.end(), d.begin(), [](std::uint8_t v) { return v >= 128 ? 1 : 0; });
    return BinaryImage(png.height, png.width, std::move(d));
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    std::vector<std::uint8_t> d(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0));
    }
    write_png8(path, img.height(), img.width(), std::move(d));
}

void write_png(const std::filesystem::path& path, const BinaryImage& img) {
    std::vector<std::uint8_t> d(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = px[i] ? 255 : 0;
    write_png8(path, img.height(), img.width(), std::move(d));
}

BinaryImage threshold(const GrayImage& img, double t) {
    std::vector<std::uint8_t> d(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = px[i] >= t ? 1 : 0;
    return BinaryImage(img.height(), img.width(), std::move(d));
}

}  // namespace vamae
