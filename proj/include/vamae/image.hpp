#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vamae {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Real-valued single-channel image, row-major, values in [0,1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int height, int width, double fill = 0.0);
    GrayImage(int height, int width, std::vector<double> data);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double operator()(int y, int x) const { return data_[index(y, x)]; }
    double& operator()(int y, int x) { return data_[index(y, x)]; }

    std::span<const double> pixels() const { return data_; }
    std::span<double> pixels() { return data_; }

    bool same_shape(const GrayImage& o) const { return height_ == o.height_ && width_ == o.width_; }
    bool operator==(const GrayImage& o) const = default;

private:
    std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Binary mask with values exactly 0 or 1.
class BinaryImage {
public:
    BinaryImage() = default;
    BinaryImage(int height, int width, std::uint8_t fill = 0);
    BinaryImage(int height, int width, std::vector<std::uint8_t> data);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    std::uint8_t operator()(int y, int x) const { return data_[index(y, x)]; }
    std::uint8_t& operator()(int y, int x) { return data_[index(y, x)]; }

    /// Out-of-bounds reads return 0.
    std::uint8_t at_or_zero(int y, int x) const {
        if (y < 0 || x < 0 || y >= height_ || x >= width_) return 0;
        return data_[index(y, x)];
    }

    std::span<const std::uint8_t> pixels() const { return data_; }
    std::span<std::uint8_t> pixels() { return data_; }

    std::size_t count() const;
    GrayImage to_gray() const;

    bool same_shape(const BinaryImage& o) const { return height_ == o.height_ && width_ == o.width_; }
    bool operator==(const BinaryImage& o) const = default;

private:
    std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Square, non-overlapping tiling of an image. Patch i sits at grid cell
/// (i / cols, i % cols), top-left origin.
struct PatchGrid {
    int patch_size = 16;
    int rows = 0;
    int cols = 0;

    static PatchGrid for_image(int height, int width, int patch_size);

    int patch_count() const { return rows * cols; }
    int patch_area() const { return patch_size * patch_size; }
    int height() const { return rows * patch_size; }
    int width() const { return cols * patch_size; }
};

using Patches = std::vector<std::vector<double>>;

Patches patchify(const GrayImage& img, const PatchGrid& grid);
GrayImage unpatchify(const Patches& patches, const PatchGrid& grid);

/// Flat [N * P^2] patch matrix, row i = patch i.
std::vector<double> patchify_flat(const GrayImage& img, const PatchGrid& grid);

GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const BinaryImage& img);
BinaryImage read_binary_png(const std::filesystem::path& path);

BinaryImage threshold(const GrayImage& img, double t);

}  // namespace vamae
