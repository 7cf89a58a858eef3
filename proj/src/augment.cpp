#include "vamae/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vamae/priors.hpp"

namespace vamae {

void AugmentParams::validate() const {
    if (flip_probability < 0.0 || flip_probability > 1.0 || elastic_probability < 0.0 || elastic_probability > 1.0)
        throw std::invalid_argument("augment probabilities must lie in [0,1]");
    if (max_rotation_deg < 0.0 || max_rotation_deg > 180.0)
        throw std::invalid_argument("augment max_rotation_deg must lie in [0,180]");
    if (elastic_sigma <= 0.0 || elastic_magnitude < 0.0) throw std::invalid_argument("augment elastic params invalid");
}

bool AugmentDraw::is_identity() const {
    return !flip_horizontal && !flip_vertical && rotation_deg == 0.0 && displacement_y.empty();
}

AugmentDraw sample_augment(const AugmentParams& p, int height, int width, std::mt19937_64& rng) {
    p.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AugmentDraw d;
    d.flip_horizontal = unit(rng) < p.flip_probability;
    d.flip_vertical = unit(rng) < p.flip_probability;
    d.rotation_deg = (2.0 * unit(rng) - 1.0) * p.max_rotation_deg;
    if (unit(rng) < p.elastic_probability && p.elastic_magnitude > 0.0) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        GrayImage fy(height, width), fx(height, width);
        for (auto& v : fy.pixels()) v = u(rng);
        for (auto& v : fx.pixels()) v = u(rng);
        fy = gaussian_blur(fy, p.elastic_sigma);
        fx = gaussian_blur(fx, p.elastic_sigma);
        // Scale so the largest displacement equals the magnitude.
        double peak = 0.0;
        for (std::size_t i = 0; i < fy.size(); ++i) peak = std::max(peak, std::hypot(fy.pixels()[i], fx.pixels()[i]));
        const double s = peak > 0.0 ? p.elastic_magnitude / peak : 0.0;
        d.displacement_y.resize(fy.size());
        d.displacement_x.resize(fx.size());
        for (std::size_t i = 0; i < fy.size(); ++i) {
            d.displacement_y[i] = fy.pixels()[i] * s;
            d.displacement_x[i] = fx.pixels()[i] * s;
        }
    }
    return d;
}

namespace {

double sample_bilinear(const GrayImage& img, double y, double x) {
    const int h = img.height(), w = img.width();
    y = std::clamp(y, 0.0, h - 1.0);
    x = std::clamp(x, 0.0, w - 1.0);
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = y - y0, fx = x - x0;
    return (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x1)) + fy * ((1 - fx) * img(y1, x0) + fx * img(y1, x1));
}

}  // namespace

AugmentedPair apply_augment(const GrayImage& image, const BinaryImage& mask, const AugmentDraw& d) {
    if (image.height() != mask.height() || image.width() != mask.width())
        throw DimensionError("augment: image and mask differ in size");
    if (d.is_identity()) return {image, mask};
    const int h = image.height(), w = image.width();
    const bool warp = d.rotation_deg != 0.0 || !d.displacement_y.empty();
    if (!d.displacement_y.empty() && d.displacement_y.size() != image.size())
        throw DimensionError("augment: displacement field does not match the image");

    auto flip_index = [&](int y, int x) {
        return std::pair{d.flip_vertical ? h - 1 - y : y, d.flip_horizontal ? w - 1 - x : x};
    };
    if (!warp) {
        GrayImage oi(h, w);
        BinaryImage om(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto [sy, sx] = flip_index(y, x);
                oi(y, x) = image(sy, sx);
                om(y, x) = mask(sy, sx);
            }
        return {std::move(oi), std::move(om)};
    }

    const GrayImage mask_f = mask.to_gray();
    const double a = d.rotation_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
    GrayImage oi(h, w);
    BinaryImage om(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double py = y, px = x;
            if (!d.displacement_y.empty()) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                py += d.displacement_y[i];
                px += d.displacement_x[i];
            }
            // inverse rotation about the centre
            const double ry = cy + ca * (py - cy) - sa * (px - cx);
            const double rx = cx + sa * (py - cy) + ca * (px - cx);
            double sy = d.flip_vertical ? h - 1 - ry : ry;
            double sx = d.flip_horizontal ? w - 1 - rx : rx;
            oi(y, x) = std::clamp(sample_bilinear(image, sy, sx), 0.0, 1.0);
            om(y, x) = sample_bilinear(mask_f, sy, sx) >= 0.5 ? 1 : 0;
        }
    return {std::move(oi), std::move(om)};
}

AugmentedPair augment(const GrayImage& image, const BinaryImage& mask, const AugmentParams& params,
                      std::mt19937_64& rng) {
    return apply_augment(image, mask, sample_augment(params, image.height(), image.width(), rng));
}

}  // namespace vamae
