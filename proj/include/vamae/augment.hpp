#pragma once

#include <random>

#include "vamae/image.hpp"

namespace vamae {

struct AugmentParams {
    double flip_probability = 0.5;
    double max_rotation_deg = 15.0;
    double elastic_probability = 0.5;
    double elastic_sigma = 4.0;
    double elastic_magnitude = 3.0;

    void validate() const;
};

/// One sampled spatial transform.
struct AugmentDraw {
    bool flip_horizontal = false;
    bool flip_vertical = false;
    double rotation_deg = 0.0;
    /// Per-pixel displacement (dy, dx); empty means none.
    std::vector<double> displacement_y;
    std::vector<double> displacement_x;

    bool is_identity() const;
    static AugmentDraw identity() { return {}; }
};

AugmentDraw sample_augment(const AugmentParams& params, int height, int width, std::mt19937_64& rng);

struct AugmentedPair {
    GrayImage image;
    BinaryImage mask;
};

/// Same transform on both; the mask is bilinearly resampled and re-thresholded at 0.5.
AugmentedPair apply_augment(const GrayImage& image, const BinaryImage& mask, const AugmentDraw& draw);
AugmentedPair augment(const GrayImage& image, const BinaryImage& mask, const AugmentParams& params,
                      std::mt19937_64& rng);

}  // namespace vamae
