#pragma once

#include <stdexcept>
#include <vector>

#include "vamae/image.hpp"

namespace vamae {

class DegenerateImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FrangiParams {
    std::vector<double> scales{0.5, 1.0, 1.5, 2.0, 2.5};
    double beta = 0.5;
    /// Structureness sensitivity. Values <= 0 select the image-adaptive
    /// default: half the maximum Hessian Frobenius norm at each scale.
    double c = 0.0;
    bool bright_vessels = true;

    void validate() const;
};

/// Second-order Gaussian derivatives, scale-normalized by sigma^2.
/// Values are unbounded reals; the GrayImage container is used for layout only.
struct HessianField {
    GrayImage xx;
    GrayImage xy;
    GrayImage yy;
};

struct StructureTriplet {
    GrayImage intensity;
    GrayImage vesselness;
    BinaryImage vessel_mask;
    BinaryImage skeleton;

    /// Throws DimensionError / std::logic_error when the triplet invariants fail.
    void validate() const;
};

/// 1-D sampled Gaussian kernels with moment corrections: the smoothing kernel
/// sums to 1, the first-derivative kernel is exact on linear signals, and the
/// second-derivative kernel annihilates constants and linear terms and is exact
/// on quadratics.
struct GaussianKernels {
    int radius = 0;
    std::vector<double> smooth;
    std::vector<double> d1;
    std::vector<double> d2;
};
GaussianKernels gaussian_kernels(double sigma);

/// Mirror index into [0, n) with the edge sample repeated (… c b a | a b c …).
int reflect_index(int i, int n);

GrayImage convolve_separable(const GrayImage& img, const std::vector<double>& kernel_x,
                             const std::vector<double>& kernel_y);
GrayImage gaussian_blur(const GrayImage& img, double sigma);

HessianField hessian_at_scale(const GrayImage& img, double sigma);

/// Frangi response from a precomputed Hessian. `c` <= 0 selects the adaptive default.
GrayImage frangi_from_hessian(const HessianField& h, double beta, double c, bool bright_vessels);
GrayImage frangi_single_scale(const GrayImage& img, double sigma, const FrangiParams& params);
GrayImage frangi_multiscale(const GrayImage& img, const FrangiParams& params);

/// Raw Otsu threshold on a 256-bin histogram (bin = round(255 v)). Returned
/// value t puts every pixel with v >= t in the upper class.
double otsu_threshold(const GrayImage& img);
int otsu_bin(const GrayImage& img);

inline constexpr double kOtsuScale = 0.7;
BinaryImage binarize_vessels(const GrayImage& vesselness);

/// Zhang-Suen thinning with connectivity-safe deletion and removal of any
/// remaining 2x2 foreground blocks.
BinaryImage skeletonize(const BinaryImage& mask);

int count_components8(const BinaryImage& mask);
bool has_full_2x2_block(const BinaryImage& mask);

StructureTriplet extract_structure(const GrayImage& intensity, const FrangiParams& params = {});

}  // namespace vamae
