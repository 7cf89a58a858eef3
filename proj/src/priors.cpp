#include "vamae/priors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace vamae {

void FrangiParams::validate() const {
    if (scales.empty()) throw std::invalid_argument("frangi: scale list is empty");
    for (double s : scales)
        if (!(s > 0.0)) throw std::invalid_argument("frangi: scales must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("frangi: beta must be positive");
}

void StructureTriplet::validate() const {
    const int h = intensity.height();
    const int w = intensity.width();
    if (vesselness.height() != h || vesselness.width() != w || vessel_mask.height() != h ||
        vessel_mask.width() != w || skeleton.height() != h || skeleton.width() != w) {
        throw DimensionError("structure triplet fields differ in size");
    }
    auto s = skeleton.pixels();
    auto m = vessel_mask.pixels();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] && !m[i]) throw std::logic_error("skeleton pixel outside vessel mask");
    for (double v : vesselness.pixels())
        if (v < 0.0 || v > 1.0) throw std::logic_error("vesselness outside [0,1]");
}

GaussianKernels gaussian_kernels(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be positive");
    GaussianKernels k;
    k.radius = std::max(2, static_cast<int>(std::ceil(4.0 * sigma)));
    const int n = 2 * k.radius + 1;
    k.smooth.resize(n);
    k.d1.resize(n);
    k.d2.resize(n);
    const double s2 = sigma * sigma;
    for (int i = 0; i < n; ++i) {
        const double x = i - k.radius;
        const double g = std::exp(-x * x / (2.0 * s2));
        k.smooth[i] = g;
        k.d1[i] = -x / s2 * g;
        k.d2[i] = (x * x / (s2 * s2) - 1.0 / s2) * g;
    }
    const double gsum = std::accumulate(k.smooth.begin(), k.smooth.end(), 0.0);
    for (auto& v : k.smooth) v /= gsum;

    double m1 = 0.0;
    for (int i = 0; i < n; ++i) m1 += (i - k.radius) * k.d1[i];
    for (auto& v : k.d1) v *= -1.0 / m1;

    const double mean2 = std::accumulate(k.d2.begin(), k.d2.end(), 0.0) / n;
    for (auto& v : k.d2) v -= mean2;
    double m2 = 0.0;
    for (int i = 0; i < n; ++i) m2 += static_cast<double>((i - k.radius) * (i - k.radius)) * k.d2[i];
    for (auto& v : k.d2) v *= 2.0 / m2;
    return k;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

GrayImage convolve_separable(const GrayImage& img, const std::vector<double>& kernel_x,
                             const std::vector<double>& kernel_y) {
    const int h = img.height();
    const int w = img.width();
    const int rx = static_cast<int>(kernel_x.size()) / 2;
    const int ry = static_cast<int>(kernel_y.size()) / 2;

    GrayImage tmp(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int j = -rx; j <= rx; ++j) acc += img(y, reflect_index(x - j, w)) * kernel_x[j + rx];
            tmp(y, x) = acc;
        }
    }
    GrayImage out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int j = -ry; j <= ry; ++j) acc += tmp(reflect_index(y - j, h), x) * kernel_y[j + ry];
            out(y, x) = acc;
        }
    }
    return out;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const auto k = gaussian_kernels(sigma);
    return convolve_separable(img, k.smooth, k.smooth);
}

HessianField hessian_at_scale(const GrayImage& img, double sigma) {
    const auto k = gaussian_kernels(sigma);
    HessianField h{convolve_separable(img, k.d2, k.smooth), convolve_separable(img, k.d1, k.d1),
                   convolve_separable(img, k.smooth, k.d2)};
    const double norm = sigma * sigma;
    for (auto* f : {&h.xx, &h.xy, &h.yy})
        for (auto& v : f->pixels()) v *= norm;
    return h;
}

GrayImage frangi_from_hessian(const HessianField& h, double beta, double c, bool bright_vessels) {
    const int rows = h.xx.height();
    const int cols = h.xx.width();
    const std::size_t n = h.xx.size();
    std::vector<double> l1(n), l2(n);
    double max_s = 0.0;
    auto xx = h.xx.pixels();
    auto xy = h.xy.pixels();
    auto yy = h.yy.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const double half_trace = 0.5 * (xx[i] + yy[i]);
        const double half_diff = 0.5 * (xx[i] - yy[i]);
        const double root = std::sqrt(half_diff * half_diff + xy[i] * xy[i]);
        double a = half_trace + root;
        double b = half_trace - root;
        if (std::abs(a) > std::abs(b)) std::swap(a, b);
        l1[i] = a;
        l2[i] = b;
        max_s = std::max(max_s, std::sqrt(a * a + b * b));
    }
    if (c <= 0.0) c = 0.5 * max_s;

    GrayImage out(rows, cols, 0.0);
    if (c <= 0.0) return out;
    auto px = out.pixels();
    const double two_b2 = 2.0 * beta * beta;
    const double two_c2 = 2.0 * c * c;
    for (std::size_t i = 0; i < n; ++i) {
        const double lam2 = l2[i];
        if (lam2 == 0.0) continue;
        if (bright_vessels ? lam2 > 0.0 : lam2 < 0.0) continue;
        const double rb = l1[i] / lam2;
        const double s2 = l1[i] * l1[i] + lam2 * lam2;
        px[i] = std::exp(-rb * rb / two_b2) * (1.0 - std::exp(-s2 / two_c2));
    }
    return out;
}

GrayImage frangi_single_scale(const GrayImage& img, double sigma, const FrangiParams& params) {
    params.validate();
    return frangi_from_hessian(hessian_at_scale(img, sigma), params.beta, params.c, params.bright_vessels);
}

GrayImage frangi_multiscale(const GrayImage& img, const FrangiParams& params) {
    params.validate();
    GrayImage best(img.height(), img.width(), 0.0);
    for (double sigma : params.scales) {
        const GrayImage r = frangi_single_scale(img, sigma, params);
        auto b = best.pixels();
        auto v = r.pixels();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::max(b[i], v[i]);
    }
    auto px = best.pixels();
    const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi <= 0.0 || hi - lo <= 0.0) {
        std::fill(px.begin(), px.end(), 0.0);
        return best;
    }
    for (auto& v : px) v = (v - lo) / (hi - lo);
    return best;
}

namespace {

int to_bin(double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

int otsu_bin(const GrayImage& img) {
    std::array<long long, 256> hist{};
    for (double v : img.pixels()) ++hist[to_bin(v)];

    long long total = 0;
    long long total_sum = 0;
    for (int b = 0; b < 256; ++b) {
        total += hist[b];
        total_sum += hist[b] * b;
    }

    long long n0 = 0;
    long long s0 = 0;
    double best = 0.0;
    int best_bin = -1;
    for (int k = 0; k < 255; ++k) {
        n0 += hist[k];
        s0 += hist[k] * k;
        const long long n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(s0) / n0;
        const double mu1 = static_cast<double>(total_sum - s0) / n1;
        const double w0 = static_cast<double>(n0) / total;
        const double w1 = static_cast<double>(n1) / total;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_bin = k;
        }
    }
    if (best_bin < 0) throw DegenerateImageError("otsu: image has a single intensity level");
    return best_bin;
}

double otsu_threshold(const GrayImage& img) { return (otsu_bin(img) + 0.5) / 255.0; }

BinaryImage binarize_vessels(const GrayImage& vesselness) {
    return threshold(vesselness, kOtsuScale * otsu_threshold(vesselness));
}

namespace {

// Ring order P2..P9: N, NE, E, SE, S, SW, W, NW.
constexpr std::array<int, 8> kRingDy{-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kRingDx{0, 1, 1, 1, 0, -1, -1, -1};

std::array<std::uint8_t, 8> ring(const BinaryImage& m, int y, int x) {
    std::array<std::uint8_t, 8> p{};
    for (int i = 0; i < 8; ++i) p[i] = m.at_or_zero(y + kRingDy[i], x + kRingDx[i]);
    return p;
}

bool zhang_suen_deletable(const std::array<std::uint8_t, 8>& p, int pass) {
    const int b = std::accumulate(p.begin(), p.end(), 0);
    if (b < 2 || b > 6) return false;
    int a = 0;
    for (int i = 0; i < 8; ++i)
        if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
    if (a != 1) return false;
    // p[0]=P2 p[2]=P4 p[4]=P6 p[6]=P8
    if (pass == 0) return !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6]);
    return !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6]);
}

bool thinning_pass(BinaryImage& m, int pass) {
    std::vector<std::pair<int, int>> candidates;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(y, x) && zhang_suen_deletable(ring(m, y, x), pass)) candidates.emplace_back(y, x);

    // Re-checking against the live image keeps parallel deletions from
    // disconnecting a component (the classic 2x2-square loss).
    bool changed = false;
    for (auto [y, x] : candidates) {
        if (zhang_suen_deletable(ring(m, y, x), pass)) {
            m(y, x) = 0;
            changed = true;
        }
    }
    return changed;
}

// Foreground of the 8-ring forms one 8-connected group and the pixel touches
// the background through a 4-neighbour.
bool is_simple(const std::array<std::uint8_t, 8>& p) {
    if (p[0] && p[2] && p[4] && p[6]) return false;
    int runs = 0;
    int fg = 0;
    for (int i = 0; i < 8; ++i) fg += p[i];
    if (fg == 0) return false;
    // Groups in the ring under 8-adjacency: consecutive ring cells are
    // 4-adjacent, and two edge cells separated by an empty corner are
    // 8-adjacent as well, so an empty corner never splits a group.
    std::array<std::uint8_t, 8> q = p;
    for (int i = 1; i < 8; i += 2)
        if (!q[i] && p[(i + 7) % 8] && p[(i + 1) % 8]) q[i] = 1;
    for (int i = 0; i < 8; ++i)
        if (q[i] == 0 && q[(i + 1) % 8] == 1) ++runs;
    if (runs == 0) return true;  // full ring after bridging
    return runs == 1;
}

bool clear_blocks(BinaryImage& m) {
    bool changed = false;
    for (int y = 0; y + 1 < m.height(); ++y) {
        for (int x = 0; x + 1 < m.width(); ++x) {
            if (!(m(y, x) && m(y, x + 1) && m(y + 1, x) && m(y + 1, x + 1))) continue;
            const std::array<std::pair<int, int>, 4> cells{{{y, x}, {y, x + 1}, {y + 1, x}, {y + 1, x + 1}}};
            for (auto [cy, cx] : cells) {
                if (is_simple(ring(m, cy, cx))) {
                    m(cy, cx) = 0;
                    changed = true;
                    break;
                }
            }
        }
    }
    return changed;
}

}  // namespace

BinaryImage skeletonize(const BinaryImage& mask) {
    BinaryImage m = mask;
    bool changed = true;
    while (changed) {
        changed = false;
        bool thinning = true;
        while (thinning) {
            thinning = thinning_pass(m, 0);
            thinning = thinning_pass(m, 1) || thinning;
            changed = changed || thinning;
        }
        changed = clear_blocks(m) || changed;
    }
    return m;
}

int count_components8(const BinaryImage& mask) {
    const int h = mask.height();
    const int w = mask.width();
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::pair<int, int>> stack;
    int components = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(y, x) || seen[static_cast<std::size_t>(y) * w + x]) continue;
            ++components;
            stack.emplace_back(y, x);
            seen[static_cast<std::size_t>(y) * w + x] = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = cy + dy;
                        const int nx = cx + dx;
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w || !mask(ny, nx)) continue;
                        auto& s = seen[static_cast<std::size_t>(ny) * w + nx];
                        if (s) continue;
                        s = 1;
                        stack.emplace_back(ny, nx);
                    }
                }
            }
        }
    }
    return components;
}

bool has_full_2x2_block(const BinaryImage& m) {
    for (int y = 0; y + 1 < m.height(); ++y)
        for (int x = 0; x + 1 < m.width(); ++x)
            if (m(y, x) && m(y, x + 1) && m(y + 1, x) && m(y + 1, x + 1)) return true;
    return false;
}

StructureTriplet extract_structure(const GrayImage& intensity, const FrangiParams& params) {
    StructureTriplet t;
    t.intensity = intensity;
    t.vesselness = frangi_multiscale(intensity, params);
    t.vessel_mask = binarize_vessels(t.vesselness);
    t.skeleton = skeletonize(t.vessel_mask);
    return t;
}

}  // namespace vamae
