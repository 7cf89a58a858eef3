#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vamae/priors.hpp"

using namespace vamae;

namespace {

GrayImage random_image(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrayImage img(h, w);
    for (auto& v : img.pixels()) v = u(rng);
    return img;
}

GrayImage horizontal_bar(int size, int row, double half_width) {
    GrayImage img(size, size, 0.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) img(y, x) = std::exp(-0.5 * (y - row) * (y - row) / (half_width * half_width));
    return img;
}

double max_abs(const GrayImage& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b[i]));
    return m;
}

BinaryImage random_blobs(int size, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pos(0, size - 1), rad(1, 4), count(1, 6);
    BinaryImage m(size, size);
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
        const int cy = pos(rng), cx = pos(rng), r = rad(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m(y, x) = 1;
    }
    return m;
}

}  // namespace

TEST_CASE("kernel moments") {
    for (double s : {0.5, 1.0, 2.5}) {
        auto k = gaussian_kernels(s);
        double g = 0, m1 = 0, d20 = 0, m2 = 0;
        for (int i = 0; i < static_cast<int>(k.smooth.size()); ++i) {
            const int x = i - k.radius;
            g += k.smooth[i];
            m1 += x * k.d1[i];
            d20 += k.d2[i];
            m2 += x * x * k.d2[i];
        }
        CHECK(g == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(m1 == doctest::Approx(-1.0).epsilon(1e-14));
        CHECK(std::abs(d20) < 1e-14);
        CHECK(m2 == doctest::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("reflect index") {
    CHECK(reflect_index(-1, 5) == 0);
    CHECK(reflect_index(-2, 5) == 1);
    CHECK(reflect_index(5, 5) == 4);
    CHECK(reflect_index(6, 5) == 3);
    CHECK(reflect_index(3, 5) == 3);
    CHECK(reflect_index(-7, 3) == oracle::mirror(-7, 3));
    CHECK(reflect_index(9, 1) == 0);
}

TEST_CASE("hessian of constant and linear images") {
    GrayImage c(16, 16, 0.4);
    for (double s : {0.5, 1.0, 2.0}) {
        auto h = hessian_at_scale(c, s);
        for (auto* f : {&h.xx, &h.xy, &h.yy})
            for (double v : f->pixels()) CHECK(std::abs(v) < 1e-12);
    }
    GrayImage ramp(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) ramp(y, x) = (0.3 * x + 0.2 * y) / 12.0;
    auto h = hessian_at_scale(ramp, 1.0);
    for (int y = 6; y < 18; ++y)
        for (int x = 6; x < 18; ++x) {
            CHECK(std::abs(h.xx(y, x)) < 1e-12);
            CHECK(std::abs(h.xy(y, x)) < 1e-12);
            CHECK(std::abs(h.yy(y, x)) < 1e-12);
        }
}

TEST_CASE("hessian of a ridge against the continuous closed form") {
    // f(x) = exp(-x^2 / 2a^2) blurred by sigma has second derivative at 0 of
    // -a / (a^2 + sigma^2)^{3/2}; scale-normalized by sigma^2.
    const double a = 2.0, sigma = 1.5;
    GrayImage img(48, 48);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) img(y, x) = std::exp(-0.5 * (x - 24) * (x - 24) / (a * a));
    auto h = hessian_at_scale(img, sigma);
    const double expected = -sigma * sigma * a / std::pow(a * a + sigma * sigma, 1.5);
    CHECK(h.xx(24, 24) < 0.0);
    CHECK(h.xx(24, 24) == doctest::Approx(expected).epsilon(0.03));
    CHECK(std::abs(h.yy(24, 24)) < 1e-12);
    CHECK(std::abs(h.xy(24, 24)) < 1e-12);
}

TEST_CASE("frangi single scale matches the dense eigen oracle") {
    std::mt19937_64 rng(11);
    FrangiParams p;
    for (int i = 0; i < 10; ++i) {
        auto img = random_image(16, 16, rng);
        for (double s : {0.5, 1.0, 2.5}) CHECK(max_abs(frangi_single_scale(img, s, p), oracle::frangi(img, s, 0.5, 0.0)) <= 1e-6);
    }
    auto bar = horizontal_bar(16, 8, 1.0);
    CHECK(max_abs(frangi_single_scale(bar, 1.0, p), oracle::frangi(bar, 1.0, 0.5, 0.0)) <= 1e-6);
    FrangiParams fixed_c = p;
    fixed_c.c = 0.3;
    CHECK(max_abs(frangi_single_scale(bar, 1.0, fixed_c), oracle::frangi(bar, 1.0, 0.5, 0.3)) <= 1e-6);
}

TEST_CASE("frangi bar response peaks on the centerline") {
    auto bar = horizontal_bar(32, 16, 1.0);
    auto v = frangi_single_scale(bar, 1.0, FrangiParams{});
    for (int x = 4; x < 28; ++x) {
        CHECK(v(16, x) > 0.3);
        CHECK(v(16, x) >= v(15, x));
        CHECK(v(16, x) >= v(17, x));
        CHECK(v(2, x) < 1e-3);
        CHECK(v(30, x) < 1e-3);
    }
    for (double px : v.pixels()) {
        CHECK(px >= 0.0);
        CHECK(px < 1.0);
    }
}

TEST_CASE("blob response is suppressed relative to a ridge") {
    GrayImage blob(32, 32), ridge(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            blob(y, x) = std::exp(-0.5 * ((y - 16) * (y - 16) + (x - 16) * (x - 16)) / 4.0);
            ridge(y, x) = std::exp(-0.5 * (y - 16) * (y - 16) / 4.0);
        }
    FrangiParams p;
    p.c = 0.2;
    const double vb = frangi_single_scale(blob, 2.0, p)(16, 16);
    const double vr = frangi_single_scale(ridge, 2.0, p)(16, 16);
    CHECK(vr > 0.0);
    CHECK(vb / vr < 0.5);
}

TEST_CASE("frangi multiscale") {
    GrayImage c(16, 16, 0.7);
    for (double v : frangi_multiscale(c, FrangiParams{}).pixels()) CHECK(v == 0.0);

    std::mt19937_64 rng(3);
    auto img = random_image(16, 16, rng);
    FrangiParams single;
    single.scales = {1.0};
    auto ms = frangi_multiscale(img, single);
    auto ss = frangi_single_scale(img, 1.0, single);
    double lo = 1e9, hi = -1e9;
    for (double v : ss.pixels()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (std::size_t i = 0; i < ss.size(); ++i) CHECK(ms.pixels()[i] == doctest::Approx((ss.pixels()[i] - lo) / (hi - lo)));

    auto v = frangi_multiscale(img, FrangiParams{});
    for (double x : v.pixels()) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("thin and thick tubes both respond after normalization") {
    GrayImage img(48, 48, 0.0);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            const double thin = std::exp(-0.5 * (y - 12) * (y - 12) / (0.5 * 0.5));
            const double thick = std::exp(-0.5 * (y - 34) * (y - 34) / (2.5 * 2.5));
            img(y, x) = std::max(thin, thick);
        }
    auto v = frangi_multiscale(img, FrangiParams{});
    for (int x = 8; x < 40; ++x) {
        CHECK(v(12, x) > 0.8);
        CHECK(v(34, x) > 0.8);
    }
}

TEST_CASE("otsu matches the exhaustive search") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        auto img = random_image(16, 16, rng);
        CHECK(otsu_bin(img) == oracle::otsu_bin(img));
    }
    GrayImage two(4, 4, 0.0);
    for (int i = 0; i < 8; ++i) two.pixels()[i] = 1.0;
    CHECK(otsu_bin(two) == oracle::otsu_bin(two));
    CHECK(otsu_bin(two) == 0);
    const double t = otsu_threshold(two);
    CHECK(t >= 0.0);
    CHECK(t < 1.0);

    std::normal_distribution<double> n(0.0, 0.03);
    GrayImage bimodal(16, 16);
    for (std::size_t i = 0; i < bimodal.size(); ++i)
        bimodal.pixels()[i] = std::clamp((i % 2 ? 0.8 : 0.2) + n(rng), 0.0, 1.0);
    const double tb = otsu_threshold(bimodal);
    CHECK(otsu_bin(bimodal) == oracle::otsu_bin(bimodal));
    CHECK(tb > 0.2);
    CHECK(tb < 0.8);

    CHECK_THROWS_AS(otsu_threshold(GrayImage(4, 4, 0.3)), DegenerateImageError);
}

TEST_CASE("binarize vessels") {
    GrayImage v(8, 8, 0.0);
    for (int y = 2; y < 4; ++y)
        for (int x = 1; x < 6; ++x) v(y, x) = 1.0;
    auto b = binarize_vessels(v);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(b(y, x) == (v(y, x) == 1.0 ? 1 : 0));
    CHECK(binarize_vessels(b.to_gray()) == b);
    CHECK_THROWS_AS(binarize_vessels(GrayImage(4, 4, 0.0)), DegenerateImageError);
}

TEST_CASE("skeleton small cases") {
    BinaryImage empty(8, 8);
    CHECK(skeletonize(empty) == empty);

    BinaryImage diag(8, 8);
    for (int i = 0; i < 8; ++i) diag(i, i) = 1;
    CHECK(skeletonize(diag) == diag);

    BinaryImage square(11, 11);
    for (int y = 2; y < 9; ++y)
        for (int x = 2; x < 9; ++x) square(y, x) = 1;
    auto s = skeletonize(square);
    CHECK_FALSE(has_full_2x2_block(s));
    CHECK(count_components8(s) == 1);
    CHECK(s.count() >= 1);

    BinaryImage block(4, 4);
    block(1, 1) = block(1, 2) = block(2, 1) = block(2, 2) = 1;
    auto sb = skeletonize(block);
    CHECK(count_components8(sb) == 1);
    CHECK_FALSE(has_full_2x2_block(sb));
}

TEST_CASE("skeleton invariants on random masks") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 60; ++i) {
        auto m = random_blobs(32, rng);
        auto s = skeletonize(m);
        for (std::size_t p = 0; p < s.size(); ++p)
            if (s.pixels()[p]) CHECK(m.pixels()[p] == 1);
        CHECK_FALSE(has_full_2x2_block(s));
        CHECK(count_components8(s) == count_components8(m));
        CHECK(skeletonize(s) == s);
    }
}

TEST_CASE("extract structure triplet") {
    GrayImage img(32, 32, 0.05);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) img(y, x) += 0.9 * std::exp(-0.5 * (x - 15) * (x - 15) / 1.5);
    auto t = extract_structure(img);
    CHECK_NOTHROW(t.validate());
    for (int y = 4; y < 28; ++y) CHECK(t.vessel_mask(y, 15) == 1);
    CHECK(t.skeleton.count() > 0);
}

TEST_CASE("component counting") {
    BinaryImage m(5, 5);
    m(0, 0) = 1;
    m(1, 1) = 1;
    m(4, 4) = 1;
    CHECK(count_components8(m) == 2);
}
