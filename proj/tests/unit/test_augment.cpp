#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "vamae/augment.hpp"
#include "vamae/datakit.hpp"

using namespace vamae;

namespace {

bool same(const GrayImage& a, const GrayImage& b) {
    return a.same_shape(b) && std::equal(a.pixels().begin(), a.pixels().end(), b.pixels().begin());
}
bool same(const BinaryImage& a, const BinaryImage& b) {
    return a.same_shape(b) && std::equal(a.pixels().begin(), a.pixels().end(), b.pixels().begin());
}

SyntheticSample sample() { return generate_one(SynthConfig{}, 2); }

}  // namespace

TEST_CASE("identity draw leaves the pair unchanged") {
    auto s = sample();
    auto out = apply_augment(s.image, s.label, AugmentDraw::identity());
    CHECK(same(out.image, s.image));
    CHECK(same(out.mask, s.label));
}

TEST_CASE("flips are applied to both and are involutions") {
    auto s = sample();
    AugmentDraw h;
    h.flip_horizontal = true;
    auto once = apply_augment(s.image, s.label, h);
    CHECK(once.image(5, 0) == s.image(5, 63));
    CHECK(once.mask(7, 3) == s.label(7, 60));
    auto twice = apply_augment(once.image, once.mask, h);
    CHECK(same(twice.image, s.image));
    CHECK(same(twice.mask, s.label));

    AugmentDraw v;
    v.flip_vertical = true;
    auto vo = apply_augment(s.image, s.label, v);
    CHECK(vo.image(0, 9) == s.image(63, 9));
    auto vv = apply_augment(vo.image, vo.mask, v);
    CHECK(same(vv.image, s.image));
}

TEST_CASE("rotation angles stay within +-15 degrees") {
    std::mt19937_64 rng(4);
    AugmentParams p;
    double lo = 0, hi = 0;
    for (int i = 0; i < 2000; ++i) {
        p.elastic_probability = 0.0;
        auto d = sample_augment(p, 8, 8, rng);
        CHECK(std::abs(d.rotation_deg) <= 15.0);
        lo = std::min(lo, d.rotation_deg);
        hi = std::max(hi, d.rotation_deg);
    }
    CHECK(lo < -14.0);
    CHECK(hi > 14.0);
}

TEST_CASE("elastic field peaks at the configured magnitude") {
    std::mt19937_64 rng(5);
    AugmentParams p;
    p.elastic_probability = 1.0;
    auto d = sample_augment(p, 32, 32, rng);
    REQUIRE(d.displacement_y.size() == 32 * 32);
    double peak = 0;
    for (std::size_t i = 0; i < d.displacement_y.size(); ++i)
        peak = std::max(peak, std::hypot(d.displacement_y[i], d.displacement_x[i]));
    CHECK(peak == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("image and mask share the spatial transform") {
    // Feeding the mask as the image must reproduce the mask after thresholding.
    auto s = sample();
    const GrayImage as_image = s.label.to_gray();
    std::mt19937_64 rng(9);
    AugmentParams p;
    p.elastic_probability = 1.0;
    for (int i = 0; i < 10; ++i) {
        auto d = sample_augment(p, 64, 64, rng);
        auto out = apply_augment(as_image, s.label, d);
        CHECK(same(threshold(out.image, 0.5), out.mask));
    }
}

TEST_CASE("a 90 degree rotation maps pixels exactly") {
    GrayImage img(5, 5);
    img(0, 2) = 1.0;
    BinaryImage m(5, 5);
    m(0, 2) = 1;
    AugmentDraw d;
    d.rotation_deg = 90.0;
    auto out = apply_augment(img, m, d);
    CHECK(out.mask.count() == 1);
    // output(y,x) samples input at the inversely rotated point
    const bool left = out.mask(2, 0), right = out.mask(2, 4);
    CHECK(left != right);
}

TEST_CASE("mismatched pair is rejected") {
    CHECK_THROWS_AS(apply_augment(GrayImage(4, 4), BinaryImage(4, 5), AugmentDraw::identity()), DimensionError);
}
