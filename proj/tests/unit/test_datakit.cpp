#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <set>

#include "vamae/datakit.hpp"

using namespace vamae;

namespace {

std::vector<std::string> ids(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(sample_id(i));
    return out;
}

}  // namespace

TEST_CASE("noiseless straight tube: label equals rendered support") {
    SynthConfig cfg;
    cfg.background_noise_std = 0.0;
    cfg.blur_sigma = 0.0;
    Tube t{{{10.0, 4.0}, {10.0, 28.0}}, 1.5, 0.8};
    std::mt19937_64 rng(1);
    auto s = render_tubes({t}, 32, cfg, rng);
    CHECK(s.label.pixels().size() == tube_support(t, 32, 32).pixels().size());
    CHECK(std::equal(s.label.pixels().begin(), s.label.pixels().end(), tube_support(t, 32, 32).pixels().begin()));
    // rows 9..11 for x in [3, 29]: round caps reach one pixel past each end
    CHECK(s.label.count() == 3 * 27);
    CHECK(s.image(10, 16) == doctest::Approx(cfg.background_level + 0.8));
    CHECK(s.image(0, 0) == doctest::Approx(cfg.background_level));
}

TEST_CASE("distance to polyline") {
    std::vector<Point> line{{0, 0}, {0, 10}};
    CHECK(distance_to_polyline({3, 5}, line) == doctest::Approx(3.0));
    CHECK(distance_to_polyline({0, 13}, line) == doctest::Approx(3.0));
    CHECK(distance_to_polyline({-4, -3}, line) == doctest::Approx(5.0));
}

TEST_CASE("mean foreground fraction over 100 images lies in [0.05, 0.25]") {
    SynthConfig cfg;
    cfg.n_images = 100;
    auto data = generate_synthetic(cfg);
    REQUIRE(data.size() == 100);
    double frac = 0.0;
    for (const auto& s : data) frac += static_cast<double>(s.label.count()) / s.label.size();
    frac /= 100.0;
    CHECK(frac >= 0.05);
    CHECK(frac <= 0.25);
}

TEST_CASE("each tube support is one 8-connected component") {
    SynthConfig cfg;
    for (int i = 0; i < 30; ++i) {
        auto s = generate_one(cfg, i);
        for (const auto& t : s.tubes) CHECK(count_components8(tube_support(t, cfg.image_size, cfg.image_size)) == 1);
    }
}

TEST_CASE("synthetic generation is deterministic per seed and index") {
    SynthConfig cfg;
    cfg.n_images = 5;
    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    for (int i = 0; i < 5; ++i) {
        CHECK(std::equal(a[i].image.pixels().begin(), a[i].image.pixels().end(), b[i].image.pixels().begin()));
        CHECK(std::equal(a[i].label.pixels().begin(), a[i].label.pixels().end(), b[i].label.pixels().begin()));
    }
    auto single = generate_one(cfg, 3);
    CHECK(std::equal(single.image.pixels().begin(), single.image.pixels().end(), a[3].image.pixels().begin()));
    cfg.seed = 1;
    auto c = generate_one(cfg, 3);
    CHECK_FALSE(std::equal(c.image.pixels().begin(), c.image.pixels().end(), a[3].image.pixels().begin()));
}

TEST_CASE("images are clamped and brighter on vessels") {
    SynthConfig cfg;
    auto s = generate_one(cfg, 0);
    double fg = 0, bg = 0;
    int nf = 0, nb = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double v = s.image(y, x);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            if (s.label(y, x)) fg += v, ++nf;
            else bg += v, ++nb;
        }
    CHECK(fg / nf > bg / nb + 0.2);
}

TEST_CASE("splits of 200 ids are 128/32/40 and disjoint") {
    auto all = ids(200);
    auto sp = make_splits(all, {}, 1.0, 7);
    CHECK(sp.train.size() == 128);
    CHECK(sp.val.size() == 32);
    CHECK(sp.test.size() == 40);
    std::set<std::string> u(sp.train.begin(), sp.train.end());
    u.insert(sp.val.begin(), sp.val.end());
    u.insert(sp.test.begin(), sp.test.end());
    CHECK(u.size() == 200);
    CHECK(sp.labeled == sp.train);

    auto again = make_splits(all, {}, 1.0, 7);
    CHECK(again.train == sp.train);
    CHECK(again.test == sp.test);
    auto other = make_splits(all, {}, 1.0, 8);
    CHECK(other.train != sp.train);
}

TEST_CASE("label fractions subsample train deterministically") {
    auto all = ids(200);
    for (auto [f, n] : {std::pair{0.5, 64u}, {0.75, 96u}, {1.0, 128u}}) {
        auto sp = make_splits(all, {}, f, 3);
        CHECK(sp.labeled.size() == n);
        for (const auto& id : sp.labeled) CHECK(std::find(sp.train.begin(), sp.train.end(), id) != sp.train.end());
        CHECK(make_splits(all, {}, f, 3).labeled == sp.labeled);
    }
    auto base = make_splits(all, {}, 1.0, 3);
    CHECK(with_label_fraction(base, 0.5, 3).labeled == make_splits(all, {}, 0.5, 3).labeled);
}

TEST_CASE("split errors") {
    CHECK_THROWS_AS(make_splits(ids(2), {}, 1.0, 0), EmptySplitError);
    CHECK_THROWS_AS(make_splits(ids(10), {0.5, 0.5, 0.5}, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_splits(ids(10), {}, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_splits(ids(10), {}, 1.5, 0), std::invalid_argument);
}

TEST_CASE("dataset layout round trip") {
    auto root = std::filesystem::temp_directory_path() / "vamae_datakit_test";
    std::filesystem::remove_all(root);
    SynthConfig cfg;
    cfg.n_images = 10;
    auto data = generate_synthetic(cfg);
    auto sp = make_splits(ids(10), {0.6, 0.2, 0.2}, 0.5, 1);
    write_dataset(root, data, sp);
    auto back = read_splits(root / "splits.txt");
    CHECK(back.train == sp.train);
    CHECK(back.val == sp.val);
    CHECK(back.test == sp.test);
    CHECK(back.labeled == sp.labeled);
    CHECK(list_image_ids(root) == ids(10));

    auto loaded = load_labeled(root, {sample_id(4)});
    REQUIRE(loaded.size() == 1);
    CHECK(std::equal(loaded[0].label.pixels().begin(), loaded[0].label.pixels().end(),
                     data[4].label.pixels().begin()));
    for (std::size_t i = 0; i < data[4].image.size(); ++i)
        CHECK(std::abs(loaded[0].image.pixels()[i] - data[4].image.pixels()[i]) <= 0.5 / 255 + 1e-12);

    auto t = extract_structure(data[0].image);
    write_priors(root, sample_id(0), t);
    auto tp = read_priors(root, sample_id(0));
    CHECK(std::equal(tp.skeleton.pixels().begin(), tp.skeleton.pixels().end(), t.skeleton.pixels().begin()));
    CHECK(std::equal(tp.vessel_mask.pixels().begin(), tp.vessel_mask.pixels().end(), t.vessel_mask.pixels().begin()));
    std::filesystem::remove_all(root);
}
