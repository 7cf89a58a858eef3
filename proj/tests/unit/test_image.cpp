#include "doctest.h"

#include <filesystem>
#include <random>

#include "vamae/image.hpp"

using namespace vamae;

namespace {

GrayImage random_image(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrayImage img(h, w);
    for (auto& v : img.pixels()) v = u(rng);
    return img;
}

}  // namespace

TEST_CASE("constant image splits into constant patches") {
    GrayImage img(4, 4, 0.5);
    auto grid = PatchGrid::for_image(4, 4, 2);
    auto p = patchify(img, grid);
    REQUIRE(p.size() == 4);
    for (const auto& patch : p) CHECK(patch == std::vector<double>{0.5, 0.5, 0.5, 0.5});
}

TEST_CASE("single patch layout is row-major") {
    GrayImage img(2, 2, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    auto p = patchify(img, PatchGrid::for_image(2, 2, 2));
    REQUIRE(p.size() == 1);
    CHECK(p[0] == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    CHECK(unpatchify(p, PatchGrid::for_image(2, 2, 2)) == img);
}

TEST_CASE("unpatchify of identity pattern") {
    auto img = unpatchify({{1, 0, 0, 1}}, PatchGrid::for_image(2, 2, 2));
    CHECK(img(0, 0) == 1.0);
    CHECK(img(0, 1) == 0.0);
    CHECK(img(1, 0) == 0.0);
    CHECK(img(1, 1) == 1.0);
}

TEST_CASE("patch index maps to its spatial block") {
    GrayImage img(4, 6);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) img(y, x) = (y * 6 + x) / 24.0;
    auto grid = PatchGrid::for_image(4, 6, 2);
    CHECK(grid.rows == 2);
    CHECK(grid.cols == 3);
    auto p = patchify(img, grid);
    // patch 4 -> grid row 1, col 1 -> pixels (2..3, 2..3)
    CHECK(p[4] == std::vector<double>{img(2, 2), img(2, 3), img(3, 2), img(3, 3)});
    auto flat = patchify_flat(img, grid);
    for (int i = 0; i < grid.patch_count(); ++i)
        for (int j = 0; j < grid.patch_area(); ++j) CHECK(flat[i * 4 + j] == p[i][j]);
}

TEST_CASE("round trip over random sizes") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(1, 5);
    for (int trial = 0; trial < 40; ++trial) {
        const int ps = 1 << (pick(rng) % 4);
        const int h = ps * pick(rng);
        const int w = ps * pick(rng);
        auto img = random_image(h, w, rng);
        auto grid = PatchGrid::for_image(h, w, ps);
        CHECK(grid.patch_count() == grid.rows * grid.cols);
        CHECK(unpatchify(patchify(img, grid), grid) == img);
    }
    auto img = random_image(32, 32, rng);
    auto grid = PatchGrid::for_image(32, 32, 16);
    CHECK(unpatchify(patchify(img, grid), grid) == img);
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(PatchGrid::for_image(10, 8, 4), DimensionError);
    CHECK_THROWS_AS(PatchGrid::for_image(0, 8, 4), DimensionError);
    auto grid = PatchGrid::for_image(4, 4, 2);
    CHECK_THROWS_AS(unpatchify(Patches(3, std::vector<double>(4)), grid), DimensionError);
    CHECK_THROWS_AS(unpatchify(Patches(4, std::vector<double>(3)), grid), DimensionError);
    CHECK_THROWS_AS(patchify(GrayImage(6, 4), grid), DimensionError);
}

TEST_CASE("buffer size and binary normalization") {
    CHECK_THROWS(GrayImage(2, 2, std::vector<double>{0, 0.5}));
    BinaryImage b(1, 3, std::vector<std::uint8_t>{0, 7, 255});
    CHECK(b(0, 1) == 1);
    CHECK(b(0, 2) == 1);
    CHECK(b.count() == 2);
}

TEST_CASE("png round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "vamae_png_test";
    std::filesystem::create_directories(dir);
    GrayImage img(3, 2, std::vector<double>{0.0, 1.0, 0.5, 0.25, 100.0 / 255.0, 0.999});
    write_png(dir / "g.png", img);
    auto back = read_png(dir / "g.png");
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back.pixels()[i] == doctest::Approx(std::lround(img.pixels()[i] * 255.0) / 255.0).epsilon(1e-12));

    BinaryImage m(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
    write_png(dir / "b.png", m);
    CHECK(read_binary_png(dir / "b.png") == m);
    auto as_gray = read_png(dir / "b.png");
    CHECK(as_gray(0, 0) == 1.0);
    CHECK(as_gray(0, 1) == 0.0);
    std::filesystem::remove_all(dir);
    CHECK_THROWS(read_png(dir / "missing.png"));
}
