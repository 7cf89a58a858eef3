#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "vamae/model.hpp"
#include "vamae/objectives.hpp"

using namespace vamae;
namespace ad = vamae::ad;

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.encoder_depth = 1;
    c.encoder_dim = 8;
    c.encoder_heads = 2;
    c.decoder_depth = 1;
    c.decoder_dim = 8;
    c.decoder_heads = 2;
    c.head_hidden_dims = {8};
    c.mlp_ratio = 2;
    return c;
}

ad::Tensor random_patches(const ModelConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(c.patch_count()) * c.patch_area());
    for (auto& x : v) x = u(rng);
    return ad::Tensor::constant({c.patch_count(), c.patch_area()}, v);
}

MaskSelection mask_of(std::vector<int> idx, int n) {
    MaskSelection m;
    m.masked_indices = std::move(idx);
    m.patch_count = n;
    m.ratio = static_cast<double>(m.masked_indices.size()) / n;
    return m;
}

void zero_blocks(ParameterSet& ps, const std::string& prefix) {
    for (const auto& p : ps.with_prefix(prefix)) {
        if (p.name.find(".attn.") == std::string::npos && p.name.find(".mlp.") == std::string::npos) continue;
        auto t = p.tensor;
        for (auto& v : t.mutable_value()) v = 0.0;
    }
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(ModelConfig::desk().validate());
    auto p = ModelConfig::full();
    CHECK_NOTHROW(p.validate());
    CHECK(p.patch_area() == 256);
    CHECK(p.patch_count() == 196);
    CHECK(p.head_hidden_dims == std::vector<int>{256, 128});
    auto bad = ModelConfig::desk();
    bad.encoder_heads = 3;
    CHECK_THROWS(bad.validate());
    bad = ModelConfig::desk();
    bad.image_size = 60;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("sincos table") {
    auto t = sincos_position_table(2, 3, 8);
    CHECK(t.size() == 48);
    // position (0,0): sin terms 0, cos terms 1
    for (int i = 0; i < 2; ++i) {
        CHECK(t[i] == 0.0);
        CHECK(t[2 + i] == 1.0);
    }
    // row 1, col 2, first frequency is 1
    const double* r = t.data() + (1 * 3 + 2) * 8;
    CHECK(r[0] == doctest::Approx(std::sin(1.0)));
    CHECK(r[4] == doctest::Approx(std::sin(2.0)));
    CHECK_THROWS(sincos_position_table(2, 2, 6));
}

TEST_CASE("visible embedding") {
    auto cfg = ModelConfig::desk();
    cfg.image_size = 32;
    VamaeModel m(cfg, 1);
    const int n = cfg.patch_count();
    REQUIRE(n == 16);
    auto x = random_patches(cfg, 2);
    CHECK(m.embed_visible(x, no_mask(n)).rows() == n);
    std::vector<int> all_but_one;
    for (int i = 1; i < n; ++i) all_but_one.push_back(i);
    CHECK(m.embed_visible(x, mask_of(all_but_one, n)).rows() == 1);
    CHECK(m.embed_visible(x, select_mask(std::vector<double>(n, 0.0), 0.75)).rows() == 4);
    CHECK_THROWS_AS(m.embed_visible(x, mask_of({0, 16}, n)), std::out_of_range);
    std::vector<int> every(n);
    for (int i = 0; i < n; ++i) every[i] = i;
    CHECK_THROWS(m.embed_visible(x, mask_of(every, n)));
}

TEST_CASE("encoder output shape and permutation equivariance") {
    auto cfg = tiny();
    cfg.image_size = 32;
    VamaeModel m(cfg, 3);
    auto x = random_patches(cfg, 4);
    auto tokens = m.embed_visible(x, mask_of({1, 5, 9}, cfg.patch_count()));
    auto z = m.encode(tokens);
    CHECK(z.shape() == ad::Shape{13, cfg.encoder_dim});
    std::vector<int> perm(13);
    for (int i = 0; i < 13; ++i) perm[i] = i;
    std::swap(perm[2], perm[7]);
    auto zp = m.encode(ad::gather_rows(tokens, perm));
    for (int r = 0; r < 13; ++r)
        for (int c = 0; c < cfg.encoder_dim; ++c)
            CHECK(zp.at(r * cfg.encoder_dim + c) == doctest::Approx(z.at(perm[r] * cfg.encoder_dim + c)).epsilon(1e-9));
}

TEST_CASE("zeroed blocks are identity maps") {
    auto cfg = tiny();
    VamaeModel m(cfg, 5);
    zero_blocks(m.parameters(), "encoder.blocks.");
    zero_blocks(m.parameters(), "decoder.blocks.");
    auto x = random_patches(cfg, 6);
    auto mask = mask_of({0, 3}, cfg.patch_count());
    auto tokens = m.embed_visible(x, mask);
    auto z = m.encode(tokens);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == tokens.at(i));

    auto dec = m.decode(z, mask);
    CHECK(dec.rows() == cfg.patch_count());
    const auto& pos = m.decoder_position_table();
    const int d = cfg.decoder_dim;
    for (int i : mask.masked_indices)
        for (int c = 0; c < d; ++c)
            CHECK(dec.at(i * d + c) == doctest::Approx(m.mask_token().at(c) + pos.at(i * d + c)).epsilon(1e-14));
}

TEST_CASE("heads are independent and cover all patches") {
    auto cfg = tiny();
    VamaeModel m(cfg, 7);
    auto x = random_patches(cfg, 8);
    auto mask = mask_of({1, 2}, cfg.patch_count());
    auto out = m.forward(x, mask);
    for (auto* t : {&out.pred_intensity, &out.pred_vesselness, &out.pred_skeleton})
        CHECK(t->shape() == ad::Shape{cfg.patch_count(), cfg.patch_area()});
    CHECK(out.latents.rows() == 2);

    for (const auto& p : m.parameters().with_prefix("heads.skeleton.")) {
        auto t = p.tensor;
        for (auto& v : t.mutable_value()) v += 0.5;
    }
    auto out2 = m.forward(x, mask);
    for (std::size_t i = 0; i < out.pred_intensity.size(); ++i) {
        CHECK(out2.pred_intensity.at(i) == out.pred_intensity.at(i));
        CHECK(out2.pred_vesselness.at(i) == out.pred_vesselness.at(i));
    }
    bool changed = false;
    for (std::size_t i = 0; i < out.pred_skeleton.size(); ++i) changed |= out2.pred_skeleton.at(i) != out.pred_skeleton.at(i);
    CHECK(changed);
}

TEST_CASE("masked predictions depend on visible content") {
    auto cfg = tiny();
    VamaeModel m(cfg, 9);
    auto x = random_patches(cfg, 10);
    auto mask = mask_of({0, 1}, cfg.patch_count());
    auto a = m.forward(x, mask);
    auto x2 = ad::Tensor::constant(x.shape(), std::vector<double>(x.value().begin(), x.value().end()));
    x2.mutable_value()[3 * cfg.patch_area() + 5] += 0.7;
    auto b = m.forward(x2, mask);
    bool changed = false;
    for (int c = 0; c < cfg.patch_area(); ++c) changed |= a.pred_intensity.at(c) != b.pred_intensity.at(c);
    CHECK(changed);
    auto a2 = m.forward(x, mask);
    for (std::size_t i = 0; i < a.pred_intensity.size(); ++i) CHECK(a2.pred_intensity.at(i) == a.pred_intensity.at(i));
}

TEST_CASE("desk config keeps the encoder larger than the decoder") {
    VamaeModel m(ModelConfig::desk(), 0);
    CHECK(m.parameters().scalar_count("encoder.") > m.parameters().scalar_count("decoder."));
    CHECK(m.parameters().find("heads.intensity.1.weight")->tensor.shape() == ad::Shape{32, 64});
}

TEST_CASE("tiny model gradients match central differences") {
    auto cfg = tiny();
    VamaeModel m(cfg, 11);
    auto x = random_patches(cfg, 12);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PatchTargets t;
    const std::size_t n = x.size();
    t.intensity.assign(x.value().begin(), x.value().end());
    for (std::size_t i = 0; i < n; ++i) {
        t.vesselness.push_back(u(rng));
        t.skeleton.push_back(u(rng) < 0.2 ? 1.0 : 0.0);
    }
    auto mask = mask_of({0, 2}, cfg.patch_count());
    auto r = oracle::check_gradients(m.parameters(), [&] {
        return total_pretrain_loss(m.forward(x, mask), t, mask, LossWeights{}).total;
    });
    INFO("worst " << r.worst);
    CHECK(r.checked == m.parameters().scalar_count());
    CHECK(r.max_rel_err < 1e-4);
}
