#include "doctest.h"

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "vamae/manifest.hpp"
#include "vamae/trainer.hpp"

using namespace vamae;

namespace {

ModelConfig tiny() {
    ModelConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.encoder_depth = 1;
    c.encoder_dim = 16;
    c.encoder_heads = 2;
    c.decoder_depth = 1;
    c.decoder_dim = 16;
    c.decoder_heads = 2;
    c.head_hidden_dims = {16};
    return c;
}

std::vector<SyntheticSample> synth(int size, int n) {
    SynthConfig sc;
    sc.image_size = size;
    sc.n_images = n;
    sc.min_vessels = 2;
    sc.max_vessels = 3;
    return generate_synthetic(sc);
}

std::vector<StructureTriplet> triplets(const std::vector<SyntheticSample>& s) {
    std::vector<StructureTriplet> out;
    for (const auto& x : s) out.push_back(extract_structure(x.image));
    return out;
}

std::vector<LabeledImage> labeled(const std::vector<SyntheticSample>& s, int lo, int hi) {
    std::vector<LabeledImage> out;
    for (int i = lo; i < hi; ++i) out.push_back({sample_id(i), s[i].image, s[i].label});
    return out;
}

PretrainConfig short_pretrain(int epochs) {
    PretrainConfig c;
    c.epochs = epochs;
    c.batch_size = 4;
    c.schedule = {1.0, 1e-3, static_cast<double>(epochs), 0.0};
    c.curriculum = CurriculumSchedule::standard().rescaled(std::max(epochs, 3));
    return c;
}

}  // namespace

TEST_CASE("pretrain config validation") {
    PretrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.epochs = 5;
    c.schedule.total_epochs = 5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // warmup 10 > epochs
    c = {};
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("curriculum: logged mask ratio per epoch follows the schedule") {
    auto data = triplets(synth(32, 4));
    VamaeModel m(tiny(), 1);
    auto cfg = short_pretrain(30);
    auto log = pretrain(m, data, cfg);
    REQUIRE(log.size() == 30);
    for (const auto& e : log) {
        CHECK(e.mask_ratio == curriculum_ratio(e.epoch, cfg.curriculum));
        CHECK(e.masked_patches == masked_count(e.mask_ratio, 16));
    }
    CHECK(log[0].mask_ratio == 0.5);
    CHECK(log[1].mask_ratio == 0.5);
    CHECK(log[2].mask_ratio == 0.65);
    CHECK(log[4].mask_ratio == 0.65);
    CHECK(log[5].mask_ratio == 0.75);
    CHECK(log[29].mask_ratio == 0.75);
}

TEST_CASE("pretraining loss decreases over 30 desk epochs") {
    auto data = triplets(synth(64, 40));
    VamaeModel m(ModelConfig::desk(), 0);
    PretrainConfig cfg;
    cfg.schedule.peak_lr = 1e-3;
    auto log = pretrain(m, data, cfg);
    REQUIRE(log.size() == 30);
    CHECK(log.back().total < log.front().total);
    CHECK(log.back().intensity < log.front().intensity);
    for (const auto& e : log) {
        CHECK(std::isfinite(e.total));
        CHECK(e.total == doctest::Approx(0.3 * e.intensity + 0.5 * e.vesselness + 0.2 * e.skeleton).epsilon(1e-9));
    }
}

TEST_CASE("identical seeds give bit-identical pretraining") {
    auto data = triplets(synth(32, 6));
    auto cfg = short_pretrain(3);
    VamaeModel a(tiny(), 2), b(tiny(), 2);
    auto la = pretrain(a, data, cfg);
    auto lb = pretrain(b, data, cfg);
    for (int i = 0; i < 3; ++i) CHECK(la[i].total == lb[i].total);
    auto sa = a.parameters().state(), sb = b.parameters().state();
    for (const auto& [k, v] : sa) CHECK(v.values == sb.at(k).values);

    cfg.seed = 1;
    VamaeModel c(tiny(), 2);
    auto lc = pretrain(c, data, cfg);
    CHECK(lc[0].total != la[0].total);
}

TEST_CASE("pretrain rejects mismatched data") {
    auto data = triplets(synth(64, 1));
    VamaeModel m(tiny(), 0);
    CHECK_THROWS_AS(pretrain(m, data, short_pretrain(3)), DimensionError);
    CHECK_THROWS_AS(pretrain(m, {}, short_pretrain(3)), std::invalid_argument);
}

TEST_CASE("pretrain writes logs and checkpoints") {
    auto dir = std::filesystem::temp_directory_path() / "vamae_pretrain_test";
    std::filesystem::remove_all(dir);
    auto data = triplets(synth(32, 4));
    VamaeModel m(tiny(), 3);
    auto cfg = short_pretrain(3);
    cfg.checkpoint_interval = 2;
    std::vector<std::string> lines;
    pretrain(m, data, cfg, {dir, [&](const std::string& l) { lines.push_back(l); }});
    REQUIRE(lines.size() == 3);
    auto j = nlohmann::json::parse(lines[2]);
    CHECK(j["epoch"] == 3);
    CHECK(j.contains("lr"));
    CHECK(j.contains("mask_ratio"));
    CHECK(j.contains("l_skeleton"));
    CHECK(std::filesystem::exists(dir / "pretrain_epoch_2.ckpt"));
    CHECK(std::filesystem::exists(dir / "pretrain_final.ckpt"));
    CHECK(std::filesystem::exists(dir / "pretrain_log.jsonl"));
    auto ck = load_checkpoint(dir / "pretrain_final.ckpt");
    auto man = nlohmann::json::parse(ck.manifest_json);
    CHECK(man["epoch"] == 3);
    CHECK(model_config_from_json(man["model"]).encoder_dim == 16);
    std::filesystem::remove_all(dir);
}

TEST_CASE("finetune config stage boundaries") {
    FinetuneConfig c;
    CHECK(c.total_epochs() == 100);
    CHECK(c.lr_of(1) == 1e-4);
    CHECK(c.lr_of(20) == 1e-4);
    CHECK(c.lr_of(21) == 1e-5);
    CHECK(c.lr_of(100) == 1e-5);
    CHECK(c.stage_of(20) == 1);
    CHECK(c.stage_of(21) == 2);
    c.stage1_epochs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("stage 1 freezes the encoder, stage 2 trains it") {
    auto s = synth(32, 6);
    SegmentationModel m(tiny(), 4);
    const auto enc0 = m.parameters().state("encoder.");
    const auto head0 = m.parameters().state("seg.");
    FinetuneConfig cfg;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 2;
    cfg.stage1_lr = 1e-3;
    cfg.stage2_lr = 1e-4;
    cfg.batch_size = 2;
    StateDict enc_after_stage1, head_after_stage1;
    TrainHooks hooks;
    int epoch = 0;
    hooks.log_line = [&](const std::string&) {
        if (++epoch == 2) {
            enc_after_stage1 = m.parameters().state("encoder.");
            head_after_stage1 = m.parameters().state("seg.");
        }
    };
    auto res = finetune(m, labeled(s, 0, 4), labeled(s, 4, 6), cfg, hooks);
    REQUIRE(res.log.size() == 4);
    for (const auto& [k, v] : enc0) CHECK(v.values == enc_after_stage1.at(k).values);
    bool head_moved = false;
    for (const auto& [k, v] : head0) head_moved |= v.values != head_after_stage1.at(k).values;
    CHECK(head_moved);
    CHECK(res.log[1].lr == 1e-3);
    CHECK(res.log[2].lr == 1e-4);
    CHECK(res.log[2].stage == 2);
    // the encoder requires grad again after training
    for (const auto& p : m.parameters().with_prefix("encoder.")) CHECK(p.tensor.requires_grad());
}

TEST_CASE("finetune keeps the best validation weights") {
    auto s = synth(32, 6);
    SegmentationModel m(tiny(), 5);
    FinetuneConfig cfg;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 2;
    cfg.stage1_lr = 3e-3;
    cfg.stage2_lr = 3e-4;
    cfg.batch_size = 2;
    auto val = labeled(s, 4, 6);
    auto res = finetune(m, labeled(s, 0, 4), val, cfg);
    double best = -1;
    int best_epoch = 0;
    for (const auto& e : res.log)
        if (e.val_dice > best) best = e.val_dice, best_epoch = e.epoch;
    CHECK(res.best_epoch == best_epoch);
    CHECK(res.best_val_dice == best);
    CHECK(mean_dice(evaluate(m, val)) == best);
}

TEST_CASE("finetune is deterministic and rejects bad inputs") {
    auto s = synth(32, 4);
    FinetuneConfig cfg;
    cfg.stage1_epochs = 1;
    cfg.stage2_epochs = 1;
    SegmentationModel a(tiny(), 6), b(tiny(), 6);
    auto ra = finetune(a, labeled(s, 0, 3), labeled(s, 3, 4), cfg);
    auto rb = finetune(b, labeled(s, 0, 3), labeled(s, 3, 4), cfg);
    CHECK(ra.log[0].train_loss == rb.log[0].train_loss);
    CHECK(ra.log[1].train_loss == rb.log[1].train_loss);

    SegmentationModel c(tiny(), 6);
    CHECK_THROWS_AS(finetune(c, {}, labeled(s, 3, 4), cfg), std::invalid_argument);
    auto big = synth(64, 1);
    CHECK_THROWS_AS(finetune(c, labeled(big, 0, 1), labeled(s, 3, 4), cfg), DimensionError);
}

TEST_CASE("metrics aggregation") {
    CHECK(mean_dice({}) == 0.0);
    CHECK(mean_dice({{0.5, 0, 0, 0}, {1.0, 0, 0, 0}}) == doctest::Approx(0.75));
}
