#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "vamae/config.hpp"

using namespace vamae;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("empty file gives the documented defaults") {
    auto c = parse_config_text("");
    CHECK_NOTHROW(c.validate());
    CHECK(c.mask_alpha == 0.6);
    CHECK(c.loss.intensity == 0.3);
    CHECK(c.loss.vesselness == 0.5);
    CHECK(c.loss.skeleton == 0.2);
    CHECK(c.pos_weight == 15.0);
    CHECK(c.warmup_epochs == 10.0);
    CHECK(c.peak_lr == 1e-4);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.95);
    CHECK(c.weight_decay == 0.05);
    CHECK(c.stage1_epochs == 20);
    CHECK(c.stage1_lr == 1e-4);
    CHECK(c.stage2_epochs == 80);
    CHECK(c.stage2_lr == 1e-5);
    CHECK(c.epochs == 30);
    CHECK(c.batch_size == 8);
    CHECK(c.model.encoder_dim == 64);
}

TEST_CASE("sections, comments and dotted keys") {
    auto c = parse_config_text(R"(
seed = 7
# comment
[mask]
alpha = 0.4   # trailing
[train]
epochs = 12
augment = false
model.encoder_depth = 2
[model]
head_hidden = 16, 8
)");
    CHECK(c.seed == 7);
    CHECK(c.mask_alpha == 0.4);
    CHECK(c.epochs == 12);
    CHECK_FALSE(c.augment);
    CHECK(c.model.encoder_depth == 2);
    CHECK(c.model.head_hidden_dims == std::vector<int>{16, 8});
    // standard curriculum is rescaled to the training length
    CHECK(c.curriculum().total_epochs() == 12);
    CHECK(c.pretrain_config().schedule.total_epochs == 12.0);
}

TEST_CASE("errors name the key path") {
    auto bad_alpha = parse_config_text("[mask]\nalpha = 2.0\n");
    CHECK(error_of([&] { bad_alpha.validate(); }).find("mask.alpha") != std::string::npos);
    CHECK(error_of([] { parse_config_text("[mask]\nalfa = 0.5\n"); }).find("mask.alfa") != std::string::npos);
    CHECK(error_of([] { parse_config_text("[train]\nepochs = many\n"); }).find("train.epochs") != std::string::npos);
    CHECK(error_of([] { parse_config_text("[train]\nepochs = 3.5\n"); }).find("train.epochs") != std::string::npos);
    CHECK(error_of([] { parse_config_text("[train]\naugment = maybe\n"); }).find("train.augment") !=
          std::string::npos);
    CHECK(error_of([] { parse_config_text("nonsense line\n"); }).find("line 1") != std::string::npos);
    auto warm = parse_config_text("[train]\nepochs = 5\n");
    CHECK(error_of([&] { warm.validate(); }).find("sched.warmup_epochs") != std::string::npos);
    auto heads = parse_config_text("[model]\nencoder_heads = 3\n");
    CHECK(error_of([&] { heads.validate(); }).find("model") != std::string::npos);
    auto ratios = parse_config_text("[data]\ntest_ratio = 0.3\n");
    CHECK(error_of([&] { ratios.validate(); }).find("data.test_ratio") != std::string::npos);
    auto cur = parse_config_text("[mask]\ncurriculum = 1-10:0.5\n");
    CHECK(error_of([&] { cur.validate(); }).find("mask.curriculum") != std::string::npos);
}

TEST_CASE("override precedence: defaults < file < command line") {
    auto path = std::filesystem::temp_directory_path() / "vamae_cfg_test.conf";
    std::ofstream(path) << "[mask]\nalpha = 0.8\n[train]\nepochs = 40\n";
    auto c = load_config(path);
    CHECK(c.mask_alpha == 0.8);
    apply_override(c, "mask.alpha=0.2");
    CHECK(c.mask_alpha == 0.2);
    CHECK(c.epochs == 40);
    CHECK(c.batch_size == 8);
    CHECK_THROWS_AS(apply_override(c, "mask.alpha"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/vamae.conf"), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("resolved config round-trips through its text form") {
    auto c = parse_config_text("seed = 3\n[mask]\nratio = 0.6\n[model]\nhead_hidden = 24\n[sched]\npeak_lr = 0.0003\n");
    auto text = c.to_text();
    auto back = parse_config_text(text);
    for (const auto& k : config_keys()) CHECK(get_config_value(back, k) == get_config_value(c, k));
    CHECK(back.mask_ratio.value() == 0.6);
    CHECK(text.find("[model]") != std::string::npos);
}

TEST_CASE("module configs follow the run config") {
    auto c = parse_config_text("seed = 5\n[loss]\npos_weight = 10\n[train]\nlabel_fraction = 0.75\n");
    auto s = c.experiment_settings();
    CHECK(s.finetune.pos_weight == 10.0);
    CHECK(s.label_fraction == 0.75);
    CHECK(s.data.seed == 5);
    CHECK(s.pretrain.seed == 5);
    CHECK(s.pretrain.optimizer.weight_decay == 0.05);
    CHECK(s.pretrain.optimizer.beta2 == 0.95);
    CHECK_NOTHROW(s.validate());
}
