#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vamae/datakit.hpp"
#include "vamae/diagnostics.hpp"
#include "vamae/model.hpp"
#include "vamae/objectives.hpp"
#include "vamae/trainer.hpp"

namespace vamae {

/// Message always names the offending key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error(key + ": " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct RunConfig {
    ModelConfig model = ModelConfig::desk();

    double mask_alpha = 0.6;
    /// "standard" (rescaled to train.epochs) or explicit stages "1-2:0.5,3-5:0.65,6-30:0.75".
    std::string mask_curriculum = "standard";
    std::optional<double> mask_ratio;

    LossWeights loss;
    double pos_weight = 15.0;

    double warmup_epochs = 10.0;
    double peak_lr = 1e-4;
    double lr_floor = 0.0;

    int epochs = 30;
    int batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    int checkpoint_interval = 0;
    int stage1_epochs = 20;
    double stage1_lr = 1e-4;
    int stage2_epochs = 80;
    double stage2_lr = 1e-5;
    int finetune_batch_size = 8;
    bool augment = true;
    double label_fraction = 0.5;

    SynthConfig data;
    SplitRatios ratios;

    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first invalid key.
    void validate() const;

    CurriculumSchedule curriculum() const;
    PretrainConfig pretrain_config() const;
    FinetuneConfig finetune_config() const;
    ExperimentSettings experiment_settings() const;

    /// Every key with its resolved value, in sectioned file syntax.
    std::string to_text() const;
};

/// Keys in canonical order.
const std::vector<std::string>& config_keys();

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// `key = value` lines, `[section]` headers, `#` comments. Layered over `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// "key=value"
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace vamae
