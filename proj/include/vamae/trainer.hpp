#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vamae/augment.hpp"
#include "vamae/datakit.hpp"
#include "vamae/masking.hpp"
#include "vamae/model.hpp"
#include "vamae/objectives.hpp"
#include "vamae/optim.hpp"
#include "vamae/priors.hpp"
#include "vamae/segmentation.hpp"

namespace vamae {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PretrainConfig {
    int epochs = 30;
    int batch_size = 8;
    AdamConfig optimizer = AdamConfig::adamw_default();
    LrSchedule schedule{10.0, 1e-4, 30.0, 0.0};
    CurriculumSchedule curriculum = CurriculumSchedule::standard().rescaled(30);
    double alpha = 0.6;
    LossWeights weights;
    /// Constant masking ratio replacing the curriculum.
    std::optional<double> ratio_override;
    /// Save a checkpoint every this many epochs (0: final only).
    int checkpoint_interval = 0;
    std::uint64_t seed = 0;

    void validate() const;
    double ratio_at(int epoch) const;
};

struct PretrainEpochLog {
    int epoch = 0;
    double total = 0.0;
    double intensity = 0.0;
    double vesselness = 0.0;
    double skeleton = 0.0;
    /// Learning rate of the epoch's last step.
    double lr = 0.0;
    double mask_ratio = 0.0;
    int masked_patches = 0;
};

struct TrainHooks {
    /// Checkpoints, logs and NaN dumps go here when set.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const std::string&)> log_line;
};

std::vector<PretrainEpochLog> pretrain(VamaeModel& model, const std::vector<StructureTriplet>& data,
                                       const PretrainConfig& cfg, const TrainHooks& hooks = {});

std::string pretrain_manifest(const VamaeModel& model, const PretrainConfig& cfg, int epoch);

struct FinetuneConfig {
    int stage1_epochs = 20;
    double stage1_lr = 1e-4;
    int stage2_epochs = 80;
    double stage2_lr = 1e-5;
    int batch_size = 8;
    double pos_weight = 15.0;
    bool augment = true;
    AugmentParams augment_params;
    AdamConfig optimizer;
    std::uint64_t seed = 0;

    void validate() const;
    int total_epochs() const { return stage1_epochs + stage2_epochs; }
    /// Stage (1 or 2) and learning rate for a 1-based epoch.
    int stage_of(int epoch) const { return epoch <= stage1_epochs ? 1 : 2; }
    double lr_of(int epoch) const { return stage_of(epoch) == 1 ? stage1_lr : stage2_lr; }
};

struct FinetuneEpochLog {
    int epoch = 0;
    int stage = 1;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_dice = 0.0;
};

struct FinetuneResult {
    std::vector<FinetuneEpochLog> log;
    int best_epoch = 0;
    double best_val_dice = -1.0;
};

/// Two-stage fine-tuning; on return the model holds the best-validation weights.
FinetuneResult finetune(SegmentationModel& model, const std::vector<LabeledImage>& train,
                        const std::vector<LabeledImage>& val, const FinetuneConfig& cfg, const TrainHooks& hooks = {});

std::vector<SegMetrics> evaluate(const SegmentationModel& model, const std::vector<LabeledImage>& images);
double mean_dice(const std::vector<SegMetrics>& m);

}  // namespace vamae
