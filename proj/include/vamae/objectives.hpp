#pragma once

#include <vector>

#include "vamae/masking.hpp"
#include "vamae/model.hpp"
#include "vamae/tensor.hpp"

namespace vamae {

struct LossWeights {
    double intensity = 0.3;
    double vesselness = 0.5;
    double skeleton = 0.2;

    void validate() const;
};

struct LrSchedule {
    double warmup_epochs = 10.0;
    double peak_lr = 1e-4;
    double total_epochs = 300.0;
    double floor = 0.0;

    void validate() const;
};

/// Mean over masked patches of the per-pixel mean squared error.
ad::Tensor masked_mse(const ad::Tensor& pred, const std::vector<double>& target, const MaskSelection& mask);
/// Mean binary cross-entropy over masked patches' pixels; `pred` holds logits.
ad::Tensor masked_bce(const ad::Tensor& pred_logits, const std::vector<double>& target, const MaskSelection& mask);

/// Flat [N * P^2] targets for one image.
struct PatchTargets {
    std::vector<double> intensity;
    std::vector<double> vesselness;
    std::vector<double> skeleton;
};

struct PretrainLoss {
    ad::Tensor total;
    double intensity = 0.0;
    double vesselness = 0.0;
    double skeleton = 0.0;
};

PretrainLoss total_pretrain_loss(const PretrainOutput& out, const PatchTargets& targets, const MaskSelection& mask,
                                 const LossWeights& weights);

/// Linear warmup from 0 to peak, then half-cosine to the floor. `epoch` is a
/// fractional epoch count in [0, total_epochs].
double lr_at(double epoch, const LrSchedule& schedule);

inline constexpr double kDiceEps = 1e-6;

/// Positive-weighted pixel BCE (mean) plus soft Dice loss on sigmoid
/// probabilities. `target` values are 0/1, same length as the logits.
ad::Tensor seg_loss(const ad::Tensor& logits, const std::vector<double>& target, double pos_weight);

}  // namespace vamae
