#pragma once

#include <string>
#include <vector>

#include "vamae/image.hpp"
#include "vamae/model.hpp"
#include "vamae/params.hpp"

namespace vamae {

/// log2(P) upsampling blocks (transposed conv k2/s2 -> 3x3 conv -> ReLU),
/// channels halving from encoder_dim, then a 1x1 projection to one logit map.
class SegHead {
public:
    SegHead(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

    /// tokens: [N, encoder_dim] in row-major grid order -> logits [1, H, W].
    ad::Tensor operator()(const ad::Tensor& tokens) const;

    int block_count() const { return static_cast<int>(blocks_.size()); }
    const std::vector<int>& channels() const { return channels_; }

private:
    struct Block {
        ad::Tensor up_weight, up_bias;
        ad::Tensor conv_weight, conv_bias;
    };
    int grid_side_ = 0;
    std::vector<int> channels_;
    std::vector<Block> blocks_;
    ad::Tensor out_weight_, out_bias_;
};

/// Pretrained encoder plus segmentation head. Encoder parameters are named
/// "encoder.*" so a pretraining checkpoint loads directly; head parameters "seg.*".
class SegmentationModel {
public:
    SegmentationModel(const ModelConfig& cfg, std::uint64_t seed);
    SegmentationModel(const SegmentationModel&) = delete;
    SegmentationModel& operator=(const SegmentationModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    const Encoder& encoder() const { return encoder_; }
    const SegHead& head() const { return head_; }

    void load_encoder(const StateDict& state) { params_.load(state, "encoder."); }

private:
    ModelConfig cfg_;
    ParameterSet params_;
    std::mt19937_64 rng_;
    Encoder encoder_;
    SegHead head_;
};

/// Full-visibility encoding followed by the segmentation head; [1, H, W] logits.
ad::Tensor seg_forward(const GrayImage& image, const SegmentationModel& model);
ad::Tensor seg_forward(const ad::Tensor& patches, const SegmentationModel& model);

/// Logit > 0.
BinaryImage predict_mask(const GrayImage& image, const SegmentationModel& model);

struct SegMetrics {
    double dice = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

double dice(const BinaryImage& pred, const BinaryImage& target);
double iou(const BinaryImage& pred, const BinaryImage& target);
double precision(const BinaryImage& pred, const BinaryImage& target);
double recall(const BinaryImage& pred, const BinaryImage& target);
SegMetrics segmentation_metrics(const BinaryImage& pred, const BinaryImage& target);

}  // namespace vamae
