#include "vamae/segmentation.hpp"

#include <bit>
#include <stdexcept>

namespace vamae {

SegHead::SegHead(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng) : grid_side_(cfg.grid_side()) {
    const int blocks = std::countr_zero(static_cast<unsigned>(cfg.patch_size));
    channels_.push_back(cfg.encoder_dim);
    for (int b = 0; b < blocks; ++b) channels_.push_back(std::max(1, channels_.back() / 2));
    for (int b = 0; b < blocks; ++b) {
        const int cin = channels_[b];
        const int cout = channels_[b + 1];
        const std::string name = "seg.up." + std::to_string(b);
        Block blk;
        blk.up_weight = params.create(name + ".deconv.weight", {cin, cout, 2, 2},
                                      he_normal(static_cast<std::size_t>(cin) * cout * 4, cin, rng), true);
        blk.up_bias = params.create(name + ".deconv.bias", {cout}, std::vector<double>(cout, 0.0), false);
        blk.conv_weight = params.create(name + ".conv.weight", {cout, cout, 3, 3},
                                        he_normal(static_cast<std::size_t>(cout) * cout * 9, cout * 9, rng), true);
        blk.conv_bias = params.create(name + ".conv.bias", {cout}, std::vector<double>(cout, 0.0), false);
        blocks_.push_back(std::move(blk));
    }
    const int last = channels_.back();
    out_weight_ = params.create("seg.out.weight", {1, last, 1, 1}, he_normal(last, last, rng), true);
    out_bias_ = params.create("seg.out.bias", {1}, {0.0}, false);
}

ad::Tensor SegHead::operator()(const ad::Tensor& tokens) const {
    if (tokens.rows() != grid_side_ * grid_side_ || tokens.cols() != channels_.front()) {
        throw ad::ShapeError("seg head expects " + std::to_string(grid_side_ * grid_side_) + " tokens of width " +
                             std::to_string(channels_.front()));
    }
    // [N, C] -> [C, rows, cols]
    ad::Tensor x = ad::reshape(ad::transpose(tokens), {channels_.front(), grid_side_, grid_side_});
    for (const auto& b : blocks_) {
        x = ad::conv_transpose2x2(x, b.up_weight, b.up_bias);
        x = ad::relu(ad::conv2d(x, b.conv_weight, b.conv_bias, 1));
    }
    return ad::conv2d(x, out_weight_, out_bias_, 0);
}

SegmentationModel::SegmentationModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), encoder_(params_, cfg, rng_), head_(params_, cfg, rng_) {}

ad::Tensor seg_forward(const ad::Tensor& patches, const SegmentationModel& model) {
    const auto& cfg = model.config();
    auto tokens = model.encoder()(patches, no_mask(cfg.patch_count()));
    return model.head()(tokens);
}

ad::Tensor seg_forward(const GrayImage& image, const SegmentationModel& model) {
    const auto& cfg = model.config();
    if (image.height() != cfg.image_size || image.width() != cfg.image_size) {
        throw DimensionError("seg_forward: image is " + std::to_string(image.height()) + "x" +
                             std::to_string(image.width()) + " but the model expects " +
                             std::to_string(cfg.image_size));
    }
    auto patches = ad::Tensor::constant({cfg.patch_count(), cfg.patch_area()}, patchify_flat(image, cfg.grid()));
    return seg_forward(patches, model);
}

BinaryImage predict_mask(const GrayImage& image, const SegmentationModel& model) {
    ad::NoGradGuard no_grad;
    auto logits = seg_forward(image, model);
    std::vector<std::uint8_t> px(logits.size());
    auto v = logits.value();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = v[i] > 0.0 ? 1 : 0;
    return BinaryImage(image.height(), image.width(), std::move(px));
}

namespace {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0;
};

Confusion confusion(const BinaryImage& pred, const BinaryImage& target) {
    if (!pred.same_shape(target)) throw DimensionError("metric: prediction and target differ in size");
    Confusion c;
    auto p = pred.pixels();
    auto t = target.pixels();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] && t[i]) ++c.tp;
        else if (p[i]) ++c.fp;
        else if (t[i]) ++c.fn;
    }
    return c;
}

}  // namespace

double dice(const BinaryImage& pred, const BinaryImage& target) {
    const auto c = confusion(pred, target);
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * c.tp / static_cast<double>(denom);
}

double iou(const BinaryImage& pred, const BinaryImage& target) {
    const auto c = confusion(pred, target);
    const std::size_t uni = c.tp + c.fp + c.fn;
    return uni == 0 ? 1.0 : c.tp / static_cast<double>(uni);
}

double precision(const BinaryImage& pred, const BinaryImage& target) {
    const auto c = confusion(pred, target);
    if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
    return c.tp / static_cast<double>(c.tp + c.fp);
}

double recall(const BinaryImage& pred, const BinaryImage& target) {
    const auto c = confusion(pred, target);
    if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
    return c.tp / static_cast<double>(c.tp + c.fn);
}

SegMetrics segmentation_metrics(const BinaryImage& pred, const BinaryImage& target) {
    return {dice(pred, target), iou(pred, target), precision(pred, target), recall(pred, target)};
}

}  // namespace vamae
