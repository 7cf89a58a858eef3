#include "vamae/objectives.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vamae {

void LossWeights::validate() const {
    if (intensity < 0.0 || vesselness < 0.0 || skeleton < 0.0) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
}

void LrSchedule::validate() const {
    if (!(peak_lr > 0.0)) throw std::invalid_argument("peak_lr must be positive");
    if (warmup_epochs < 0.0 || warmup_epochs >= total_epochs) {
        throw std::invalid_argument("warmup_epochs must lie in [0, total_epochs)");
    }
    if (floor < 0.0 || floor > peak_lr) throw std::invalid_argument("lr floor must lie in [0, peak_lr]");
}

namespace {

void check_masked_shapes(const ad::Tensor& pred, const std::vector<double>& target, const MaskSelection& mask,
                         const char* name) {
    if (mask.masked_indices.empty()) throw std::invalid_argument(std::string(name) + ": empty mask");
    if (pred.shape().size() != 2 || pred.rows() != mask.patch_count ||
        target.size() != pred.size()) {
        throw ad::ShapeError(std::string(name) + ": prediction/target/mask sizes disagree");
    }
}

}  // namespace

ad::Tensor masked_mse(const ad::Tensor& pred, const std::vector<double>& target, const MaskSelection& mask) {
    check_masked_shapes(pred, target, mask, "masked_mse");
    const int d = pred.cols();
    const auto rows = mask.masked_indices;
    auto pv = pred.value();
    double s = 0.0;
    for (int r : rows)
        for (int c = 0; c < d; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * d + c;
            s += (pv[i] - target[i]) * (pv[i] - target[i]);
        }
    const double inv = 1.0 / (static_cast<double>(rows.size()) * d);
    return ad::make_op({1}, {s * inv}, {pred}, [rows, d, inv, target](ad::Node& self) {
        const auto& pv = self.parents[0]->value;
        auto& g = self.parents[0]->grad_buffer();
        const double scale = 2.0 * inv * self.grad[0];
        for (int r : rows)
            for (int c = 0; c < d; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * d + c;
                g[i] += scale * (pv[i] - target[i]);
            }
    });
}

ad::Tensor masked_bce(const ad::Tensor& pred_logits, const std::vector<double>& target, const MaskSelection& mask) {
    check_masked_shapes(pred_logits, target, mask, "masked_bce");
    const int d = pred_logits.cols();
    const auto rows = mask.masked_indices;
    auto zv = pred_logits.value();
    double s = 0.0;
    for (int r : rows)
        for (int c = 0; c < d; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * d + c;
            const double t = target[i];
            if (t < 0.0 || t > 1.0) throw std::invalid_argument("masked_bce: targets must lie in [0,1]");
            s -= t * ad::log_sigmoid(zv[i]) + (1.0 - t) * ad::log_sigmoid(-zv[i]);
        }
    const double inv = 1.0 / (static_cast<double>(rows.size()) * d);
    return ad::make_op({1}, {s * inv}, {pred_logits}, [rows, d, inv, target](ad::Node& self) {
        const auto& zv = self.parents[0]->value;
        auto& g = self.parents[0]->grad_buffer();
        const double scale = inv * self.grad[0];
        for (int r : rows)
            for (int c = 0; c < d; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * d + c;
                g[i] += scale * (ad::sigmoid(zv[i]) - target[i]);
            }
    });
}

PretrainLoss total_pretrain_loss(const PretrainOutput& out, const PatchTargets& targets, const MaskSelection& mask,
                                 const LossWeights& weights) {
    weights.validate();
    auto li = masked_mse(out.pred_intensity, targets.intensity, mask);
    auto lv = masked_bce(out.pred_vesselness, targets.vesselness, mask);
    auto ls = masked_bce(out.pred_skeleton, targets.skeleton, mask);
    PretrainLoss loss;
    loss.intensity = li.item();
    loss.vesselness = lv.item();
    loss.skeleton = ls.item();
    loss.total = ad::add(ad::add(ad::scale(li, weights.intensity), ad::scale(lv, weights.vesselness)),
                         ad::scale(ls, weights.skeleton));
    return loss;
}

double lr_at(double epoch, const LrSchedule& s) {
    if (epoch <= 0.0) return 0.0;
    if (epoch < s.warmup_epochs) return s.peak_lr * epoch / s.warmup_epochs;
    const double span = s.total_epochs - s.warmup_epochs;
    const double progress = span > 0.0 ? std::min(1.0, (epoch - s.warmup_epochs) / span) : 1.0;
    return s.floor + (s.peak_lr - s.floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

ad::Tensor seg_loss(const ad::Tensor& logits, const std::vector<double>& target, double pos_weight) {
    if (!(pos_weight > 0.0)) throw std::invalid_argument("seg_loss: pos_weight must be positive");
    if (logits.size() != target.size()) throw ad::ShapeError("seg_loss: logits and target differ in size");
    const std::size_t n = target.size();
    auto zv = logits.value();
    auto prob = std::make_shared<std::vector<double>>(n);
    double bce = 0.0, inter = 0.0, psum = 0.0, tsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = target[i];
        (*prob)[i] = ad::sigmoid(zv[i]);
        bce -= pos_weight * t * ad::log_sigmoid(zv[i]) + (1.0 - t) * ad::log_sigmoid(-zv[i]);
        inter += (*prob)[i] * t;
        psum += (*prob)[i];
        tsum += t;
    }
    bce /= static_cast<double>(n);
    const double num = 2.0 * inter + kDiceEps;
    const double den = psum + tsum + kDiceEps;
    const double dice_loss = 1.0 - num / den;

    return ad::make_op({1}, {bce + dice_loss}, {logits}, [=](ad::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        const double up = self.grad[0];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = (*prob)[i];
            const double t = target[i];
            const double dbce = (pos_weight * t * (p - 1.0) + (1.0 - t) * p) * inv_n;
            const double ddice_dp = -(2.0 * t * den - num) / (den * den);
            g[i] += up * (dbce + ddice_dp * p * (1.0 - p));
        }
    });
}

}  // namespace vamae
