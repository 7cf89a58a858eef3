#include "vamae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vamae/manifest.hpp"

namespace vamae {

using nlohmann::json;

void PretrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train.epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be at least 1");
    schedule.validate();
    if (schedule.total_epochs != epochs) throw std::invalid_argument("sched total epochs must equal train.epochs");
    if (schedule.warmup_epochs > epochs) throw std::invalid_argument("train.epochs must be >= sched.warmup_epochs");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mask.alpha must lie in [0,1]");
    weights.validate();
    optimizer.validate();
    if (ratio_override) {
        if (!(*ratio_override > 0.0 && *ratio_override < 1.0))
            throw std::invalid_argument("mask.ratio_override must lie in (0,1)");
    } else if (curriculum.total_epochs() < epochs) {
        throw std::invalid_argument("mask.curriculum covers " + std::to_string(curriculum.total_epochs()) +
                                    " epochs but training runs " + std::to_string(epochs));
    }
    if (checkpoint_interval < 0) throw std::invalid_argument("train.checkpoint_interval must be non-negative");
}

double PretrainConfig::ratio_at(int epoch) const {
    return ratio_override ? *ratio_override : curriculum_ratio(epoch, curriculum);
}

namespace {

struct Prepared {
    ad::Tensor patches;
    PatchTargets targets;
    std::vector<double> density;
    std::vector<double> skeleton;
};

std::vector<double> flat(const GrayImage& img, const PatchGrid& grid) { return patchify_flat(img, grid); }

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void emit(const TrainHooks& hooks, const std::string& file, const std::string& line) {
    if (hooks.log_line) hooks.log_line(line);
    if (hooks.out_dir) {
        std::ofstream out(*hooks.out_dir / file, std::ios::app);
        out << line << "\n";
    }
}

[[noreturn]] void abort_nan(const TrainHooks& hooks, const json& diag) {
    if (hooks.out_dir) {
        std::ofstream out(*hooks.out_dir / "nan_dump.json");
        out << diag.dump(2) << "\n";
    }
    throw TrainingError("non-finite loss: " + diag.dump());
}

}  // namespace

std::string pretrain_manifest(const VamaeModel& model, const PretrainConfig& cfg, int epoch) {
    json j;
    j["kind"] = "pretrain";
    j["model"] = to_json(model.config());
    j["epoch"] = epoch;
    j["seed"] = cfg.seed;
    j["alpha"] = cfg.alpha;
    j["weights"] = {cfg.weights.intensity, cfg.weights.vesselness, cfg.weights.skeleton};
    j["curriculum"] = cfg.curriculum.to_string();
    return j.dump();
}

std::vector<PretrainEpochLog> pretrain(VamaeModel& model, const std::vector<StructureTriplet>& data,
                                       const PretrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("pretrain: empty dataset");
    const auto& mc = model.config();
    const auto grid = mc.grid();
    const int n_patches = mc.patch_count();

    std::vector<Prepared> prepared;
    prepared.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& t = data[i];
        t.validate();
        if (t.intensity.height() != mc.image_size || t.intensity.width() != mc.image_size) {
            throw DimensionError("pretrain: image " + std::to_string(i) + " is " + std::to_string(t.intensity.height()) +
                                 "x" + std::to_string(t.intensity.width()) + " but the model expects " +
                                 std::to_string(mc.image_size));
        }
        Prepared p;
        auto iflat = flat(t.intensity, grid);
        p.patches = ad::Tensor::constant({n_patches, mc.patch_area()}, iflat);
        p.targets.intensity = std::move(iflat);
        p.targets.vesselness = flat(t.vesselness, grid);
        p.targets.skeleton = flat(t.skeleton.to_gray(), grid);
        p.density = patch_density(t.vesselness, grid);
        p.skeleton = patch_skeleton_presence(t.skeleton, grid);
        prepared.push_back(std::move(p));
    }

    Rng rng(cfg.seed);
    Adam opt(model.parameters().all(), cfg.optimizer);
    const int n = static_cast<int>(prepared.size());
    const int steps = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (hooks.out_dir) {
        std::filesystem::create_directories(*hooks.out_dir);
        std::filesystem::remove(*hooks.out_dir / "pretrain_log.jsonl");
    }

    std::vector<PretrainEpochLog> log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double ratio = cfg.ratio_at(epoch);
        const int expected_k = masked_count(ratio, n_patches);
        std::shuffle(order.begin(), order.end(), rng);
        PretrainEpochLog e;
        e.epoch = epoch;
        e.mask_ratio = ratio;
        e.masked_patches = expected_k;
        for (int b = 0; b < steps; ++b) {
            const double lr = lr_at((epoch - 1) + static_cast<double>(b) / steps, cfg.schedule);
            const int lo = b * cfg.batch_size;
            const int hi = std::min(n, lo + cfg.batch_size);
            const double inv = 1.0 / (hi - lo);
            for (int j = lo; j < hi; ++j) {
                const auto& p = prepared[order[j]];
                const auto mask = select_mask(hybrid_scores(p.density, p.skeleton, cfg.alpha, rng), ratio);
                if (mask.k() != expected_k) throw std::logic_error("pretrain: mask size disagrees with the curriculum");
                auto loss = total_pretrain_loss(model.forward(p.patches, mask), p.targets, mask, cfg.weights);
                const double total = loss.total.item();
                if (!std::isfinite(total)) {
                    abort_nan(hooks, {{"epoch", epoch}, {"step", b}, {"image", order[j]}, {"lr", lr},
                                      {"intensity", loss.intensity}, {"vesselness", loss.vesselness},
                                      {"skeleton", loss.skeleton}});
                }
                ad::backward(ad::scale(loss.total, inv));
                e.total += total;
                e.intensity += loss.intensity;
                e.vesselness += loss.vesselness;
                e.skeleton += loss.skeleton;
            }
            opt.step(lr);
            opt.zero_grad();
            e.lr = lr;
        }
        e.total /= n;
        e.intensity /= n;
        e.vesselness /= n;
        e.skeleton /= n;
        log.push_back(e);

        json line{{"epoch", e.epoch},         {"loss", e.total},       {"l_intensity", e.intensity},
                  {"l_vesselness", e.vesselness}, {"l_skeleton", e.skeleton}, {"lr", e.lr},
                  {"mask_ratio", e.mask_ratio}};
        emit(hooks, "pretrain_log.jsonl", line.dump());

        if (hooks.out_dir && cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0) {
            std::ostringstream name;
            name << "pretrain_epoch_" << epoch << ".ckpt";
            auto manifest = json::parse(pretrain_manifest(model, cfg, epoch));
            manifest["rng_state"] = rng_state(rng);
            save_checkpoint(*hooks.out_dir / name.str(), {manifest.dump(), model.parameters().state()});
        }
    }
    if (hooks.out_dir) {
        auto manifest = json::parse(pretrain_manifest(model, cfg, cfg.epochs));
        manifest["rng_state"] = rng_state(rng);
        save_checkpoint(*hooks.out_dir / "pretrain_final.ckpt", {manifest.dump(), model.parameters().state()});
    }
    return log;
}

void FinetuneConfig::validate() const {
    if (stage1_epochs < 1 || stage2_epochs < 1) throw std::invalid_argument("finetune stage epochs must be >= 1");
    if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0)) throw std::invalid_argument("finetune learning rates must be positive");
    if (batch_size < 1) throw std::invalid_argument("finetune batch_size must be >= 1");
    if (!(pos_weight > 0.0)) throw std::invalid_argument("loss.pos_weight must be positive");
    augment_params.validate();
    optimizer.validate();
}

std::vector<SegMetrics> evaluate(const SegmentationModel& model, const std::vector<LabeledImage>& images) {
    std::vector<SegMetrics> out;
    out.reserve(images.size());
    for (const auto& s : images) out.push_back(segmentation_metrics(predict_mask(s.image, model), s.label));
    return out;
}

double mean_dice(const std::vector<SegMetrics>& m) {
    if (m.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : m) s += x.dice;
    return s / static_cast<double>(m.size());
}

FinetuneResult finetune(SegmentationModel& model, const std::vector<LabeledImage>& train,
                        const std::vector<LabeledImage>& val, const FinetuneConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("finetune: no labeled training images");
    if (val.empty()) throw std::invalid_argument("finetune: no validation images");
    const int size = model.config().image_size;
    for (const auto* set : {&train, &val})
        for (const auto& s : *set)
            if (s.image.height() != size || s.image.width() != size || !s.image.same_shape(s.label.to_gray()))
                throw DimensionError("finetune: image " + s.id + " does not match the model size " +
                                     std::to_string(size));

    Rng rng(cfg.seed);
    auto& params = model.parameters();
    params.set_requires_grad("encoder.", false);
    std::optional<Adam> opt;
    opt.emplace(params.with_prefix("seg."), cfg.optimizer);

    const int n = static_cast<int>(train.size());
    const int steps = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (hooks.out_dir) {
        std::filesystem::create_directories(*hooks.out_dir);
        std::filesystem::remove(*hooks.out_dir / "finetune_log.jsonl");
    }

    FinetuneResult res;
    StateDict best;
    for (int epoch = 1; epoch <= cfg.total_epochs(); ++epoch) {
        if (epoch == cfg.stage1_epochs + 1) {
            params.set_requires_grad("encoder.", true);
            opt.emplace(params.all(), cfg.optimizer);
        }
        const double lr = cfg.lr_of(epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (int b = 0; b < steps; ++b) {
            const int lo = b * cfg.batch_size;
            const int hi = std::min(n, lo + cfg.batch_size);
            const double inv = 1.0 / (hi - lo);
            for (int j = lo; j < hi; ++j) {
                const auto& s = train[order[j]];
                AugmentedPair pair = cfg.augment ? augment(s.image, s.label, cfg.augment_params, rng)
                                                 : AugmentedPair{s.image, s.label};
                std::vector<double> target(pair.mask.pixels().begin(), pair.mask.pixels().end());
                auto loss = seg_loss(seg_forward(pair.image, model), target, cfg.pos_weight);
                const double v = loss.item();
                if (!std::isfinite(v)) abort_nan(hooks, {{"epoch", epoch}, {"step", b}, {"image", s.id}, {"lr", lr}});
                ad::backward(ad::scale(loss, inv));
                loss_sum += v;
            }
            opt->step(lr);
            params.zero_grad();
        }
        FinetuneEpochLog e{epoch, cfg.stage_of(epoch), lr, loss_sum / n, mean_dice(evaluate(model, val))};
        res.log.push_back(e);
        if (e.val_dice > res.best_val_dice) {
            res.best_val_dice = e.val_dice;
            res.best_epoch = epoch;
            best = params.state();
        }
        json line{{"epoch", e.epoch}, {"stage", e.stage}, {"lr", e.lr}, {"loss", e.train_loss}, {"val_dice", e.val_dice}};
        emit(hooks, "finetune_log.jsonl", line.dump());
    }
    params.load(best);
    if (hooks.out_dir) {
        json manifest{{"kind", "segmentation"},
                      {"model", to_json(model.config())},
                      {"best_epoch", res.best_epoch},
                      {"best_val_dice", res.best_val_dice},
                      {"seed", cfg.seed},
                      {"rng_state", rng_state(rng)}};
        save_checkpoint(*hooks.out_dir / "finetune_best.ckpt", {manifest.dump(), params.state()});
    }
    return res;
}

}  // namespace vamae
