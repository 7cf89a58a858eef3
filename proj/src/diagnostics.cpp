#include "vamae/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vamae/manifest.hpp"
#include "vamae/stats.hpp"

namespace vamae {

using nlohmann::json;

double patch_histogram_entropy(const GrayImage& img, const PatchGrid& grid, int index) {
    if (index < 0 || index >= grid.patch_count()) throw std::out_of_range("patch index out of range");
    if (img.height() != grid.height() || img.width() != grid.width())
        throw DimensionError("patch_entropy: image does not match the grid");
    std::array<int, 16> hist{};
    const int p = grid.patch_size;
    const int y0 = (index / grid.cols) * p, x0 = (index % grid.cols) * p;
    for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx) {
            const double v = std::clamp(img(y0 + dy, x0 + dx), 0.0, 1.0);
            ++hist[std::min(15, static_cast<int>(v * 16.0))];
        }
    const double n = static_cast<double>(p) * p;
    double h = 0.0;
    for (int c : hist)
        if (c > 0) h -= (c / n) * std::log2(c / n);
    return std::max(0.0, h);
}

double patch_entropy(const GrayImage& img, const PatchGrid& grid, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("patch_entropy: empty patch selection");
    double s = 0.0;
    for (int i : indices) s += patch_histogram_entropy(img, grid, i);
    return s / static_cast<double>(indices.size());
}

std::vector<std::uint8_t> vessel_patches(const BinaryImage& vessel_mask, const PatchGrid& grid) {
    if (vessel_mask.height() != grid.height() || vessel_mask.width() != grid.width())
        throw DimensionError("vessel_patches: mask does not match the grid");
    std::vector<std::uint8_t> out(grid.patch_count(), 0);
    const int p = grid.patch_size;
    for (int i = 0; i < grid.patch_count(); ++i) {
        const int y0 = (i / grid.cols) * p, x0 = (i % grid.cols) * p;
        for (int dy = 0; dy < p && !out[i]; ++dy)
            for (int dx = 0; dx < p; ++dx)
                if (vessel_mask(y0 + dy, x0 + dx)) {
                    out[i] = 1;
                    break;
                }
    }
    return out;
}

const StrategyStats& EntropyReport::at(double alpha) const {
    for (const auto& s : strategies)
        if (s.alpha == alpha) return s;
    throw std::out_of_range("no strategy with alpha " + std::to_string(alpha));
}

std::string EntropyReport::table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "mask ratio %.2f | all patches: entropy %.4f bits, vessel fraction %.4f\n",
                  mask_ratio, mean_patch_entropy, vessel_patch_fraction);
    os << buf << "alpha\tmasked_entropy_bits\tvessel_fraction_masked\n";
    for (const auto& s : strategies) {
        std::snprintf(buf, sizeof buf, "%.2f\t%.4f\t%.4f\n", s.alpha, s.mean_masked_entropy, s.vessel_fraction_masked);
        os << buf;
    }
    return os.str();
}

json EntropyReport::to_json() const {
    json j{{"mask_ratio", mask_ratio}, {"mean_patch_entropy", mean_patch_entropy},
           {"vessel_patch_fraction", vessel_patch_fraction}, {"strategies", json::array()}};
    for (const auto& s : strategies)
        j["strategies"].push_back({{"alpha", s.alpha},
                                   {"mean_masked_entropy", s.mean_masked_entropy},
                                   {"vessel_fraction_masked", s.vessel_fraction_masked}});
    return j;
}

EntropyReport masking_diagnostic(const std::vector<StructureTriplet>& data, const std::vector<double>& alphas,
                                 const DiagnosticOptions& opts) {
    if (data.empty()) throw std::invalid_argument("masking_diagnostic: empty dataset");
    if (alphas.empty()) throw std::invalid_argument("masking_diagnostic: no strategies");
    if (opts.draws < 1) throw std::invalid_argument("masking_diagnostic: draws must be >= 1");
    for (double a : alphas)
        if (a < 0.0 || a > 1.0) throw std::invalid_argument("masking_diagnostic: alpha outside [0,1]");

    EntropyReport rep;
    rep.mask_ratio = opts.mask_ratio;
    std::vector<double> ent(alphas.size(), 0.0), frac(alphas.size(), 0.0);
    Rng rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double all_entropy = 0.0, all_vessel = 0.0;
    for (const auto& t : data) {
        const auto grid = PatchGrid::for_image(t.intensity.height(), t.intensity.width(), opts.patch_size);
        const int n = grid.patch_count();
        const auto d = patch_density(t.vesselness, grid);
        const auto s = patch_skeleton_presence(t.skeleton, grid);
        const auto vp = vessel_patches(t.vessel_mask, grid);
        std::vector<double> per_patch(n);
        for (int i = 0; i < n; ++i) per_patch[i] = patch_histogram_entropy(t.intensity, grid, i);
        double e_all = 0.0;
        for (double e : per_patch) e_all += e;
        all_entropy += e_all / n;
        all_vessel += static_cast<double>(std::count(vp.begin(), vp.end(), 1)) / n;

        for (int draw = 0; draw < opts.draws; ++draw) {
            std::vector<double> noise(n);
            for (auto& v : noise) v = unit(rng);
            for (std::size_t a = 0; a < alphas.size(); ++a) {
                const auto mask = select_mask(hybrid_scores(d, s, alphas[a], noise), opts.mask_ratio);
                if (mask.k() == 0) throw std::invalid_argument("masking_diagnostic: mask ratio selects no patches");
                double e = 0.0, v = 0.0;
                for (int i : mask.masked_indices) {
                    e += per_patch[i];
                    v += vp[i];
                }
                ent[a] += e / mask.k();
                frac[a] += v / mask.k();
            }
        }
    }
    const double total = static_cast<double>(data.size()) * opts.draws;
    for (std::size_t a = 0; a < alphas.size(); ++a) rep.strategies.push_back({alphas[a], ent[a] / total, frac[a] / total});
    rep.mean_patch_entropy = all_entropy / data.size();
    rep.vessel_patch_fraction = all_vessel / data.size();
    return rep;
}

AblationSuite parse_suite(const std::string& name) {
    if (name == "alpha" || name == "alpha-sweep") return AblationSuite::AlphaSweep;
    if (name == "targets" || name == "target-ablation") return AblationSuite::TargetAblation;
    throw std::invalid_argument("unknown ablation suite '" + name + "' (expected alpha-sweep or target-ablation)");
}

LossWeights target_weights(bool vesselness, bool skeleton) {
    const LossWeights d;
    LossWeights w{d.intensity, vesselness ? d.vesselness : 0.0, skeleton ? d.skeleton : 0.0};
    const double s = w.intensity + w.vesselness + w.skeleton;
    return {w.intensity / s, w.vesselness / s, w.skeleton / s};
}

std::vector<ExperimentSpec> ablation_specs(AblationSuite suite) {
    const LossWeights full;
    if (suite == AblationSuite::AlphaSweep) {
        return {{"Pure random (baseline)", 0.0, full},
                {"Moderate vessel bias", 0.4, full},
                {"Balanced", 0.6, full},
                {"Strong vessel bias", 0.8, full},
                {"Deterministic vessel-only", 1.0, full}};
    }
    return {{"Random masking (baseline)", 0.0, target_weights(false, false)},
            {"Hybrid + I+V+S", 0.6, full},
            {"- Skeleton target (I+V)", 0.6, target_weights(true, false)},
            {"- Vesselness target (I+S)", 0.6, target_weights(false, true)},
            {"- Both V&S (I only)", 0.6, target_weights(false, false)}};
}

ExperimentSettings ExperimentSettings::desk() {
    ExperimentSettings s;
    s.pretrain.schedule.peak_lr = 1e-3;
    s.finetune.stage1_lr = 3e-3;
    s.finetune.stage2_lr = 3e-4;
    return s;
}

void ExperimentSettings::validate() const {
    data.validate();
    model.validate();
    pretrain.validate();
    finetune.validate();
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw std::invalid_argument("label fraction must lie in (0,1]");
    if (data.image_size != model.image_size)
        throw std::invalid_argument("data.image_size " + std::to_string(data.image_size) +
                                    " differs from model.image_size " + std::to_string(model.image_size));
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
}

PreparedData prepare_data(const ExperimentSettings& settings) {
    PreparedData d;
    d.samples = generate_synthetic(settings.data);
    d.triplets.reserve(d.samples.size());
    for (const auto& s : d.samples) d.triplets.push_back(extract_structure(s.image));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < d.samples.size(); ++i) ids.push_back(sample_id(static_cast<int>(i)));
    d.split = make_splits(ids, settings.ratios, 1.0, settings.split_seed);
    return d;
}

namespace {

json weights_json(const LossWeights& w) { return {w.intensity, w.vesselness, w.skeleton}; }

json adam_json(const AdamConfig& a) { return {a.beta1, a.beta2, a.eps, a.weight_decay}; }

std::string fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int index_of(const std::string& id) { return std::stoi(id.substr(id.find('_') + 1)); }

}  // namespace

std::string cell_key(const ExperimentSpec& spec, std::uint64_t seed, const ExperimentSettings& s) {
    const auto& p = s.pretrain;
    const auto& f = s.finetune;
    const auto& a = f.augment_params;
    json j{{"alpha", spec.alpha},
           {"weights", weights_json(spec.weights)},
           {"model", to_json(s.model)},
           {"pretrain",
            {p.epochs, p.batch_size, adam_json(p.optimizer), p.schedule.warmup_epochs, p.schedule.peak_lr,
             p.schedule.total_epochs, p.schedule.floor, p.curriculum.to_string(), p.ratio_override.value_or(-1.0)}},
           {"finetune",
            {f.stage1_epochs, f.stage1_lr, f.stage2_epochs, f.stage2_lr, f.batch_size, f.pos_weight, f.augment,
             adam_json(f.optimizer), a.flip_probability, a.max_rotation_deg, a.elastic_probability, a.elastic_sigma,
             a.elastic_magnitude}},
           {"data",
            {s.data.image_size, s.data.n_images, s.data.min_vessels, s.data.max_vessels, s.data.min_radius,
             s.data.max_radius, s.data.branch_probability, s.data.background_noise_std, s.data.background_level,
             s.data.min_contrast, s.data.max_contrast, s.data.blur_sigma, s.data.seed}},
           {"split", {s.ratios.train, s.ratios.val, s.ratios.test, s.label_fraction, s.split_seed}}};
    return fnv1a(j.dump()) + "_s" + std::to_string(seed);
}

json CellResult::to_json() const {
    json j{{"label", label}, {"seed", seed}, {"ok", ok}, {"seconds", seconds}};
    if (ok) {
        j["test_dice"] = test_dice;
        j["per_image_dice"] = per_image_dice;
        j["best_val_dice"] = best_val_dice;
    } else {
        j["error"] = error;
    }
    return j;
}

CellResult run_cell(const ExperimentSpec& spec, std::uint64_t seed, const ExperimentSettings& settings,
                    const PreparedData& data) {
    const auto t0 = std::chrono::steady_clock::now();
    CellResult r;
    r.label = spec.label;
    r.seed = seed;
    std::optional<std::filesystem::path> cache;
    try {
        if (settings.cache_dir) {
            cache = *settings.cache_dir / ("cell_" + cell_key(spec, seed, settings) + ".json");
            if (std::filesystem::exists(*cache)) {
                std::ifstream in(*cache);
                const json j = json::parse(in);
                r.ok = true;
                r.cached = true;
                r.test_dice = j.at("test_dice").get<double>();
                r.per_image_dice = j.at("per_image_dice").get<std::vector<double>>();
                r.best_val_dice = j.at("best_val_dice").get<double>();
                r.seconds = j.at("seconds").get<double>();
                return r;
            }
        }
        PretrainConfig pc = settings.pretrain;
        pc.alpha = spec.alpha;
        pc.weights = spec.weights;
        pc.seed = seed;
        std::vector<StructureTriplet> pre;
        for (const auto* ids : {&data.split.train, &data.split.val})
            for (const auto& id : *ids) pre.push_back(data.triplets.at(index_of(id)));
        VamaeModel mae(settings.model, seed);
        pretrain(mae, pre, pc);

        SegmentationModel seg(settings.model, seed);
        seg.load_encoder(mae.parameters().state("encoder."));
        auto split = with_label_fraction(data.split, settings.label_fraction, seed);
        auto pick = [&](const std::vector<std::string>& ids) {
            std::vector<LabeledImage> out;
            for (const auto& id : ids) {
                const auto& s = data.samples.at(index_of(id));
                out.push_back({id, s.image, s.label});
            }
            return out;
        };
        FinetuneConfig fc = settings.finetune;
        fc.seed = seed;
        auto fr = finetune(seg, pick(split.labeled), pick(split.val), fc);
        for (const auto& m : evaluate(seg, pick(split.test))) r.per_image_dice.push_back(m.dice);
        r.test_dice = stats::mean(r.per_image_dice);
        r.best_val_dice = fr.best_val_dice;
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.ok && cache) {
        std::filesystem::create_directories(cache->parent_path());
        std::ofstream(*cache) << r.to_json().dump(2) << "\n";
    }
    return r;
}

const ExperimentRow& ExperimentReport::row(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return r;
    throw std::out_of_range("no experiment row '" + label + "'");
}

namespace {

std::string targets_of(const LossWeights& w) {
    std::string t = w.intensity > 0 ? "I" : "";
    if (w.vesselness > 0) t += t.empty() ? "V" : "+V";
    if (w.skeleton > 0) t += t.empty() ? "S" : "+S";
    return t;
}

}  // namespace

std::string ExperimentReport::table() const {
    std::ostringstream os;
    os << "configuration\talpha\ttargets\tdice_pct\tdelta_vs_baseline\tp_value\tcohens_d\tn\tfailed\n";
    const int comparisons = std::max<int>(1, static_cast<int>(rows.size()) - 1);
    char buf[256];
    for (const auto& r : rows) {
        std::string dice = "n/a", delta = "n/a", p = "--", d = "--";
        if (!r.dice.empty()) {
            std::snprintf(buf, sizeof buf, "%.1f+-%.1f", 100 * r.mean, 100 * r.std);
            dice = buf;
            std::snprintf(buf, sizeof buf, "%+.1f", 100 * r.delta);
            delta = buf;
        }
        if (r.p_value) {
            std::snprintf(buf, sizeof buf, "%.4f%s", *r.p_value,
                          stats::bonferroni_significant(*r.p_value, comparisons, bonferroni_alpha) ? "*" : "");
            p = buf;
        }
        if (r.cohens_d) {
            std::snprintf(buf, sizeof buf, "%.2f", *r.cohens_d);
            d = buf;
        }
        std::snprintf(buf, sizeof buf, "%.2f", r.alpha);
        os << r.label << "\t" << buf << "\t" << targets_of(r.weights) << "\t" << dice << "\t" << delta << "\t" << p
           << "\t" << d << "\t" << r.dice.size() << "\t" << r.failed << "\n";
    }
    std::snprintf(buf, sizeof buf, "* p < %.3g after Bonferroni correction over %d comparisons\n",
                  bonferroni_alpha / comparisons, comparisons);
    os << buf;
    return os.str();
}

json ExperimentReport::to_json() const {
    json j{{"bonferroni_alpha", bonferroni_alpha}, {"rows", json::array()}, {"cells", json::array()}};
    for (const auto& r : rows) {
        json row{{"label", r.label}, {"alpha", r.alpha}, {"weights", weights_json(r.weights)},
                 {"baseline", r.baseline}, {"seeds", r.seeds}, {"dice", r.dice},
                 {"mean", r.mean}, {"std", r.std}, {"delta", r.delta}, {"failed", r.failed}};
        row["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
        row["cohens_d"] = r.cohens_d ? json(*r.cohens_d) : json(nullptr);
        j["rows"].push_back(row);
    }
    for (const auto& c : cells) j["cells"].push_back(c.to_json());
    return j;
}

ExperimentReport run_experiments(const std::vector<ExperimentSpec>& specs, const ExperimentSettings& settings,
                                 const ProgressFn& progress) {
    settings.validate();
    if (specs.empty()) throw std::invalid_argument("run_experiments: no configurations");
    for (const auto& s : specs) s.weights.validate();
    const PreparedData data = prepare_data(settings);

    ExperimentReport rep;
    std::vector<std::map<std::uint64_t, double>> by_seed(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        ExperimentRow row;
        row.label = specs[i].label;
        row.alpha = specs[i].alpha;
        row.weights = specs[i].weights;
        row.baseline = i == 0;
        for (auto seed : settings.seeds) {
            auto cell = run_cell(specs[i], seed, settings, data);
            if (progress) progress(cell);
            if (cell.ok) {
                row.seeds.push_back(seed);
                row.dice.push_back(cell.test_dice);
                by_seed[i][seed] = cell.test_dice;
            } else {
                ++row.failed;
            }
            rep.cells.push_back(std::move(cell));
        }
        if (!row.dice.empty()) {
            row.mean = stats::mean(row.dice);
            row.std = stats::stddev(row.dice);
        }
        rep.rows.push_back(std::move(row));
    }

    const auto& base = rep.rows.front();
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        auto& row = rep.rows[i];
        if (row.dice.empty() || base.dice.empty()) continue;
        row.delta = row.mean - base.mean;
        if (i == 0) continue;
        std::vector<double> a, b;
        for (const auto& [seed, v] : by_seed[i]) {
            auto it = by_seed[0].find(seed);
            if (it == by_seed[0].end()) continue;
            a.push_back(v);
            b.push_back(it->second);
        }
        if (a.size() >= 2) {
            row.p_value = stats::paired_t_test(a, b).p_value;
            try {
                row.cohens_d = stats::cohens_d(a, b);
            } catch (const std::domain_error&) {
            }
        }
    }
    return rep;
}

ExperimentReport run_ablation(AblationSuite suite, const ExperimentSettings& settings, const ProgressFn& progress) {
    return run_experiments(ablation_specs(suite), settings, progress);
}

}  // namespace vamae
