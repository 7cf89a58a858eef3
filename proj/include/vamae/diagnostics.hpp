#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vamae/datakit.hpp"
#include "vamae/priors.hpp"
#include "vamae/trainer.hpp"

namespace vamae {

/// Shannon entropy in bits of a 16-bin histogram of one patch's pixels.
double patch_histogram_entropy(const GrayImage& img, const PatchGrid& grid, int index);
/// Mean of patch_histogram_entropy over `indices`. Throws on an empty selection.
double patch_entropy(const GrayImage& img, const PatchGrid& grid, const std::vector<int>& indices);

/// Patches containing at least one foreground pixel.
std::vector<std::uint8_t> vessel_patches(const BinaryImage& vessel_mask, const PatchGrid& grid);

struct StrategyStats {
    double alpha = 0.0;
    double mean_masked_entropy = 0.0;
    double vessel_fraction_masked = 0.0;
};

struct EntropyReport {
    std::vector<StrategyStats> strategies;
    /// Over all patches of the dataset.
    double mean_patch_entropy = 0.0;
    double vessel_patch_fraction = 0.0;
    double mask_ratio = 0.0;

    const StrategyStats& at(double alpha) const;
    std::string table() const;
    nlohmann::json to_json() const;
};

struct DiagnosticOptions {
    double mask_ratio = 0.75;
    std::uint64_t seed = 0;
    /// Masks drawn per image and strategy.
    int draws = 1;
    int patch_size = 8;
};

/// Every alpha sees the same noise draws, so strategies differ only in the vessel term.
EntropyReport masking_diagnostic(const std::vector<StructureTriplet>& data, const std::vector<double>& alphas,
                                 const DiagnosticOptions& opts = {});

struct ExperimentSpec {
    std::string label;
    double alpha = 0.6;
    LossWeights weights;
};

enum class AblationSuite { AlphaSweep, TargetAblation };

AblationSuite parse_suite(const std::string& name);
/// Baseline first.
std::vector<ExperimentSpec> ablation_specs(AblationSuite suite);
/// Default weights restricted to the chosen targets and renormalized to sum 1.
LossWeights target_weights(bool vesselness, bool skeleton);

struct ExperimentSettings {
    SynthConfig data;
    SplitRatios ratios;
    double label_fraction = 0.5;
    std::uint64_t split_seed = 0;
    ModelConfig model = ModelConfig::desk();
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::optional<std::filesystem::path> cache_dir;

    /// Desk protocol with learning rates raised for the short step budget.
    static ExperimentSettings desk();
    void validate() const;
};

struct PreparedData {
    std::vector<SyntheticSample> samples;
    std::vector<StructureTriplet> triplets;
    DatasetSplit split;
};
PreparedData prepare_data(const ExperimentSettings& settings);

struct CellResult {
    std::string label;
    std::uint64_t seed = 0;
    bool ok = false;
    bool cached = false;
    double test_dice = 0.0;
    std::vector<double> per_image_dice;
    double best_val_dice = 0.0;
    std::string error;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

/// Cache key of one (configuration, seed) cell.
std::string cell_key(const ExperimentSpec& spec, std::uint64_t seed, const ExperimentSettings& settings);

/// Pretrain on the non-test images, fine-tune on the labeled subset drawn by
/// `seed`, report mean per-image test Dice. Errors are captured, not thrown.
CellResult run_cell(const ExperimentSpec& spec, std::uint64_t seed, const ExperimentSettings& settings,
                    const PreparedData& data);

struct ExperimentRow {
    std::string label;
    double alpha = 0.0;
    LossWeights weights;
    bool baseline = false;
    /// Successful seeds, in settings order.
    std::vector<std::uint64_t> seeds;
    std::vector<double> dice;
    double mean = 0.0;
    double std = 0.0;
    double delta = 0.0;
    /// Paired over seeds that succeeded for both this row and the baseline.
    std::optional<double> p_value;
    std::optional<double> cohens_d;
    int failed = 0;
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    std::vector<CellResult> cells;
    double bonferroni_alpha = 0.01;

    const ExperimentRow& row(const std::string& label) const;
    std::string table() const;
    nlohmann::json to_json() const;
};

using ProgressFn = std::function<void(const CellResult&)>;

/// First spec is the baseline.
ExperimentReport run_experiments(const std::vector<ExperimentSpec>& specs, const ExperimentSettings& settings,
                                 const ProgressFn& progress = {});
ExperimentReport run_ablation(AblationSuite suite, const ExperimentSettings& settings, const ProgressFn& progress = {});

}  // namespace vamae
