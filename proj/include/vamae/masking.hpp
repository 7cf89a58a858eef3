#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vamae/image.hpp"

namespace vamae {

using Rng = std::mt19937_64;

struct MaskSelection {
    /// Sorted ascending.
    std::vector<int> masked_indices;
    double ratio = 0.0;
    int patch_count = 0;

    int k() const { return static_cast<int>(masked_indices.size()); }
    std::vector<int> visible_indices() const;
    std::vector<std::uint8_t> as_flags() const;
};

struct PatchScores {
    std::vector<double> density;
    std::vector<double> skeleton_presence;
    std::vector<double> hybrid;
    double alpha = 0.6;
};

struct CurriculumStage {
    int start_epoch = 1;
    int end_epoch = 1;
    double ratio = 0.75;
};

class CurriculumSchedule {
public:
    CurriculumSchedule() = default;
    explicit CurriculumSchedule(std::vector<CurriculumStage> stages);

    /// 50% (1-20), 65% (21-50), 75% (51-300).
    static CurriculumSchedule standard();
    /// Constant ratio over [1, total_epochs].
    static CurriculumSchedule constant(double ratio, int total_epochs);

    /// Stretches or compresses the stage boundaries proportionally onto
    /// [1, total_epochs], keeping every stage at least one epoch long.
    CurriculumSchedule rescaled(int total_epochs) const;

    double ratio_at(int epoch) const;
    int total_epochs() const { return stages_.empty() ? 0 : stages_.back().end_epoch; }
    const std::vector<CurriculumStage>& stages() const { return stages_; }

    /// "1-20:0.50,21-50:0.65,51-300:0.75"
    static CurriculumSchedule parse(const std::string& text);
    std::string to_string() const;

private:
    std::vector<CurriculumStage> stages_;
};

std::vector<double> patch_density(const GrayImage& vesselness, const PatchGrid& grid);
std::vector<double> patch_skeleton_presence(const BinaryImage& skeleton, const PatchGrid& grid);

/// w_i = alpha (0.5 d_i + 0.5 s_i) + (1 - alpha) eps_i with eps_i ~ U(0,1)
/// drawn fresh from `rng` for every patch.
std::vector<double> hybrid_scores(const std::vector<double>& density, const std::vector<double>& skeleton,
                                  double alpha, Rng& rng);
/// Same blend with caller-supplied noise.
std::vector<double> hybrid_scores(const std::vector<double>& density, const std::vector<double>& skeleton,
                                  double alpha, const std::vector<double>& noise);

int masked_count(double ratio, int patch_count);

/// Indices of the round(ratio N) largest scores, ties to the lower index.
MaskSelection select_mask(const std::vector<double>& scores, double ratio);

double curriculum_ratio(int epoch, const CurriculumSchedule& schedule);

PatchScores score_patches(const GrayImage& vesselness, const BinaryImage& skeleton, const PatchGrid& grid,
                          double alpha, Rng& rng);

}  // namespace vamae
