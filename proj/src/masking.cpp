#include "vamae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vamae {

std::vector<int> MaskSelection::visible_indices() const {
    std::vector<int> out;
    out.reserve(patch_count - k());
    std::size_t j = 0;
    for (int i = 0; i < patch_count; ++i) {
        if (j < masked_indices.size() && masked_indices[j] == i) {
            ++j;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

std::vector<std::uint8_t> MaskSelection::as_flags() const {
    std::vector<std::uint8_t> flags(patch_count, 0);
    for (int i : masked_indices) flags[i] = 1;
    return flags;
}

CurriculumSchedule::CurriculumSchedule(std::vector<CurriculumStage> stages) : stages_(std::move(stages)) {
    if (stages_.empty()) throw std::invalid_argument("curriculum: no stages");
    int expected = 1;
    for (const auto& s : stages_) {
        if (s.start_epoch != expected || s.end_epoch < s.start_epoch) {
            throw std::invalid_argument("curriculum: stages must be contiguous from epoch 1");
        }
        if (!(s.ratio > 0.0 && s.ratio < 1.0)) throw std::invalid_argument("curriculum: ratios must lie in (0,1)");
        expected = s.end_epoch + 1;
    }
}

CurriculumSchedule CurriculumSchedule::standard() {
    return CurriculumSchedule({{1, 20, 0.50}, {21, 50, 0.65}, {51, 300, 0.75}});
}

CurriculumSchedule CurriculumSchedule::constant(double ratio, int total_epochs) {
    return CurriculumSchedule({{1, total_epochs, ratio}});
}

CurriculumSchedule CurriculumSchedule::rescaled(int total_epochs) const {
    const int old_total = this->total_epochs();
    const int n = static_cast<int>(stages_.size());
    if (total_epochs < n) throw std::invalid_argument("curriculum: fewer epochs than stages");
    if (total_epochs == old_total) return *this;
    std::vector<CurriculumStage> out;
    int start = 1;
    for (int i = 0; i < n; ++i) {
        int end = total_epochs;
        if (i + 1 < n) {
            end = static_cast<int>(std::lround(static_cast<double>(stages_[i].end_epoch) * total_epochs / old_total));
            end = std::max(end, start);
            end = std::min(end, total_epochs - (n - 1 - i));
        }
        out.push_back({start, end, stages_[i].ratio});
        start = end + 1;
    }
    return CurriculumSchedule(std::move(out));
}

double CurriculumSchedule::ratio_at(int epoch) const {
    if (stages_.empty() || epoch < 1 || epoch > total_epochs()) {
        throw std::out_of_range("curriculum: epoch " + std::to_string(epoch) + " outside [1, " +
                                std::to_string(total_epochs()) + "]");
    }
    for (const auto& s : stages_)
        if (epoch <= s.end_epoch) return s.ratio;
    return stages_.back().ratio;
}

CurriculumSchedule CurriculumSchedule::parse(const std::string& text) {
    std::vector<CurriculumStage> stages;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (item.empty()) continue;
        const auto dash = item.find('-');
        const auto colon = item.find(':');
        if (dash == std::string::npos || colon == std::string::npos || colon < dash) {
            throw std::invalid_argument("curriculum: expected start-end:ratio, got '" + item + "'");
        }
        CurriculumStage s;
        s.start_epoch = std::stoi(item.substr(0, dash));
        s.end_epoch = std::stoi(item.substr(dash + 1, colon - dash - 1));
        s.ratio = std::stod(item.substr(colon + 1));
        stages.push_back(s);
    }
    return CurriculumSchedule(std::move(stages));
}

std::string CurriculumSchedule::to_string() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (i) os << ',';
        os << stages_[i].start_epoch << '-' << stages_[i].end_epoch << ':' << stages_[i].ratio;
    }
    return os.str();
}

std::vector<double> patch_density(const GrayImage& vesselness, const PatchGrid& grid) {
    if (vesselness.height() != grid.height() || vesselness.width() != grid.width()) {
        throw DimensionError("patch_density: vesselness does not match the patch grid");
    }
    const int p = grid.patch_size;
    std::vector<double> d(grid.patch_count(), 0.0);
    for (int i = 0; i < grid.patch_count(); ++i) {
        const int y0 = (i / grid.cols) * p;
        const int x0 = (i % grid.cols) * p;
        double sum = 0.0;
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) sum += vesselness(y0 + dy, x0 + dx);
        d[i] = sum / grid.patch_area();
    }
    return d;
}

std::vector<double> patch_skeleton_presence(const BinaryImage& skeleton, const PatchGrid& grid) {
    if (skeleton.height() != grid.height() || skeleton.width() != grid.width()) {
        throw DimensionError("patch_skeleton_presence: skeleton does not match the patch grid");
    }
    const int p = grid.patch_size;
    std::vector<double> s(grid.patch_count(), 0.0);
    for (int i = 0; i < grid.patch_count(); ++i) {
        const int y0 = (i / grid.cols) * p;
        const int x0 = (i % grid.cols) * p;
        for (int dy = 0; dy < p && s[i] == 0.0; ++dy)
            for (int dx = 0; dx < p; ++dx)
                if (skeleton(y0 + dy, x0 + dx)) {
                    s[i] = 1.0;
                    break;
                }
    }
    return s;
}

std::vector<double> hybrid_scores(const std::vector<double>& density, const std::vector<double>& skeleton,
                                  double alpha, const std::vector<double>& noise) {
    if (density.size() != skeleton.size() || density.size() != noise.size()) {
        throw DimensionError("hybrid_scores: score vectors differ in length");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("hybrid_scores: alpha must lie in [0,1]");
    std::vector<double> w(density.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = alpha * (0.5 * density[i] + 0.5 * skeleton[i]) + (1.0 - alpha) * noise[i];
    }
    return w;
}

std::vector<double> hybrid_scores(const std::vector<double>& density, const std::vector<double>& skeleton,
                                  double alpha, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> noise(density.size());
    for (auto& e : noise) e = uniform(rng);
    return hybrid_scores(density, skeleton, alpha, noise);
}

int masked_count(double ratio, int patch_count) {
    return static_cast<int>(std::lround(ratio * patch_count));
}

MaskSelection select_mask(const std::vector<double>& scores, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("select_mask: ratio " + std::to_string(ratio) + " outside (0,1)");
    }
    const int n = static_cast<int>(scores.size());
    if (n < 2) throw std::invalid_argument("select_mask: need at least two patches");
    const int k = masked_count(ratio, n);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

    MaskSelection m;
    m.ratio = ratio;
    m.patch_count = n;
    m.masked_indices.assign(order.begin(), order.begin() + k);
    std::sort(m.masked_indices.begin(), m.masked_indices.end());
    return m;
}

double curriculum_ratio(int epoch, const CurriculumSchedule& schedule) { return schedule.ratio_at(epoch); }

PatchScores score_patches(const GrayImage& vesselness, const BinaryImage& skeleton, const PatchGrid& grid,
                          double alpha, Rng& rng) {
    PatchScores s;
    s.alpha = alpha;
    s.density = patch_density(vesselness, grid);
    s.skeleton_presence = patch_skeleton_presence(skeleton, grid);
    s.hybrid = hybrid_scores(s.density, s.skeleton_presence, alpha, rng);
    return s;
}

}  // namespace vamae
