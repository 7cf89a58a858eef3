#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vamae/image.hpp"
#include "vamae/priors.hpp"

namespace vamae {

struct SynthConfig {
    int image_size = 64;
    int n_images = 200;
    int min_vessels = 3;
    int max_vessels = 5;
    /// Tube radius range in pixels.
    double min_radius = 0.7;
    double max_radius = 1.8;
    double branch_probability = 0.35;
    double background_noise_std = 0.04;
    double background_level = 0.08;
    double min_contrast = 0.55;
    double max_contrast = 0.9;
    double blur_sigma = 0.7;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Point {
    double y = 0.0;
    double x = 0.0;
};

/// Polyline centerline with a constant radius and brightness.
struct Tube {
    std::vector<Point> centerline;
    double radius = 1.0;
    double contrast = 1.0;
};

struct SyntheticSample {
    GrayImage image;
    BinaryImage label;
    std::vector<Tube> tubes;
};

double distance_to_polyline(const Point& p, const std::vector<Point>& line);

/// Pixels whose centre lies within `radius` of the centerline.
BinaryImage tube_support(const Tube& tube, int height, int width);
/// Anti-aliased coverage in [0,1]: clamp(radius + 0.5 - distance, 0, 1).
GrayImage tube_coverage(const Tube& tube, int height, int width);

/// Renders tubes over the background, blurs, adds noise and clamps. The
/// label is the union of tube supports computed before blur and noise.
SyntheticSample render_tubes(std::vector<Tube> tubes, int size, const SynthConfig& cfg, std::mt19937_64& rng);

/// Image `index` of a dataset depends only on (cfg.seed, index).
SyntheticSample generate_one(const SynthConfig& cfg, int index);
std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg);

struct SplitRatios {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    /// Subset of `train` whose labels are used for fine-tuning.
    std::vector<std::string> labeled;
    double label_fraction = 1.0;
};

class EmptySplitError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

DatasetSplit make_splits(const std::vector<std::string>& ids, const SplitRatios& ratios, double label_fraction,
                         std::uint64_t seed);
/// Re-draws the labeled subset of an existing split.
DatasetSplit with_label_fraction(const DatasetSplit& split, double label_fraction, std::uint64_t seed);

std::string sample_id(int index);

/// images/<id>.png, labels/<id>.png, splits.txt.
void write_dataset(const std::filesystem::path& root, const std::vector<SyntheticSample>& samples,
                   const DatasetSplit& split);
void write_splits(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_splits(const std::filesystem::path& path);

/// priors/<id>_V.png, <id>_Vbin.png, <id>_S.png
void write_priors(const std::filesystem::path& root, const std::string& id, const StructureTriplet& t);
StructureTriplet read_priors(const std::filesystem::path& root, const std::string& id);

std::vector<std::string> list_image_ids(const std::filesystem::path& root);

struct LabeledImage {
    std::string id;
    GrayImage image;
    BinaryImage label;
};
std::vector<LabeledImage> load_labeled(const std::filesystem::path& root, const std::vector<std::string>& ids);

}  // namespace vamae
