#include "vamae/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace vamae {

void SynthConfig::validate() const {
    if (image_size < 8) throw std::invalid_argument("synth: image_size must be at least 8");
    if (n_images < 1) throw std::invalid_argument("synth: n_images must be positive");
    if (min_vessels < 1 || max_vessels < min_vessels) throw std::invalid_argument("synth: bad vessel count range");
    if (!(min_radius >= 0.5) || max_radius < min_radius) throw std::invalid_argument("synth: bad radius range");
    if (branch_probability < 0.0 || branch_probability > 1.0)
        throw std::invalid_argument("synth: branch_probability must lie in [0,1]");
    if (background_noise_std < 0.0) throw std::invalid_argument("synth: noise std must be non-negative");
    if (background_level < 0.0 || background_level + max_contrast > 1.0 || min_contrast <= 0.0 ||
        max_contrast < min_contrast) {
        throw std::invalid_argument("synth: background + contrast must stay within [0,1]");
    }
    if (blur_sigma < 0.0) throw std::invalid_argument("synth: blur_sigma must be non-negative");
}

double distance_to_polyline(const Point& p, const std::vector<Point>& line) {
    if (line.empty()) return std::numeric_limits<double>::infinity();
    double best = std::hypot(p.y - line[0].y, p.x - line[0].x);
    for (std::size_t i = 1; i < line.size(); ++i) {
        const Point& a = line[i - 1];
        const Point& b = line[i];
        const double vy = b.y - a.y, vx = b.x - a.x;
        const double len2 = vy * vy + vx * vx;
        double t = len2 > 0.0 ? ((p.y - a.y) * vy + (p.x - a.x) * vx) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        best = std::min(best, std::hypot(p.y - (a.y + t * vy), p.x - (a.x + t * vx)));
    }
    return best;
}

namespace {

struct Box {
    int y0, y1, x0, x1;
};

Box bounds(const Tube& tube, int height, int width, double pad) {
    double ymin = 1e9, ymax = -1e9, xmin = 1e9, xmax = -1e9;
    for (const auto& p : tube.centerline) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
    }
    return {std::max(0, static_cast<int>(std::floor(ymin - pad))),
            std::min(height - 1, static_cast<int>(std::ceil(ymax + pad))),
            std::max(0, static_cast<int>(std::floor(xmin - pad))),
            std::min(width - 1, static_cast<int>(std::ceil(xmax + pad)))};
}

std::vector<Point> random_walk(Point start, double heading, int steps, int size, std::mt19937_64& rng) {
    std::normal_distribution<double> turn(0.0, 0.06);
    const double margin = 2.0;
    const double lo = margin, hi = size - 1 - margin;
    std::vector<Point> line{start};
    double omega = 0.0;
    Point p = start;
    for (int s = 0; s < steps; ++s) {
        omega = 0.85 * omega + turn(rng);
        heading += omega;
        Point next{p.y + std::sin(heading), p.x + std::cos(heading)};
        if (next.y < lo || next.y > hi || next.x < lo || next.x > hi) {
            // Turn toward the centre rather than leaving the frame.
            heading = std::atan2(0.5 * size - p.y, 0.5 * size - p.x) + turn(rng) * 4.0;
            omega = 0.0;
            next = {std::clamp(p.y + std::sin(heading), lo, hi), std::clamp(p.x + std::cos(heading), lo, hi)};
        }
        p = next;
        line.push_back(p);
    }
    return line;
}

}  // namespace

BinaryImage tube_support(const Tube& tube, int height, int width) {
    BinaryImage m(height, width);
    const auto b = bounds(tube, height, width, tube.radius + 1.0);
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x)
            if (distance_to_polyline({static_cast<double>(y), static_cast<double>(x)}, tube.centerline) <= tube.radius)
                m(y, x) = 1;
    return m;
}

GrayImage tube_coverage(const Tube& tube, int height, int width) {
    GrayImage c(height, width, 0.0);
    const auto b = bounds(tube, height, width, tube.radius + 1.0);
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) {
            const double d = distance_to_polyline({static_cast<double>(y), static_cast<double>(x)}, tube.centerline);
            c(y, x) = std::clamp(tube.radius + 0.5 - d, 0.0, 1.0);
        }
    return c;
}

SyntheticSample render_tubes(std::vector<Tube> tubes, int size, const SynthConfig& cfg, std::mt19937_64& rng) {
    GrayImage signal(size, size, 0.0);
    BinaryImage label(size, size);
    for (const auto& t : tubes) {
        const auto cov = tube_coverage(t, size, size);
        const auto sup = tube_support(t, size, size);
        for (std::size_t i = 0; i < signal.size(); ++i) {
            signal.pixels()[i] = std::max(signal.pixels()[i], t.contrast * cov.pixels()[i]);
            if (sup.pixels()[i]) label.pixels()[i] = 1;
        }
    }
    if (cfg.blur_sigma > 0.0) signal = gaussian_blur(signal, cfg.blur_sigma);
    std::normal_distribution<double> noise(0.0, cfg.background_noise_std > 0.0 ? cfg.background_noise_std : 1.0);
    GrayImage image(size, size);
    for (std::size_t i = 0; i < image.size(); ++i) {
        double v = cfg.background_level + signal.pixels()[i];
        if (cfg.background_noise_std > 0.0) v += noise(rng);
        image.pixels()[i] = std::clamp(v, 0.0, 1.0);
    }
    return {std::move(image), std::move(label), std::move(tubes)};
}

SyntheticSample generate_one(const SynthConfig& cfg, int index) {
    cfg.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    const int size = cfg.image_size;
    std::uniform_int_distribution<int> count(cfg.min_vessels, cfg.max_vessels);
    std::uniform_real_distribution<double> pos(2.0, size - 3.0), angle(0.0, 2.0 * std::numbers::pi),
        radius(cfg.min_radius, cfg.max_radius), contrast(cfg.min_contrast, cfg.max_contrast), unit(0.0, 1.0);
    std::uniform_int_distribution<int> length(size * 2 / 3, size * 3 / 2);

    std::vector<Tube> tubes;
    const int n = count(rng);
    for (int v = 0; v < n; ++v) {
        Tube t;
        t.radius = radius(rng);
        t.contrast = contrast(rng);
        t.centerline = random_walk({pos(rng), pos(rng)}, angle(rng), length(rng), size, rng);
        tubes.push_back(t);
        if (unit(rng) < cfg.branch_probability) {
            Tube b;
            const auto& parent = tubes.back().centerline;
            const std::size_t at = static_cast<std::size_t>(unit(rng) * (parent.size() - 1));
            const std::size_t nxt = std::min(parent.size() - 1, at + 1);
            const double base = std::atan2(parent[nxt].y - parent[at].y, parent[nxt].x - parent[at].x);
            const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
            b.radius = std::max(cfg.min_radius, t.radius * (0.6 + 0.25 * unit(rng)));
            b.contrast = t.contrast * (0.8 + 0.2 * unit(rng));
            b.centerline = random_walk(parent[at], base + side * (0.5 + 0.5 * unit(rng)),
                                       static_cast<int>(parent.size() * (0.3 + 0.3 * unit(rng))), size, rng);
            tubes.push_back(b);
        }
    }
    return render_tubes(std::move(tubes), size, cfg, rng);
}

std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SyntheticSample> out;
    out.reserve(cfg.n_images);
    for (int i = 0; i < cfg.n_images; ++i) out.push_back(generate_one(cfg, i));
    return out;
}

namespace {

std::vector<std::string> draw_labeled(const std::vector<std::string>& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("label_fraction must lie in (0,1]");
    const auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(train.size())));
    if (k == 0) throw EmptySplitError("label_fraction leaves no labeled training images");
    auto pool = train;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

DatasetSplit make_splits(const std::vector<std::string>& ids, const SplitRatios& r, double label_fraction,
                         std::uint64_t seed) {
    if (r.train < 0.0 || r.val < 0.0 || r.test < 0.0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    }
    const double n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::lround(r.train * n));
    const auto n_val = static_cast<std::size_t>(std::lround(r.val * n));
    if (n_train + n_val > ids.size()) throw EmptySplitError("split ratios round past the id count");
    const std::size_t n_test = ids.size() - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0) {
        throw EmptySplitError("split of " + std::to_string(ids.size()) + " ids rounds to an empty partition (" +
                              std::to_string(n_train) + "/" + std::to_string(n_val) + "/" + std::to_string(n_test) + ")");
    }
    auto shuffled = ids;
    std::sort(shuffled.begin(), shuffled.end());
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    DatasetSplit s;
    s.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train),
                 shuffled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), shuffled.end());
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    s.label_fraction = label_fraction;
    s.labeled = draw_labeled(s.train, label_fraction, seed);
    return s;
}

DatasetSplit with_label_fraction(const DatasetSplit& split, double label_fraction, std::uint64_t seed) {
    DatasetSplit s = split;
    s.label_fraction = label_fraction;
    s.labeled = draw_labeled(s.train, label_fraction, seed);
    return s;
}

std::string sample_id(int index) {
    std::ostringstream os;
    os << "img_" << std::string(index < 10 ? 3 : index < 100 ? 2 : index < 1000 ? 1 : 0, '0') << index;
    return os.str();
}

void write_splits(const std::filesystem::path& path, const DatasetSplit& split) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# id split labeled\n";
    auto labeled = [&](const std::string& id) {
        return std::binary_search(split.labeled.begin(), split.labeled.end(), id) ? 1 : 0;
    };
    for (const auto& id : split.train) out << id << " train " << labeled(id) << "\n";
    for (const auto& id : split.val) out << id << " val 1\n";
    for (const auto& id : split.test) out << id << " test 1\n";
}

DatasetSplit read_splits(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    DatasetSplit s;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string id, which;
        int labeled = 0;
        if (!(is >> id >> which >> labeled)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'id split labeled'");
        }
        if (which == "train") {
            s.train.push_back(id);
            if (labeled) s.labeled.push_back(id);
        } else if (which == "val") {
            s.val.push_back(id);
        } else if (which == "test") {
            s.test.push_back(id);
        } else {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unknown split '" + which + "'");
        }
    }
    for (auto* v : {&s.train, &s.val, &s.test, &s.labeled}) std::sort(v->begin(), v->end());
    s.label_fraction = s.train.empty() ? 0.0 : static_cast<double>(s.labeled.size()) / s.train.size();
    return s;
}

void write_dataset(const std::filesystem::path& root, const std::vector<SyntheticSample>& samples,
                   const DatasetSplit& split) {
    std::filesystem::create_directories(root / "images");
    std::filesystem::create_directories(root / "labels");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto id = sample_id(static_cast<int>(i));
        write_png(root / "images" / (id + ".png"), samples[i].image);
        write_png(root / "labels" / (id + ".png"), samples[i].label);
    }
    write_splits(root / "splits.txt", split);
}

void write_priors(const std::filesystem::path& root, const std::string& id, const StructureTriplet& t) {
    const auto dir = root / "priors";
    std::filesystem::create_directories(dir);
    write_png(dir / (id + "_V.png"), t.vesselness);
    write_png(dir / (id + "_Vbin.png"), t.vessel_mask);
    write_png(dir / (id + "_S.png"), t.skeleton);
}

StructureTriplet read_priors(const std::filesystem::path& root, const std::string& id) {
    StructureTriplet t;
    t.intensity = read_png(root / "images" / (id + ".png"));
    t.vesselness = read_png(root / "priors" / (id + "_V.png"));
    t.vessel_mask = read_binary_png(root / "priors" / (id + "_Vbin.png"));
    t.skeleton = read_binary_png(root / "priors" / (id + "_S.png"));
    t.validate();
    return t;
}

std::vector<std::string> list_image_ids(const std::filesystem::path& root) {
    const auto dir = root / "images";
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("no images/ directory under " + root.string());
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<LabeledImage> load_labeled(const std::filesystem::path& root, const std::vector<std::string>& ids) {
    std::vector<LabeledImage> out;
    out.reserve(ids.size());
    for (const auto& id : ids)
        out.push_back({id, read_png(root / "images" / (id + ".png")), read_binary_png(root / "labels" / (id + ".png"))});
    return out;
}

}  // namespace vamae
