#include "vamae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vamae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_integer(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    const long long x = parse_integer(key, v);
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key, "integer out of range: " + v);
    return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError(key, "expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    return out;
}

std::string fmt(double x) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

struct Entry {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define VAMAE_INT(field)                                                                                  \
    Entry {                                                                                               \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int(k, v); },      \
            [](const RunConfig& c) { return std::to_string(c.field); }                                    \
    }
#define VAMAE_DOUBLE(field)                                                                               \
    Entry {                                                                                               \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_double(k, v); },   \
            [](const RunConfig& c) { return fmt(c.field); }                                               \
    }

const std::vector<std::pair<std::string, Entry>>& registry() {
    static const std::vector<std::pair<std::string, Entry>> r = {
        {"model.image_size", VAMAE_INT(model.image_size)},
        {"model.patch_size", VAMAE_INT(model.patch_size)},
        {"model.encoder_depth", VAMAE_INT(model.encoder_depth)},
        {"model.encoder_dim", VAMAE_INT(model.encoder_dim)},
        {"model.encoder_heads", VAMAE_INT(model.encoder_heads)},
        {"model.decoder_depth", VAMAE_INT(model.decoder_depth)},
        {"model.decoder_dim", VAMAE_INT(model.decoder_dim)},
        {"model.decoder_heads", VAMAE_INT(model.decoder_heads)},
        {"model.head_hidden",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.head_hidden_dims = parse_int_list(k, v); },
          [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.model.head_hidden_dims.size(); ++i)
                  s += (i ? "," : "") + std::to_string(c.model.head_hidden_dims[i]);
              return s;
          }}},
        {"model.mlp_ratio", VAMAE_INT(model.mlp_ratio)},

        {"mask.alpha", VAMAE_DOUBLE(mask_alpha)},
        {"mask.curriculum",
         {[](RunConfig& c, const std::string&, const std::string& v) { c.mask_curriculum = v; },
          [](const RunConfig& c) { return c.mask_curriculum; }}},
        {"mask.ratio",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "none" || v.empty()) c.mask_ratio.reset();
              else c.mask_ratio = parse_double(k, v);
          },
          [](const RunConfig& c) { return c.mask_ratio ? fmt(*c.mask_ratio) : std::string("none"); }}},

        {"loss.w_intensity", VAMAE_DOUBLE(loss.intensity)},
        {"loss.w_vesselness", VAMAE_DOUBLE(loss.vesselness)},
        {"loss.w_skeleton", VAMAE_DOUBLE(loss.skeleton)},
        {"loss.pos_weight", VAMAE_DOUBLE(pos_weight)},

        {"sched.warmup_epochs", VAMAE_DOUBLE(warmup_epochs)},
        {"sched.peak_lr", VAMAE_DOUBLE(peak_lr)},
        {"sched.floor", VAMAE_DOUBLE(lr_floor)},

        {"train.epochs", VAMAE_INT(epochs)},
        {"train.batch_size", VAMAE_INT(batch_size)},
        {"train.beta1", VAMAE_DOUBLE(beta1)},
        {"train.beta2", VAMAE_DOUBLE(beta2)},
        {"train.weight_decay", VAMAE_DOUBLE(weight_decay)},
        {"train.checkpoint_interval", VAMAE_INT(checkpoint_interval)},
        {"train.stage1_epochs", VAMAE_INT(stage1_epochs)},
        {"train.stage1_lr", VAMAE_DOUBLE(stage1_lr)},
        {"train.stage2_epochs", VAMAE_INT(stage2_epochs)},
        {"train.stage2_lr", VAMAE_DOUBLE(stage2_lr)},
        {"train.finetune_batch_size", VAMAE_INT(finetune_batch_size)},
        {"train.augment",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.augment = parse_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.augment ? "true" : "false"); }}},
        {"train.label_fraction", VAMAE_DOUBLE(label_fraction)},

        {"data.n_images", VAMAE_INT(data.n_images)},
        {"data.min_vessels", VAMAE_INT(data.min_vessels)},
        {"data.max_vessels", VAMAE_INT(data.max_vessels)},
        {"data.min_radius", VAMAE_DOUBLE(data.min_radius)},
        {"data.max_radius", VAMAE_DOUBLE(data.max_radius)},
        {"data.branch_probability", VAMAE_DOUBLE(data.branch_probability)},
        {"data.noise_std", VAMAE_DOUBLE(data.background_noise_std)},
        {"data.background", VAMAE_DOUBLE(data.background_level)},
        {"data.min_contrast", VAMAE_DOUBLE(data.min_contrast)},
        {"data.max_contrast", VAMAE_DOUBLE(data.max_contrast)},
        {"data.blur_sigma", VAMAE_DOUBLE(data.blur_sigma)},
        {"data.train_ratio", VAMAE_DOUBLE(ratios.train)},
        {"data.val_ratio", VAMAE_DOUBLE(ratios.val)},
        {"data.test_ratio", VAMAE_DOUBLE(ratios.test)},

        {"seed",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }}},
    };
    return r;
}

#undef VAMAE_INT
#undef VAMAE_DOUBLE

const Entry& lookup(const std::string& key) {
    static const auto index = [] {
        std::map<std::string, const Entry*> m;
        for (const auto& [k, e] : registry()) m[k] = &e;
        return m;
    }();
    auto it = index.find(key);
    if (it == index.end()) throw ConfigError(key, "unknown config key");
    return *it->second;
}

void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const auto keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, e] : registry()) k.push_back(name);
        return k;
    }();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    lookup(key).set(cfg, key, trim(value));
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

CurriculumSchedule RunConfig::curriculum() const {
    if (mask_curriculum == "standard") return CurriculumSchedule::standard().rescaled(epochs);
    try {
        return CurriculumSchedule::parse(mask_curriculum);
    } catch (const std::exception& e) {
        throw ConfigError("mask.curriculum", e.what());
    }
}

void RunConfig::validate() const {
    auto wrap = [](const std::string& key, const std::function<void()>& f) {
        try {
            f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(key, e.what());
        }
    };
    wrap("model", [&] { model.validate(); });
    check(mask_alpha >= 0.0 && mask_alpha <= 1.0, "mask.alpha", "must lie in [0, 1], got " + fmt(mask_alpha));
    if (mask_ratio) check(*mask_ratio > 0.0 && *mask_ratio < 1.0, "mask.ratio", "must lie in (0, 1)");
    check(loss.intensity >= 0.0, "loss.w_intensity", "must be non-negative");
    check(loss.vesselness >= 0.0, "loss.w_vesselness", "must be non-negative");
    check(loss.skeleton >= 0.0, "loss.w_skeleton", "must be non-negative");
    check(loss.intensity + loss.vesselness + loss.skeleton > 0.0, "loss.w_intensity", "all loss weights are zero");
    check(pos_weight > 0.0, "loss.pos_weight", "must be positive");
    check(peak_lr > 0.0, "sched.peak_lr", "must be positive");
    check(warmup_epochs >= 0.0 && warmup_epochs < epochs, "sched.warmup_epochs",
          "must lie in [0, train.epochs), got " + fmt(warmup_epochs));
    check(lr_floor >= 0.0 && lr_floor <= peak_lr, "sched.floor", "must lie in [0, sched.peak_lr]");
    check(epochs >= 1, "train.epochs", "must be >= 1");
    check(batch_size >= 1, "train.batch_size", "must be >= 1");
    check(beta1 >= 0.0 && beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
    check(beta2 >= 0.0 && beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
    check(weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
    check(checkpoint_interval >= 0, "train.checkpoint_interval", "must be non-negative");
    check(stage1_epochs >= 1, "train.stage1_epochs", "must be >= 1");
    check(stage2_epochs >= 1, "train.stage2_epochs", "must be >= 1");
    check(stage1_lr > 0.0, "train.stage1_lr", "must be positive");
    check(stage2_lr > 0.0, "train.stage2_lr", "must be positive");
    check(finetune_batch_size >= 1, "train.finetune_batch_size", "must be >= 1");
    check(label_fraction > 0.0 && label_fraction <= 1.0, "train.label_fraction", "must lie in (0, 1]");
    check(data.n_images >= 1, "data.n_images", "must be >= 1");
    check(data.min_vessels >= 1 && data.min_vessels <= data.max_vessels, "data.min_vessels",
          "must lie in [1, data.max_vessels]");
    check(data.min_radius > 0.0 && data.min_radius <= data.max_radius, "data.min_radius",
          "must lie in (0, data.max_radius]");
    check(data.branch_probability >= 0.0 && data.branch_probability <= 1.0, "data.branch_probability",
          "must lie in [0, 1]");
    check(data.background_noise_std >= 0.0, "data.noise_std", "must be non-negative");
    check(data.min_contrast > 0.0 && data.min_contrast <= data.max_contrast, "data.min_contrast",
          "must lie in (0, data.max_contrast]");
    check(data.blur_sigma >= 0.0, "data.blur_sigma", "must be non-negative");
    for (auto [k, v] : {std::pair{"data.train_ratio", ratios.train}, {"data.val_ratio", ratios.val},
                        {"data.test_ratio", ratios.test}})
        check(v > 0.0 && v < 1.0, k, "must lie in (0, 1)");
    check(std::abs(ratios.train + ratios.val + ratios.test - 1.0) < 1e-9, "data.test_ratio",
          "split ratios must sum to 1");
    const auto cur = curriculum();
    check(mask_ratio || cur.total_epochs() >= epochs, "mask.curriculum",
          "covers " + std::to_string(cur.total_epochs()) + " epochs but train.epochs is " + std::to_string(epochs));
    wrap("data", [&] { data.validate(); });
    wrap("train", [&] {
        pretrain_config().validate();
        finetune_config().validate();
    });
}

PretrainConfig RunConfig::pretrain_config() const {
    PretrainConfig p;
    p.epochs = epochs;
    p.batch_size = batch_size;
    p.optimizer = {beta1, beta2, 1e-8, weight_decay};
    p.schedule = {warmup_epochs, peak_lr, static_cast<double>(epochs), lr_floor};
    p.curriculum = curriculum();
    p.alpha = mask_alpha;
    p.weights = loss;
    p.ratio_override = mask_ratio;
    p.checkpoint_interval = checkpoint_interval;
    p.seed = seed;
    return p;
}

FinetuneConfig RunConfig::finetune_config() const {
    FinetuneConfig f;
    f.stage1_epochs = stage1_epochs;
    f.stage1_lr = stage1_lr;
    f.stage2_epochs = stage2_epochs;
    f.stage2_lr = stage2_lr;
    f.batch_size = finetune_batch_size;
    f.pos_weight = pos_weight;
    f.augment = augment;
    f.seed = seed;
    return f;
}

ExperimentSettings RunConfig::experiment_settings() const {
    ExperimentSettings s;
    s.data = data;
    s.data.image_size = model.image_size;
    s.data.seed = seed;
    s.ratios = ratios;
    s.label_fraction = label_fraction;
    s.split_seed = seed;
    s.model = model;
    s.pretrain = pretrain_config();
    s.finetune = finetune_config();
    return s;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& key : config_keys())
        if (key.find('.') == std::string::npos) os << key << " = " << get_config_value(*this, key) << "\n";
    std::string section;
    for (const auto& key : config_keys()) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) continue;
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            os << "\n[" << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = " << get_config_value(*this, key) << "\n";
    }
    return os.str();
}

RunConfig parse_config_text(const std::string& text, RunConfig cfg) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        set_config_value(cfg, key, line.substr(eq + 1));
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError(assignment, "override must look like key=value");
    set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

}  // namespace vamae
