#include <Eigen/Core>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "vamae/config.hpp"
#include "vamae/datakit.hpp"
#include "vamae/diagnostics.hpp"
#include "vamae/manifest.hpp"
#include "vamae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vamae;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    bool dry_run = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "Config file (key = value, [section] headers)");
    sub->add_option("--set", c.overrides, "Override a config key, e.g. --set mask.alpha=0.4")->take_all();
    sub->add_flag("--dry-run", c.dry_run, "Validate the config, print the plan and exit");
}

int threads_from_env() {
    const char* v = std::getenv("VAMAE_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("VAMAE_THREADS", std::string("expected a positive integer, got '") + v + "'");
    return static_cast<int>(n);
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

void echo_config(const fs::path& out, const RunConfig& cfg, const std::string& command) {
    fs::create_directories(out);
    std::ofstream f(out / "resolved_config.conf");
    f << "# " << command << "\n# VAMAE_THREADS = " << threads_from_env() << "\n" << cfg.to_text();
}

void print_model(const ModelConfig& m) {
    std::cout << "model: image " << m.image_size << "x" << m.image_size << ", patch " << m.patch_size << " ("
              << m.patch_count() << " patches), encoder " << m.encoder_depth << "x" << m.encoder_dim << "/"
              << m.encoder_heads << " heads, decoder " << m.decoder_depth << "x" << m.decoder_dim << "/"
              << m.decoder_heads << " heads\n";
}

std::vector<std::string> pretrain_ids(const fs::path& data) {
    if (!fs::exists(data / "splits.txt")) return list_image_ids(data);
    auto sp = read_splits(data / "splits.txt");
    auto ids = sp.train;
    ids.insert(ids.end(), sp.val.begin(), sp.val.end());
    std::sort(ids.begin(), ids.end());
    return ids;
}

void require_dir(const fs::path& p, const std::string& what) {
    if (!fs::is_directory(p)) throw std::runtime_error(what + " directory not found: " + p.string());
}

int cmd_synth(const RunConfig& cfg, const fs::path& out, bool dry) {
    auto s = cfg.experiment_settings();
    std::cout << "synth-data: " << s.data.n_images << " images of " << s.data.image_size << "x" << s.data.image_size
              << ", splits " << s.ratios.train << "/" << s.ratios.val << "/" << s.ratios.test << ", labeled fraction "
              << cfg.label_fraction << ", seed " << cfg.seed << " -> " << out << "\n";
    if (dry) return kOk;
    auto samples = generate_synthetic(s.data);
    std::vector<std::string> ids;
    for (int i = 0; i < s.data.n_images; ++i) ids.push_back(sample_id(i));
    auto split = make_splits(ids, s.ratios, cfg.label_fraction, cfg.seed);
    write_dataset(out, samples, split);
    echo_config(out, cfg, "synth-data");
    std::cout << "wrote " << samples.size() << " images (train " << split.train.size() << ", val "
              << split.val.size() << ", test " << split.test.size() << ", labeled " << split.labeled.size() << ")\n";
    return kOk;
}

int cmd_preprocess(const RunConfig& cfg, const fs::path& data, bool dry) {
    require_dir(data, "data");
    auto ids = list_image_ids(data);
    const FrangiParams fp;
    std::cout << "preprocess: " << ids.size() << " images, Frangi sigmas";
    for (double s : fp.scales) std::cout << " " << s;
    std::cout << ", Otsu x0.7, thinning -> " << data / "priors" << "\n";
    if (dry) return kOk;
    for (const auto& id : ids) write_priors(data, id, extract_structure(read_png(data / "images" / (id + ".png"))));
    echo_config(data / "priors", cfg, "preprocess");
    std::cout << "wrote priors for " << ids.size() << " images\n";
    return kOk;
}

int cmd_pretrain(const RunConfig& cfg, const fs::path& data, const fs::path& out, bool dry) {
    auto pc = cfg.pretrain_config();
    std::cout << "pretrain: epochs " << pc.epochs << ", batch " << pc.batch_size << ", alpha " << pc.alpha
              << ", weights " << pc.weights.intensity << "/" << pc.weights.vesselness << "/" << pc.weights.skeleton
              << ", lr warmup " << pc.schedule.warmup_epochs << " -> " << pc.schedule.peak_lr << "\n"
              << "curriculum: "
              << (pc.ratio_override ? "constant " + std::to_string(*pc.ratio_override) : pc.curriculum.to_string())
              << "\n";
    print_model(cfg.model);
    if (dry) return kOk;
    require_dir(data, "data");
    std::vector<StructureTriplet> triplets;
    for (const auto& id : pretrain_ids(data)) {
        if (!fs::exists(data / "priors" / (id + "_V.png")))
            throw std::runtime_error("missing priors for " + id + "; run preprocess first");
        triplets.push_back(read_priors(data, id));
    }
    echo_config(out, cfg, "pretrain");
    VamaeModel model(cfg.model, cfg.seed);
    TrainHooks hooks{out, [](const std::string& l) { std::cout << l << "\n"; }};
    pretrain(model, triplets, pc, hooks);
    std::cout << "checkpoint: " << out / "pretrain_final.ckpt" << "\n";
    return kOk;
}

ModelConfig manifest_model(const Checkpoint& ck, const std::string& what) {
    try {
        return model_config_from_json(json::parse(ck.manifest_json).at("model"));
    } catch (const std::exception& e) {
        throw std::runtime_error(what + " checkpoint manifest is unreadable: " + e.what());
    }
}

int cmd_finetune(RunConfig cfg, const fs::path& data, const fs::path& encoder, double labels, const fs::path& out,
                 bool dry) {
    if (labels > 0) {
        cfg.label_fraction = labels;
        cfg.validate();
    }
    auto fc = cfg.finetune_config();
    std::cout << "finetune: stage 1 " << fc.stage1_epochs << " epochs @ " << fc.stage1_lr << " (encoder frozen), stage 2 "
              << fc.stage2_epochs << " epochs @ " << fc.stage2_lr << ", batch " << fc.batch_size << ", pos_weight "
              << fc.pos_weight << ", labels " << cfg.label_fraction << "\n";
    print_model(cfg.model);
    if (dry) return kOk;
    require_dir(data, "data");
    auto ck = load_checkpoint(encoder);
    auto enc_model = manifest_model(ck, "encoder");
    if (to_json(enc_model) != to_json(cfg.model))
        throw ConfigError("model", "encoder checkpoint was trained with " + to_json(enc_model).dump() +
                                       " but the config specifies " + to_json(cfg.model).dump());
    auto split = with_label_fraction(read_splits(data / "splits.txt"), cfg.label_fraction, cfg.seed);
    echo_config(out, cfg, "finetune");
    SegmentationModel model(cfg.model, cfg.seed);
    model.load_encoder(ck.tensors);
    TrainHooks hooks{out, [](const std::string& l) { std::cout << l << "\n"; }};
    auto res = finetune(model, load_labeled(data, split.labeled), load_labeled(data, split.val), fc, hooks);
    std::cout << "best validation Dice " << res.best_val_dice << " at epoch " << res.best_epoch << "\ncheckpoint: "
              << out / "finetune_best.ckpt" << "\n";
    return kOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& data, const fs::path& model_path, const std::string& split_name, const fs::path& out,
             bool dry) {
    std::cout << "eval: " << model_path << " on the " << split_name << " split of " << data << "\n";
    if (dry) return kOk;
    auto ck = load_checkpoint(model_path);
    SegmentationModel model(manifest_model(ck, "segmentation"), 0);
    model.parameters().load(ck.tensors);
    auto sp = read_splits(data / "splits.txt");
    const std::vector<std::string>* ids = split_name == "test" ? &sp.test : split_name == "val" ? &sp.val : &sp.train;
    auto images = load_labeled(data, *ids);
    auto metrics = evaluate(model, images);
    json j{{"split", split_name}, {"images", json::array()}};
    SegMetrics mean;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const auto& m = metrics[i];
        j["images"].push_back({{"id", images[i].id}, {"dice", m.dice}, {"iou", m.iou}, {"precision", m.precision},
                               {"recall", m.recall}});
        mean.dice += m.dice / metrics.size();
        mean.iou += m.iou / metrics.size();
        mean.precision += m.precision / metrics.size();
        mean.recall += m.recall / metrics.size();
    }
    j["mean"] = {{"dice", mean.dice}, {"iou", mean.iou}, {"precision", mean.precision}, {"recall", mean.recall}};
    echo_config(out, cfg, "eval");
    std::ofstream(out / "eval.json") << j.dump(2) << "\n";
    std::cout << "dice " << mean.dice << " iou " << mean.iou << " precision " << mean.precision << " recall "
              << mean.recall << " (" << metrics.size() << " images)\n";
    return kOk;
}

int cmd_diagnose(const RunConfig& cfg, const fs::path& data, const std::vector<double>& alphas, const fs::path& out,
                 bool dry) {
    DiagnosticOptions opts;
    opts.mask_ratio = cfg.mask_ratio.value_or(0.75);
    opts.seed = cfg.seed;
    opts.patch_size = cfg.model.patch_size;
    std::cout << "diagnose: alphas";
    for (double a : alphas) std::cout << " " << a;
    std::cout << ", mask ratio " << opts.mask_ratio << "\n";
    if (dry) return kOk;
    require_dir(data, "data");
    std::vector<StructureTriplet> triplets;
    for (const auto& id : list_image_ids(data)) triplets.push_back(read_priors(data, id));
    auto rep = masking_diagnostic(triplets, alphas, opts);
    echo_config(out, cfg, "diagnose");
    std::ofstream(out / "diagnose.json") << rep.to_json().dump(2) << "\n";
    std::ofstream(out / "diagnose.tsv") << rep.table();
    std::cout << rep.table();
    return kOk;
}

int cmd_ablate(const RunConfig& cfg, const std::string& suite_name, const std::vector<std::uint64_t>& seeds,
               const fs::path& out, bool dry) {
    auto suite = parse_suite(suite_name);
    auto settings = cfg.experiment_settings();
    if (!seeds.empty()) settings.seeds = seeds;
    settings.cache_dir = out / "cache";
    settings.validate();
    const auto specs = ablation_specs(suite);
    std::cout << "ablate: " << suite_name << ", " << specs.size() << " configurations x " << settings.seeds.size()
              << " seeds\n";
    for (const auto& s : specs)
        std::cout << "  " << s.label << ": alpha " << s.alpha << ", weights " << s.weights.intensity << "/"
                  << s.weights.vesselness << "/" << s.weights.skeleton << "\n";
    if (dry) return kOk;
    echo_config(out, cfg, "ablate " + suite_name);
    std::ofstream cells(out / "cells.jsonl", std::ios::app);
    auto rep = run_experiments(specs, settings, [&](const CellResult& c) {
        cells << c.to_json().dump() << "\n";
        cells.flush();
        std::cout << c.label << " seed " << c.seed << ": "
                  << (c.ok ? "dice " + std::to_string(c.test_dice) : "FAILED " + c.error)
                  << (c.cached ? " (cached)" : "") << "\n";
    });
    std::ofstream(out / "report.json") << rep.to_json().dump(2) << "\n";
    std::ofstream(out / "report.tsv") << rep.table();
    std::cout << rep.table();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vessel-aware masked autoencoder pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    Common common;
    std::string out = "out", data = "data", encoder, model_path, split = "test", suite = "alpha-sweep";
    double labels = -1.0;
    std::vector<double> alphas{0.0, 0.4, 0.6, 0.8, 1.0};
    std::vector<std::uint64_t> seeds;

    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset");
    synth->add_option("--out", out, "Dataset directory")->required();
    auto* pre = app.add_subcommand("preprocess", "Compute vesselness, vessel mask and skeleton priors");
    pre->add_option("--data", data, "Dataset directory")->required();
    auto* pt = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
    pt->add_option("--data", data, "Dataset directory with priors");
    pt->add_option("--out", out, "Run directory");
    auto* ft = app.add_subcommand("finetune", "Two-stage segmentation fine-tuning");
    ft->add_option("--data", data, "Dataset directory");
    ft->add_option("--encoder", encoder, "Pretraining checkpoint");
    ft->add_option("--labels", labels, "Labeled fraction of the training split")->check(CLI::Range(0.0, 1.0));
    ft->add_option("--out", out, "Run directory");
    auto* ev = app.add_subcommand("eval", "Segmentation metrics on a split");
    ev->add_option("--data", data, "Dataset directory");
    ev->add_option("--model", model_path, "Fine-tuned checkpoint");
    ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--out", out, "Output directory");
    auto* dg = app.add_subcommand("diagnose", "Masked-patch entropy and vessel coverage per alpha");
    dg->add_option("--data", data, "Dataset directory with priors");
    dg->add_option("--alphas", alphas, "Alpha values")->delimiter(',');
    dg->add_option("--out", out, "Output directory");
    auto* ab = app.add_subcommand("ablate", "Alpha sweep or target ablation");
    ab->add_option("--suite", suite, "alpha-sweep or target-ablation");
    ab->add_option("--seeds", seeds, "Seeds")->delimiter(',');
    ab->add_option("--out", out, "Output directory");
    for (auto* s : {synth, pre, pt, ft, ev, dg, ab}) add_common(s, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    }
    if ((ft->parsed() && encoder.empty() && !common.dry_run) || (ev->parsed() && model_path.empty() && !common.dry_run)) {
        std::cerr << (ft->parsed() ? "finetune requires --encoder\n" : "eval requires --model\n") << app.help();
        return kUsage;
    }

    try {
        const int threads = threads_from_env();
        Eigen::setNbThreads(threads);
        const RunConfig cfg = resolve(common);
        const bool dry = common.dry_run;
        const auto t0 = std::chrono::steady_clock::now();
        int rc = kOk;
        if (synth->parsed()) rc = cmd_synth(cfg, out, dry);
        else if (pre->parsed()) rc = cmd_preprocess(cfg, data, dry);
        else if (pt->parsed()) rc = cmd_pretrain(cfg, data, out, dry);
        else if (ft->parsed()) rc = cmd_finetune(cfg, data, encoder, labels, out, dry);
        else if (ev->parsed()) rc = cmd_eval(cfg, data, model_path, split, out, dry);
        else if (dg->parsed()) rc = cmd_diagnose(cfg, data, alphas, out, dry);
        else if (ab->parsed()) rc = cmd_ablate(cfg, suite, seeds, out, dry);
        if (!dry)
            std::cerr << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      << " s\n";
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
}
