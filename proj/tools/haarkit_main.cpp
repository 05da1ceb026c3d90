#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "haarkit/cascade.hpp"
#include "haarkit/dataset.hpp"
#include "haarkit/detector.hpp"
#include "haarkit/errors.hpp"
#include "haarkit/fmt.hpp"
#include "haarkit/pgm.hpp"
#include "haarkit/tracking.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 usage/config/input errors, 3 runtime aborts.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunConfig {
    std::string config_path;
    std::uint64_t seed = 1;
    int workers = 0;  // 0 = auto
    int base_window = 24;

    haarkit::CascadeTrainConfig train;
    int feature_stride = 1;
    int feature_min_size = 1;

    haarkit::ScanConfig scan;

    double bg_learning_rate = 0.02;
    double bg_threshold = 25.0;
    int min_blob_area = 25;
    double max_dist = 25.0;
    int max_missed = 5;
    std::vector<double> line;  // x0 y0 x1 y1
    int line_sign = 1;

    haarkit::SynthConfig synth;
};

// One CLI option bound to a config-file key. CLI values win over the file,
// the file wins over defaults.
struct Binding {
    CLI::Option* opt;
    std::vector<std::string> path;  // JSON pointer within the config document
    std::function<void(const json&)> assign;
};

struct CommandContext {
    CLI::App* cmd;
    std::vector<Binding> bindings;
    RunConfig* cfg;

    template <class T>
    void bind(T& field, const std::string& flag, const std::string& help, std::vector<std::string> path) {
        CLI::Option* opt = cmd->add_option(flag, field, help)->capture_default_str();
        bindings.push_back(Binding{opt, std::move(path), [&field](const json& v) { field = v.get<T>(); }});
    }

    void add_common() {
        cmd->add_option("--config", cfg->config_path, "structured-text (JSON) config file; explicit flags override it");
        bind(cfg->seed, "--seed", "deterministic run seed", {"seed"});
        bind(cfg->workers, "--workers", "worker threads, 0 = auto; any count gives identical results", {"workers"});
    }

    void add_scan() {
        bind(cfg->scan.scale_step, "--scale-step", "detector scale progression factor", {"scan", "scale_step"});
        bind(cfg->scan.stride, "--stride", "window stride at base scale, scaled per level", {"scan", "stride"});
        bind(cfg->scan.min_scale, "--min-scale", "smallest window scale", {"scan", "min_scale"});
        bind(cfg->scan.max_scale, "--max-scale", "largest window scale, 0 = as large as fits", {"scan", "max_scale"});
        bind(cfg->scan.group_min_neighbors, "--group-min-neighbors", "minimum cluster size kept by grouping",
             {"scan", "group_min_neighbors"});
        bind(cfg->scan.group_overlap, "--group-overlap", "IoU threshold for grouping clusters",
             {"scan", "group_overlap"});
        bind(cfg->scan.variance_floor, "--variance-floor", "lower clamp on window sigma",
             {"scan", "variance_floor"});
    }
};

const json* json_at(const json& root, const std::vector<std::string>& path) {
    const json* cur = &root;
    for (const std::string& key : path) {
        if (!cur->is_object()) return nullptr;
        const auto it = cur->find(key);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur;
}

void apply_config_file(CommandContext& ctx) {
    if (ctx.cfg->config_path.empty()) return;
    std::ifstream in(ctx.cfg->config_path);
    if (!in) throw haarkit::ConfigError("config: cannot open '" + ctx.cfg->config_path + "'");
    json root;
    try {
        root = json::parse(in, nullptr, true, true);  // allow comments
    } catch (const json::exception& e) {
        throw haarkit::ConfigError(std::string("config: unparsable JSON: ") + e.what());
    }
    for (const Binding& b : ctx.bindings) {
        if (b.opt->count() > 0) continue;  // explicit flag wins
        if (const json* v = json_at(root, b.path)) {
            try {
                b.assign(*v);
            } catch (const json::exception&) {
                std::string where;
                for (const std::string& p : b.path) where += "/" + p;
                throw haarkit::ConfigError("config: field '" + where + "' has the wrong type");
            }
        }
    }
}

std::vector<fs::path> list_pgms(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw haarkit::ConfigError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<haarkit::GrayImage> load_dir(const fs::path& dir) {
    std::vector<haarkit::GrayImage> images;
    for (const fs::path& p : list_pgms(dir)) images.push_back(haarkit::load_pgm(p));
    return images;
}

void draw_box(haarkit::GrayImage& img, const haarkit::Rect& r, std::uint8_t value) {
    const int x1 = r.x + r.w - 1;
    const int y1 = r.y + r.h - 1;
    for (int x = r.x; x <= x1; ++x) {
        img(r.y, x) = value;
        img(y1, x) = value;
    }
    for (int y = r.y; y <= y1; ++y) {
        img(y, r.x) = value;
        img(y, x1) = value;
    }
}

std::string zero_padded(const std::string& stem, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d.pgm", stem.c_str(), index);
    return buf;
}

haarkit::PipelineConfig tracking_config(const RunConfig& cfg, const haarkit::Cascade* cascade) {
    haarkit::PipelineConfig pc;
    pc.bg_learning_rate = cfg.bg_learning_rate;
    pc.bg_threshold = cfg.bg_threshold;
    pc.min_blob_area = cfg.min_blob_area;
    pc.max_dist = cfg.max_dist;
    pc.max_missed = cfg.max_missed;
    if (cfg.line.size() != 4) throw haarkit::ConfigError("count: --line needs exactly four values: x0 y0 x1 y1");
    pc.line = haarkit::VirtualLine{cfg.line[0], cfg.line[1], cfg.line[2], cfg.line[3], cfg.line_sign};
    pc.detector_cascade = cascade;
    pc.detector_scan = cfg.scan;
    pc.workers = cfg.workers;
    return pc;
}

int run_train(const RunConfig& cfg, const std::string& positives_dir, const std::string& negatives_dir,
              const std::string& out_path) {
    haarkit::CascadeTrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    haarkit::validate(tc);
    if (!fs::is_directory(positives_dir))
        throw haarkit::ConfigError("train: positives directory '" + positives_dir + "' does not exist");
    if (!fs::is_directory(negatives_dir))
        throw haarkit::ConfigError("train: negatives directory '" + negatives_dir + "' does not exist");

    const auto positives = load_dir(positives_dir);
    const auto pool = load_dir(negatives_dir);
    std::cerr << "train: " << positives.size() << " positives, " << pool.size() << " pool images\n";

    const auto features = haarkit::enumerate_features(haarkit::BaseWindow{cfg.base_window}, cfg.feature_stride,
                                                      cfg.feature_min_size);
    std::cerr << "train: feature pool size " << features.size() << "\n";

    const haarkit::Cascade cascade =
        haarkit::train_cascade(positives, pool, features, tc, cfg.workers, &std::cerr);
    haarkit::save_cascade(cascade, out_path);
    std::cerr << "train: wrote " << out_path << " (" << cascade.stages.size() << " stages)\n";
    return kExitOk;
}

int run_detect(const RunConfig& cfg, const std::string& cascade_path, const std::string& input, bool draw) {
    haarkit::validate(cfg.scan);
    const haarkit::Cascade cascade = haarkit::load_cascade(cascade_path);

    std::vector<fs::path> inputs;
    bool directory = false;
    if (fs::is_directory(input)) {
        directory = true;
        inputs = list_pgms(input);
    } else if (fs::is_regular_file(input)) {
        inputs.push_back(input);
    } else {
        throw haarkit::ConfigError("detect: input '" + input + "' does not exist");
    }

    for (const fs::path& p : inputs) {
        haarkit::GrayImage img = haarkit::load_pgm(p);
        const auto dets = haarkit::detect(cascade, img, cfg.scan, cfg.workers);
        if (directory) std::cout << "I " << p.string() << "\n";
        for (const haarkit::Detection& d : dets) std::cout << haarkit::detection_record(d) << "\n";
        if (draw) {
            for (const haarkit::Detection& d : dets) draw_box(img, d.rect, 255);
            fs::path out = p;
            out.replace_filename(p.stem().string() + "_det.pgm");
            haarkit::save_pgm(img, out);
        }
    }
    return kExitOk;
}

int run_eval(const RunConfig& cfg, const std::string& cascade_path, const std::string& annotations_path,
             double iou_threshold, const std::string& roc_path) {
    haarkit::validate(cfg.scan);
    const haarkit::Cascade cascade = haarkit::load_cascade(cascade_path);
    const auto annotations = haarkit::load_annotations(annotations_path);
    const fs::path base = fs::path(annotations_path).parent_path();

    std::map<std::string, std::vector<haarkit::Detection>> dets;
    for (const haarkit::Annotation& ann : annotations) {
        const haarkit::GrayImage img = haarkit::load_pgm(base / ann.image_path);
        dets[ann.image_path] = haarkit::detect(cascade, img, cfg.scan, cfg.workers);
    }
    const haarkit::EvalReport report = haarkit::evaluate(dets, annotations, iou_threshold);
    std::cout << haarkit::format_report(report);
    if (!roc_path.empty()) {
        std::ofstream roc(roc_path);
        if (!roc) throw haarkit::ConfigError("eval: cannot write '" + roc_path + "'");
        roc << haarkit::operating_points_csv(dets, annotations, iou_threshold);
    }
    return kExitOk;
}

int run_count(const RunConfig& cfg, const std::string& frames_dir, const std::string& cascade_path) {
    std::optional<haarkit::Cascade> cascade;
    if (!cascade_path.empty()) cascade = haarkit::load_cascade(cascade_path);
    const haarkit::PipelineConfig pc = tracking_config(cfg, cascade ? &*cascade : nullptr);

    const std::vector<fs::path> files = list_pgms(frames_dir);
    if (files.empty()) throw haarkit::ConfigError("count: no .pgm frames in '" + frames_dir + "'");

    std::size_t next = 0;
    haarkit::run_pipeline(
        [&]() -> std::optional<haarkit::GrayImage> {
            if (next >= files.size()) return std::nullopt;
            return haarkit::load_pgm(files[next++]);
        },
        pc, &std::cout);
    return kExitOk;
}

int run_synth(const RunConfig& cfg, const std::string& out_dir) {
    haarkit::SynthConfig sc = cfg.synth;
    sc.base_window = cfg.base_window;
    haarkit::validate(sc);
    const haarkit::SynthDataset ds = haarkit::synth_dataset(sc, cfg.seed);

    const fs::path root(out_dir);
    fs::create_directories(root / "positives");
    fs::create_directories(root / "negatives");
    fs::create_directories(root / "scenes");

    for (std::size_t i = 0; i < ds.positives.size(); ++i) {
        haarkit::save_pgm(ds.positives[i], root / "positives" / zero_padded("pos", static_cast<int>(i + 1)));
    }
    for (std::size_t i = 0; i < ds.negatives.size(); ++i) {
        haarkit::save_pgm(ds.negatives[i], root / "negatives" / zero_padded("neg", static_cast<int>(i + 1)));
    }
    std::ofstream ann(root / "scenes.ann");
    if (!ann) throw haarkit::ConfigError("synth: cannot write annotation file");
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const std::string name = zero_padded("scene", static_cast<int>(i + 1));
        haarkit::save_pgm(ds.scenes[i].image, root / "scenes" / name);
        ann << "scenes/" << name << ' ' << ds.scenes[i].boxes.size();
        for (const haarkit::Rect& r : ds.scenes[i].boxes) {
            ann << ' ' << r.x << ' ' << r.y << ' ' << r.w << ' ' << r.h;
        }
        ann << "\n";
    }

    std::cout << "positives " << (root / "positives").string() << ' ' << ds.positives.size() << "\n";
    std::cout << "negatives " << (root / "negatives").string() << ' ' << ds.negatives.size() << "\n";
    std::cout << "scenes " << (root / "scenes").string() << ' ' << ds.scenes.size() << "\n";
    std::cout << "annotations " << (root / "scenes.ann").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    CLI::App app{"haarkit: boosted Haar-feature cascade training, detection, and motion counting"};
    app.require_subcommand(1);

    // train
    CommandContext train_ctx{app.add_subcommand("train", "train a cascade on window crops"), {}, &cfg};
    std::string positives_dir, negatives_dir, out_path;
    train_ctx.cmd->add_option("--positives", positives_dir, "directory of base-window positive PGMs")->required();
    train_ctx.cmd->add_option("--negatives", negatives_dir, "directory of object-free pool PGMs")->required();
    train_ctx.cmd->add_option("--out", out_path, "output cascade file")->required();
    train_ctx.add_common();
    train_ctx.bind(cfg.base_window, "--base-window", "training window side in pixels", {"base_window"});
    train_ctx.bind(cfg.train.per_stage_min_detection, "--per-stage-min-detection",
                   "detection rate each stage must keep on the validation split", {"train", "per_stage_min_detection"});
    train_ctx.bind(cfg.train.per_stage_max_fp, "--per-stage-max-fp",
                   "false-positive rate each stage must reach on its negatives", {"train", "per_stage_max_fp"});
    train_ctx.bind(cfg.train.target_overall_fp, "--target-overall-fp",
                   "stop once the mined overall false-positive rate reaches this", {"train", "target_overall_fp"});
    train_ctx.bind(cfg.train.max_stages, "--max-stages", "stage count cap", {"train", "max_stages"});
    train_ctx.bind(cfg.train.stumps_per_stage_cap, "--stumps-per-stage-cap", "stump count cap per stage",
                   {"train", "stumps_per_stage_cap"});
    train_ctx.bind(cfg.feature_stride, "--feature-stride", "grid step for the enumerated feature pool",
                   {"train", "feature_stride"});
    train_ctx.bind(cfg.feature_min_size, "--feature-min-size", "minimum unit rect side in the feature pool",
                   {"train", "feature_min_size"});

    // detect
    CommandContext detect_ctx{app.add_subcommand("detect", "run the detector over images"), {}, &cfg};
    std::string detect_cascade, detect_input;
    bool draw = false;
    detect_ctx.cmd->add_option("--cascade", detect_cascade, "trained cascade file")->required();
    detect_ctx.cmd->add_option("input", detect_input, "PGM image or directory of PGMs")->required();
    detect_ctx.cmd->add_flag("--draw", draw, "write copies with detection outlines burned in");
    detect_ctx.add_common();
    detect_ctx.add_scan();

    // eval
    CommandContext eval_ctx{app.add_subcommand("eval", "detect over an annotated set and report quality"), {}, &cfg};
    std::string eval_cascade, eval_annotations, roc_path;
    double iou_threshold = 0.5;
    eval_ctx.cmd->add_option("--cascade", eval_cascade, "trained cascade file")->required();
    eval_ctx.cmd->add_option("--annotations", eval_annotations, "annotation file")->required();
    eval_ctx.cmd->add_option("--roc", roc_path, "also write operating points CSV here");
    eval_ctx.add_common();
    eval_ctx.add_scan();
    eval_ctx.bind(iou_threshold, "--iou", "IoU threshold for matching detections to ground truth", {"eval", "iou"});

    // count
    CommandContext count_ctx{app.add_subcommand("count", "track moving objects and count line crossings"), {}, &cfg};
    std::string frames_dir, count_cascade;
    count_ctx.cmd->add_option("--frames", frames_dir, "directory of numbered frame PGMs")->required();
    count_ctx.cmd->add_option("--cascade", count_cascade, "optional: use cascade detections instead of the motion mask");
    count_ctx.add_common();
    count_ctx.bind(cfg.bg_learning_rate, "--bg-learning-rate", "background running-average learning rate",
                   {"track", "bg_learning_rate"});
    count_ctx.bind(cfg.bg_threshold, "--bg-threshold", "foreground absolute-difference threshold",
                   {"track", "bg_threshold"});
    count_ctx.bind(cfg.min_blob_area, "--min-blob-area", "smallest blob kept, in pixels", {"track", "min_blob_area"});
    count_ctx.bind(cfg.max_dist, "--max-dist", "largest centroid jump matched between frames", {"track", "max_dist"});
    count_ctx.bind(cfg.max_missed, "--max-missed", "frames a track may go unmatched before retirement",
                   {"track", "max_missed"});
    count_ctx.bind(cfg.line, "--line", "virtual line endpoints: x0 y0 x1 y1", {"track", "line"});
    count_ctx.bind(cfg.line_sign, "--line-sign", "crossing polarity convention, +1 or -1", {"track", "line_sign"});
    count_ctx.add_scan();

    // synth
    CommandContext synth_ctx{app.add_subcommand("synth", "generate the synthetic desk-scale dataset"), {}, &cfg};
    std::string synth_out;
    synth_ctx.cmd->add_option("--out", synth_out, "output dataset directory")->required();
    synth_ctx.add_common();
    synth_ctx.bind(cfg.base_window, "--base-window", "positive crop side in pixels", {"base_window"});
    synth_ctx.bind(cfg.synth.num_positives, "--positives", "positive crop count", {"synth", "positives"});
    synth_ctx.bind(cfg.synth.num_negatives, "--negatives", "negative pool image count", {"synth", "negatives"});
    synth_ctx.bind(cfg.synth.num_scenes, "--scenes", "annotated scene count", {"synth", "scenes"});
    synth_ctx.bind(cfg.synth.negative_size, "--negative-size", "negative pool image side", {"synth", "negative_size"});
    synth_ctx.bind(cfg.synth.scene_size, "--scene-size", "scene image side", {"synth", "scene_size"});
    synth_ctx.bind(cfg.synth.max_objects_per_scene, "--max-objects-per-scene", "objects placed per scene, at most",
                   {"synth", "max_objects_per_scene"});
    synth_ctx.bind(cfg.synth.max_object_scale, "--max-object-scale", "largest object scale in scenes",
                   {"synth", "max_object_scale"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        for (CommandContext* ctx : {&train_ctx, &detect_ctx, &eval_ctx, &count_ctx, &synth_ctx}) {
            if (ctx->cmd->parsed()) apply_config_file(*ctx);
        }
        if (train_ctx.cmd->parsed()) return run_train(cfg, positives_dir, negatives_dir, out_path);
        if (detect_ctx.cmd->parsed()) return run_detect(cfg, detect_cascade, detect_input, draw);
        if (eval_ctx.cmd->parsed()) return run_eval(cfg, eval_cascade, eval_annotations, iou_threshold, roc_path);
        if (count_ctx.cmd->parsed()) return run_count(cfg, frames_dir, count_cascade);
        if (synth_ctx.cmd->parsed()) return run_synth(cfg, synth_out);
    } catch (const haarkit::TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const haarkit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
