#include "haarkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "haarkit/errors.hpp"
#include "haarkit/fmt.hpp"
#include "haarkit/pgm.hpp"
#include "haarkit/rng.hpp"

namespace haarkit {
namespace {

std::uint8_t clamp_u8(double v) {
    if (v < 0.0) return 0;
    if (v > 255.0) return 255;
    return static_cast<std::uint8_t>(std::llround(v));
}

// Value noise: a coarse lattice of normal draws, bilinearly upsampled.
struct NoiseLayer {
    int step;
    int gw, gh;
    std::vector<double> grid;

    NoiseLayer(int w, int h, int step_, double mu, double sigma, Rng& rng) : step(step_) {
        gw = w / step + 2;
        gh = h / step + 2;
        grid.resize(static_cast<std::size_t>(gw) * gh);
        for (double& g : grid) g = rng.normal(mu, sigma);
    }

    double at(int x, int y) const {
        const double fx = static_cast<double>(x) / step;
        const double fy = static_cast<double>(y) / step;
        const int gx = static_cast<int>(fx);
        const int gy = static_cast<int>(fy);
        const double tx = fx - gx;
        const double ty = fy - gy;
        auto g = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
        const double top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
        const double bot = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
        return top * (1.0 - ty) + bot * ty;
    }
};

// Textured noise shared by negatives and scene backgrounds: blocky bright
// patches across several octaves so single stumps cannot reject everything,
// plus pixel-scale grain.
GrayImage textured_noise(int w, int h, Rng& rng) {
    const NoiseLayer coarse(w, h, 16, 90.0, 34.0, rng);
    const NoiseLayer blocks(w, h, 8, 0.0, 22.0, rng);
    const NoiseLayer medium(w, h, 4, 0.0, 12.0, rng);
    GrayImage img = make_gray(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = coarse.at(x, y) + blocks.at(x, y) + medium.at(x, y) + rng.normal(0.0, 6.0);
            img(y, x) = clamp_u8(v);
        }
    }
    return img;
}

// Brightens a slightly jittered square centered in the window rect. The
// square-to-window proportions are identical for training crops and scene
// objects, so detector windows line up with scene annotations.
void render_object(GrayImage& img, const Rect& window, Rng& rng) {
    const double scale = static_cast<double>(window.w) / 24.0;
    const int side = static_cast<int>(std::llround(scale * static_cast<double>(rng.uniform_int(10, 16))));
    const int jx = static_cast<int>(std::llround(scale * static_cast<double>(rng.uniform_int(-2, 2))));
    const int jy = static_cast<int>(std::llround(scale * static_cast<double>(rng.uniform_int(-2, 2))));
    const double lift = rng.uniform(70.0, 130.0);

    int x0 = window.x + (window.w - side) / 2 + jx;
    int y0 = window.y + (window.h - side) / 2 + jy;
    x0 = std::clamp(x0, window.x, window.x + window.w - side);
    y0 = std::clamp(y0, window.y, window.y + window.h - side);
    for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) {
            img(y, x) = clamp_u8(static_cast<double>(img(y, x)) + lift);
        }
    }
}

double region_mean(const GrayImage& img, const Rect& r) {
    double s = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y) {
        for (int x = r.x; x < r.x + r.w; ++x) s += img(y, x);
    }
    return s / static_cast<double>(r.area());
}

GrayImage make_positive(int side, Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        GrayImage img = textured_noise(side, side, rng);
        render_object(img, Rect{0, 0, side, side}, rng);
        // Self-check: the object must dominate its surround.
        const int c = side / 4;
        const Rect center{c, c, side - 2 * c, side - 2 * c};
        const double center_mean = region_mean(img, center);
        const double total = region_mean(img, Rect{0, 0, side, side});
        const double n_total = static_cast<double>(side) * side;
        const double n_center = static_cast<double>(center.area());
        const double surround_mean = (total * n_total - center_mean * n_center) / (n_total - n_center);
        if (center_mean > surround_mean) return img;
    }
    throw DataError("synth_dataset: positive generator failed its contrast self-check");
}

bool overlaps_any(const Rect& r, const std::vector<Rect>& placed, int margin) {
    for (const Rect& p : placed) {
        const bool apart = r.x + r.w + margin <= p.x || p.x + p.w + margin <= r.x ||
                           r.y + r.h + margin <= p.y || p.y + p.h + margin <= r.y;
        if (!apart) return true;
    }
    return false;
}

struct MatchOutcome {
    int tp = 0;
    int fp = 0;
    std::vector<int> per_image_matches;
};

MatchOutcome greedy_match(const std::map<std::string, std::vector<Detection>>& dets_per_image,
                          const std::vector<Annotation>& annotations, double iou_threshold) {
    std::map<std::string, std::size_t> ann_index;
    for (std::size_t i = 0; i < annotations.size(); ++i) ann_index[annotations[i].image_path] = i;
    for (const auto& [path, dets] : dets_per_image) {
        if (!ann_index.count(path)) throw DataError("evaluate: detections for unknown image '" + path + "'");
    }

    MatchOutcome out;
    out.per_image_matches.assign(annotations.size(), 0);
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const Annotation& ann = annotations[i];
        const auto it = dets_per_image.find(ann.image_path);
        if (it == dets_per_image.end()) continue;

        std::vector<Detection> dets = it->second;
        std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.rect.y != b.rect.y) return a.rect.y < b.rect.y;
            if (a.rect.x != b.rect.x) return a.rect.x < b.rect.x;
            if (a.rect.w != b.rect.w) return a.rect.w < b.rect.w;
            return a.rect.h < b.rect.h;
        });

        std::vector<bool> gt_used(ann.boxes.size(), false);
        for (const Detection& d : dets) {
            double best_iou = 0.0;
            std::size_t best_gt = ann.boxes.size();
            for (std::size_t g = 0; g < ann.boxes.size(); ++g) {
                if (gt_used[g]) continue;
                const double v = iou(d.rect, ann.boxes[g]);
                if (v > best_iou) {
                    best_iou = v;
                    best_gt = g;
                }
            }
            if (best_gt < ann.boxes.size() && best_iou >= iou_threshold) {
                gt_used[best_gt] = true;
                ++out.tp;
                ++out.per_image_matches[i];
            } else {
                ++out.fp;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("annotations: cannot open '" + path.string() + "'");
    const std::filesystem::path base = path.parent_path();

    std::vector<Annotation> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Annotation ann;
        int n_boxes = 0;
        if (!(ls >> ann.image_path >> n_boxes) || n_boxes < 0) {
            throw ConfigError("annotations: malformed record at line " + std::to_string(line_no));
        }
        for (int b = 0; b < n_boxes; ++b) {
            Rect r;
            if (!(ls >> r.x >> r.y >> r.w >> r.h)) {
                throw ConfigError("annotations: line " + std::to_string(line_no) + " declares " +
                                  std::to_string(n_boxes) + " boxes but fewer coordinates follow");
            }
            ann.boxes.push_back(r);
        }
        std::string extra;
        if (ls >> extra) {
            throw ConfigError("annotations: line " + std::to_string(line_no) + " has trailing fields");
        }

        const auto [img_w, img_h] = peek_pgm_size(base / ann.image_path);
        for (const Rect& r : ann.boxes) {
            if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > img_w || r.y + r.h > img_h) {
                throw ConfigError("annotations: line " + std::to_string(line_no) + " box outside image bounds");
            }
        }
        out.push_back(std::move(ann));
    }
    return out;
}

void validate(const SynthConfig& cfg) {
    if (cfg.base_window < 4) throw ConfigError("synth: base_window must be >= 4");
    if (cfg.num_positives < 0 || cfg.num_negatives < 0 || cfg.num_scenes < 0)
        throw ConfigError("synth: counts must be >= 0");
    if (cfg.negative_size < cfg.base_window) throw ConfigError("synth: negative_size must cover the base window");
    if (cfg.scene_size < 2 * cfg.base_window) throw ConfigError("synth: scene_size too small");
    if (cfg.max_objects_per_scene < 1) throw ConfigError("synth: max_objects_per_scene must be >= 1");
    if (!(cfg.max_object_scale >= 1.0)) throw ConfigError("synth: max_object_scale must be >= 1");
}

SynthDataset synth_dataset(const SynthConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    SynthDataset ds;

    Rng pos_rng(mix_seed(seed, 11));
    ds.positives.reserve(static_cast<std::size_t>(cfg.num_positives));
    for (int i = 0; i < cfg.num_positives; ++i) ds.positives.push_back(make_positive(cfg.base_window, pos_rng));

    Rng neg_rng(mix_seed(seed, 12));
    ds.negatives.reserve(static_cast<std::size_t>(cfg.num_negatives));
    for (int i = 0; i < cfg.num_negatives; ++i) {
        ds.negatives.push_back(textured_noise(cfg.negative_size, cfg.negative_size, neg_rng));
    }

    Rng scene_rng(mix_seed(seed, 13));
    ds.scenes.reserve(static_cast<std::size_t>(cfg.num_scenes));
    for (int i = 0; i < cfg.num_scenes; ++i) {
        Scene scene;
        scene.image = textured_noise(cfg.scene_size, cfg.scene_size, scene_rng);
        const int want = static_cast<int>(scene_rng.uniform_int(1, cfg.max_objects_per_scene));
        for (int k = 0; k < want; ++k) {
            // A handful of placement attempts; crowded scenes just get fewer objects.
            for (int attempt = 0; attempt < 40; ++attempt) {
                const double s = scene_rng.uniform(1.0, cfg.max_object_scale);
                const int side = static_cast<int>(std::llround(cfg.base_window * s));
                if (side > cfg.scene_size) continue;
                const int x = static_cast<int>(scene_rng.uniform_int(0, cfg.scene_size - side));
                const int y = static_cast<int>(scene_rng.uniform_int(0, cfg.scene_size - side));
                const Rect window{x, y, side, side};
                if (overlaps_any(window, scene.boxes, 8)) continue;
                render_object(scene.image, window, scene_rng);
                scene.boxes.push_back(window);
                break;
            }
        }
        ds.scenes.push_back(std::move(scene));
    }
    return ds;
}

EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& dets_per_image,
                    const std::vector<Annotation>& annotations, double iou_threshold) {
    EvalReport rep;
    rep.images = static_cast<int>(annotations.size());
    for (const Annotation& a : annotations) rep.ground_truth += static_cast<int>(a.boxes.size());

    const MatchOutcome m = greedy_match(dets_per_image, annotations, iou_threshold);
    rep.true_positives = m.tp;
    rep.false_positives = m.fp;
    rep.per_image_matches = m.per_image_matches;
    rep.detection_rate = rep.ground_truth > 0 ? static_cast<double>(m.tp) / rep.ground_truth : 0.0;
    rep.recall = rep.detection_rate;
    const int n_dets = m.tp + m.fp;
    rep.precision = n_dets > 0 ? static_cast<double>(m.tp) / n_dets : 0.0;
    rep.fp_per_image = rep.images > 0 ? static_cast<double>(m.fp) / rep.images : 0.0;
    return rep;
}

std::string format_report(const EvalReport& r) {
    std::string out;
    out += "detection_rate " + format_fixed(r.detection_rate, 6) + "\n";
    out += "fp_per_image " + format_fixed(r.fp_per_image, 6) + "\n";
    out += "precision " + format_fixed(r.precision, 6) + "\n";
    out += "recall " + format_fixed(r.recall, 6) + "\n";
    out += "true_positives " + std::to_string(r.true_positives) + "\n";
    out += "false_positives " + std::to_string(r.false_positives) + "\n";
    out += "ground_truth " + std::to_string(r.ground_truth) + "\n";
    out += "images " + std::to_string(r.images) + "\n";
    return out;
}

std::string operating_points_csv(const std::map<std::string, std::vector<Detection>>& dets_per_image,
                                 const std::vector<Annotation>& annotations, double iou_threshold) {
    std::set<double> cuts;
    for (const auto& [path, dets] : dets_per_image) {
        for (const Detection& d : dets) cuts.insert(d.score);
    }
    std::string out = "threshold,detection_rate,fp_per_image\n";
    for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
        const double cut = *it;
        std::map<std::string, std::vector<Detection>> filtered;
        for (const auto& [path, dets] : dets_per_image) {
            std::vector<Detection>& keep = filtered[path];
            for (const Detection& d : dets) {
                if (d.score >= cut) keep.push_back(d);
            }
        }
        const EvalReport rep = evaluate(filtered, annotations, iou_threshold);
        out += format_g17(cut) + "," + format_fixed(rep.detection_rate, 6) + "," +
               format_fixed(rep.fp_per_image, 6) + "\n";
    }
    return out;
}

}  // namespace haarkit
