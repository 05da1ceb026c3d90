#include "haarkit/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "haarkit/errors.hpp"
#include "haarkit/fmt.hpp"
#include "haarkit/parallel.hpp"

namespace haarkit {
namespace {

struct ScaleLevel {
    double scale;
    int side;
    int stride;
    Cascade scaled;  // stages with pre-scaled features; thresholds unchanged
};

std::vector<ScaleLevel> build_levels(const Cascade& c, int img_w, int img_h, const ScanConfig& cfg) {
    std::vector<ScaleLevel> levels;
    const int base = c.base_window.side;
    for (double s = cfg.min_scale;; s *= cfg.scale_step) {
        if (cfg.max_scale > 0.0 && s > cfg.max_scale) break;
        const int side = static_cast<int>(std::llround(base * s));
        if (side > img_w || side > img_h) break;
        ScaleLevel lvl;
        lvl.scale = s;
        lvl.side = side;
        lvl.stride = std::max(1, static_cast<int>(std::llround(cfg.stride * s)));
        lvl.scaled.base_window = c.base_window;
        lvl.scaled.stages.reserve(c.stages.size());
        for (const StrongClassifier& stage : c.stages) {
            StrongClassifier scaled_stage;
            scaled_stage.stage_threshold = stage.stage_threshold;
            scaled_stage.stumps.reserve(stage.stumps.size());
            for (const WeakClassifier& stump : stage.stumps) {
                WeakClassifier sc = stump;
                sc.feature = scale_feature(stump.feature, s, base);
                scaled_stage.stumps.push_back(std::move(sc));
            }
            lvl.scaled.stages.push_back(std::move(scaled_stage));
        }
        levels.push_back(std::move(lvl));
    }
    return levels;
}

// Evaluates the pre-scaled stages at a window origin.
bool window_accept(const ScaleLevel& lvl, const IntegralImage& ii, int x, int y, double sigma_floor,
                   double* final_score) {
    const Rect window{x, y, lvl.side, lvl.side};
    const double inv_sigma = 1.0 / window_sigma(ii, window, sigma_floor);
    double score = 0.0;
    for (const StrongClassifier& stage : lvl.scaled.stages) {
        score = 0.0;
        for (const WeakClassifier& stump : stage.stumps) {
            const double f = eval_feature_scaled(stump.feature, ii, x, y) * inv_sigma;
            if (eval_stump(stump, f)) score += stump.alpha;
        }
        if (score < stage.stage_threshold) return false;
    }
    *final_score = score;
    return true;
}

struct RowTask {
    int level;
    int y;
};

}  // namespace

void validate(const ScanConfig& cfg) {
    if (!(cfg.scale_step > 1.0)) throw ConfigError("scale_step must be > 1");
    if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
    if (!(cfg.min_scale >= 1.0)) throw ConfigError("min_scale must be >= 1");
    if (cfg.max_scale != 0.0 && cfg.max_scale < cfg.min_scale) {
        throw ConfigError("max_scale must be 0 (auto) or >= min_scale");
    }
    if (cfg.group_min_neighbors < 1) throw ConfigError("group_min_neighbors must be >= 1");
    if (!(cfg.group_overlap > 0.0 && cfg.group_overlap <= 1.0)) throw ConfigError("group_overlap must be in (0, 1]");
    if (!(cfg.variance_floor > 0.0)) throw ConfigError("variance_floor must be > 0");
}

double iou(const Rect& a, const Rect& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    const double inter = static_cast<double>(x1 - x0) * (y1 - y0);
    const double uni = static_cast<double>(a.area() + b.area()) - inter;
    return inter / uni;
}

std::vector<Detection> scan(const Cascade& c, const GrayImage& img, const ScanConfig& cfg, int workers) {
    validate(cfg);
    const int w = static_cast<int>(img.cols());
    const int h = static_cast<int>(img.rows());
    if (w < c.base_window.side || h < c.base_window.side) {
        throw DataError("scan: image " + std::to_string(w) + "x" + std::to_string(h) +
                        " is smaller than the base window");
    }

    const IntegralImage ii = integral(img);
    const std::vector<ScaleLevel> levels = build_levels(c, w, h, cfg);

    // Row bands are the parallel unit; flattening them in (scale, y) order
    // keeps the raw output order independent of the worker count.
    std::vector<RowTask> tasks;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        for (int y = 0; y + levels[li].side <= h; y += levels[li].stride) {
            tasks.push_back(RowTask{static_cast<int>(li), y});
        }
    }

    auto chunks = parallel_map_ranges<std::vector<Detection>>(
        static_cast<std::int64_t>(tasks.size()), workers,
        [&](std::int64_t, std::int64_t begin, std::int64_t end) {
            std::vector<Detection> found;
            for (std::int64_t t = begin; t < end; ++t) {
                const ScaleLevel& lvl = levels[static_cast<std::size_t>(tasks[static_cast<std::size_t>(t)].level)];
                const int y = tasks[static_cast<std::size_t>(t)].y;
                for (int x = 0; x + lvl.side <= w; x += lvl.stride) {
                    double score = 0.0;
                    if (window_accept(lvl, ii, x, y, cfg.variance_floor, &score)) {
                        found.push_back(Detection{Rect{x, y, lvl.side, lvl.side}, score, lvl.scale});
                    }
                }
            }
            return found;
        });

    std::vector<Detection> out;
    for (auto& chunk : chunks) {
        out.insert(out.end(), chunk.begin(), chunk.end());
    }
    return out;
}

std::vector<Detection> group_detections(const std::vector<Detection>& dets, const ScanConfig& cfg,
                                        int image_width, int image_height) {
    const std::size_t n = dets.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (iou(dets[i].rect, dets[j].rect) >= cfg.group_overlap) {
                parent[find(i)] = find(j);
            }
        }
    }

    struct Cluster {
        std::int64_t count = 0;
        double sx = 0, sy = 0, sw = 0, sh = 0, sscale = 0;
        double max_score = 0.0;
        std::size_t first = 0;  // earliest member, for deterministic ordering
    };
    std::map<std::size_t, Cluster> clusters;
    for (std::size_t i = 0; i < n; ++i) {
        Cluster& cl = clusters.try_emplace(find(i), Cluster{}).first->second;
        if (cl.count == 0) {
            cl.first = i;
            cl.max_score = dets[i].score;
        } else {
            cl.max_score = std::max(cl.max_score, dets[i].score);
        }
        ++cl.count;
        cl.sx += dets[i].rect.x;
        cl.sy += dets[i].rect.y;
        cl.sw += dets[i].rect.w;
        cl.sh += dets[i].rect.h;
        cl.sscale += dets[i].scale;
    }

    std::vector<std::pair<std::size_t, Detection>> kept;
    for (const auto& [root, cl] : clusters) {
        if (cl.count < cfg.group_min_neighbors) continue;
        const double inv = 1.0 / static_cast<double>(cl.count);
        Rect r;
        r.x = static_cast<int>(std::llround(cl.sx * inv));
        r.y = static_cast<int>(std::llround(cl.sy * inv));
        r.w = static_cast<int>(std::llround(cl.sw * inv));
        r.h = static_cast<int>(std::llround(cl.sh * inv));
        // Averaged-then-rounded rects can poke one pixel past the border.
        if (image_width > 0 && r.x + r.w > image_width) r.w = image_width - r.x;
        if (image_height > 0 && r.y + r.h > image_height) r.h = image_height - r.y;
        kept.emplace_back(cl.first, Detection{r, cl.max_score, cl.sscale * inv});
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<Detection> out;
    out.reserve(kept.size());
    for (auto& [first, d] : kept) out.push_back(d);
    return out;
}

std::vector<Detection> detect(const Cascade& c, const GrayImage& img, const ScanConfig& cfg, int workers) {
    std::vector<Detection> grouped =
        group_detections(scan(c, img, cfg, workers), cfg, static_cast<int>(img.cols()), static_cast<int>(img.rows()));
    std::sort(grouped.begin(), grouped.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.rect.y != b.rect.y) return a.rect.y < b.rect.y;
        return a.rect.x < b.rect.x;
    });
    return grouped;
}

std::string detection_record(const Detection& d) {
    return std::to_string(d.rect.x) + " " + std::to_string(d.rect.y) + " " + std::to_string(d.rect.w) + " " +
           std::to_string(d.rect.h) + " " + format_fixed(d.score, 6) + " " + format_fixed(d.scale, 6);
}

}  // namespace haarkit
