#include "haarkit/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "haarkit/errors.hpp"

namespace haarkit {
namespace {

// Union-find over pixel labels for the two-pass connected component scan.
struct DisjointSet {
    std::vector<int> parent;

    int make() {
        parent.push_back(static_cast<int>(parent.size()));
        return parent.back();
    }
    int find(int i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Shared crossing step so the streaming pipeline and count_crossings cannot
// drift apart. Returns +1/-1 on a side flip, 0 otherwise.
int crossing_step(int& side_state, int new_side) {
    if (new_side == 0) return 0;
    int event = 0;
    if (side_state != 0 && new_side != side_state) {
        event = new_side > 0 ? +1 : -1;
    }
    side_state = new_side;
    return event;
}

}  // namespace

Mask update_background(BackgroundModel& model, const GrayImage& frame) {
    const Plane<float> frame_f = frame.cast<float>();
    if (!model.initialized) {
        model.mean = frame_f;
        model.initialized = true;
        return Mask::Zero(frame.rows(), frame.cols());
    }
    if (model.mean.rows() != frame.rows() || model.mean.cols() != frame.cols()) {
        throw DataError("update_background: frame shape does not match the model");
    }
    const float tau = static_cast<float>(model.threshold);
    const float rate = static_cast<float>(model.learning_rate);
    Mask mask = ((frame_f - model.mean).abs() > tau).cast<std::uint8_t>();
    model.mean = (1.0f - rate) * model.mean + rate * frame_f;
    return mask;
}

std::vector<Blob> extract_blobs(const Mask& mask, int min_blob_area) {
    if (min_blob_area < 1) throw DataError("extract_blobs: min_blob_area must be >= 1");
    const int h = static_cast<int>(mask.rows());
    const int w = static_cast<int>(mask.cols());

    std::vector<int> labels(static_cast<std::size_t>(h) * w, -1);
    DisjointSet ds;
    auto label_at = [&](int x, int y) -> int& { return labels[static_cast<std::size_t>(y) * w + x]; };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(y, x)) continue;
            int lbl = -1;
            // Previously scanned 8-neighbors: W, NW, N, NE.
            const int nx[4] = {x - 1, x - 1, x, x + 1};
            const int ny[4] = {y, y - 1, y - 1, y - 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= w || ny[k] < 0) continue;
                const int nl = label_at(nx[k], ny[k]);
                if (nl < 0) continue;
                if (lbl < 0) {
                    lbl = nl;
                } else {
                    ds.unite(lbl, nl);
                }
            }
            if (lbl < 0) lbl = ds.make();
            label_at(x, y) = lbl;
        }
    }

    struct Acc {
        std::int64_t count = 0;
        std::int64_t sx = 0, sy = 0;
        int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
    };
    std::map<int, Acc> comps;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int lbl = label_at(x, y);
            if (lbl < 0) continue;
            Acc& a = comps[ds.find(lbl)];
            ++a.count;
            a.sx += x;
            a.sy += y;
            a.min_x = std::min(a.min_x, x);
            a.min_y = std::min(a.min_y, y);
            a.max_x = std::max(a.max_x, x);
            a.max_y = std::max(a.max_y, y);
        }
    }

    std::vector<Blob> blobs;
    for (const auto& [lbl, a] : comps) {
        if (a.count < min_blob_area) continue;
        Blob b;
        b.pixel_count = static_cast<int>(a.count);
        b.bbox = Rect{a.min_x, a.min_y, a.max_x - a.min_x + 1, a.max_y - a.min_y + 1};
        b.cx = static_cast<double>(a.sx) / static_cast<double>(a.count);
        b.cy = static_cast<double>(a.sy) / static_cast<double>(a.count);
        blobs.push_back(b);
    }
    std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
        if (a.bbox.y != b.bbox.y) return a.bbox.y < b.bbox.y;
        if (a.bbox.x != b.bbox.x) return a.bbox.x < b.bbox.x;
        return a.pixel_count < b.pixel_count;
    });
    return blobs;
}

int line_side(const VirtualLine& line, double px, double py) {
    const double s = (line.y1 - line.y0) * (px - line.x0) - (line.x1 - line.x0) * (py - line.y0);
    const double signed_s = s * line.direction_sign;
    if (signed_s > 0.0) return 1;
    if (signed_s < 0.0) return -1;
    return 0;
}

void associate_tracks(std::vector<Track>& tracks, const std::vector<Blob>& blobs, int frame_index, double max_dist,
                      int max_missed, int& next_id) {
    struct Pair {
        double dist2;
        std::size_t track;
        std::size_t blob;
    };
    std::vector<Pair> pairs;
    const double max_dist2 = max_dist * max_dist;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
        if (tracks[t].retired || tracks[t].history.empty()) continue;
        const TrackPoint& last = tracks[t].history.back();
        for (std::size_t b = 0; b < blobs.size(); ++b) {
            const double dx = blobs[b].cx - last.x;
            const double dy = blobs[b].cy - last.y;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= max_dist2) pairs.push_back(Pair{d2, t, b});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        if (a.track != b.track) return a.track < b.track;
        return a.blob < b.blob;
    });

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> blob_used(blobs.size(), false);
    for (const Pair& p : pairs) {
        if (track_used[p.track] || blob_used[p.blob]) continue;
        track_used[p.track] = true;
        blob_used[p.blob] = true;
        tracks[p.track].history.push_back(TrackPoint{frame_index, blobs[p.blob].cx, blobs[p.blob].cy});
        tracks[p.track].missed_frames = 0;
    }

    for (std::size_t t = 0; t < tracks.size(); ++t) {
        if (tracks[t].retired || track_used[t]) continue;
        ++tracks[t].missed_frames;
        if (tracks[t].missed_frames > max_missed) tracks[t].retired = true;
    }
    for (std::size_t b = 0; b < blobs.size(); ++b) {
        if (blob_used[b]) continue;
        Track nt;
        nt.id = next_id++;
        nt.history.push_back(TrackPoint{frame_index, blobs[b].cx, blobs[b].cy});
        tracks.push_back(std::move(nt));
    }
}

int count_crossings(const Track& track, const VirtualLine& line) {
    if (track.history.size() < 2) throw DataError("count_crossings: track needs at least two history points");
    int state = 0;
    int net = 0;
    for (const TrackPoint& p : track.history) {
        net += crossing_step(state, line_side(line, p.x, p.y));
    }
    return net;
}

void validate(const PipelineConfig& cfg) {
    if (!(cfg.bg_learning_rate > 0.0 && cfg.bg_learning_rate <= 1.0))
        throw ConfigError("bg_learning_rate must be in (0, 1]");
    if (!(cfg.bg_threshold >= 0.0)) throw ConfigError("bg_threshold must be >= 0");
    if (cfg.min_blob_area < 1) throw ConfigError("min_blob_area must be >= 1");
    if (!(cfg.max_dist > 0.0)) throw ConfigError("max_dist must be > 0");
    if (cfg.max_missed < 0) throw ConfigError("max_missed must be >= 0");
    if (cfg.line.x0 == cfg.line.x1 && cfg.line.y0 == cfg.line.y1)
        throw ConfigError("virtual line endpoints must be distinct");
    if (cfg.line.direction_sign != 1 && cfg.line.direction_sign != -1)
        throw ConfigError("line direction_sign must be +1 or -1");
}

PipelineResult run_pipeline(const std::function<std::optional<GrayImage>()>& next_frame, const PipelineConfig& cfg,
                            std::ostream* report) {
    validate(cfg);
    BackgroundModel model;
    model.learning_rate = cfg.bg_learning_rate;
    model.threshold = cfg.bg_threshold;

    PipelineResult result;
    std::vector<Track>& tracks = result.tracks;
    int next_id = 1;
    int frame_index = 0;

    while (true) {
        std::optional<GrayImage> frame = next_frame();
        if (!frame) break;
        ++frame_index;

        std::vector<Blob> blobs;
        if (cfg.detector_cascade != nullptr) {
            // Detection-driven mode: each cascade detection stands in for a blob.
            for (const Detection& d :
                 detect(*cfg.detector_cascade, *frame, cfg.detector_scan, cfg.workers)) {
                Blob b;
                b.pixel_count = static_cast<int>(d.rect.area());
                b.bbox = d.rect;
                b.cx = d.rect.x + d.rect.w / 2.0;
                b.cy = d.rect.y + d.rect.h / 2.0;
                blobs.push_back(b);
            }
        } else {
            const Mask mask = update_background(model, *frame);
            blobs = extract_blobs(mask, cfg.min_blob_area);
        }

        associate_tracks(tracks, blobs, frame_index, cfg.max_dist, cfg.max_missed, next_id);

        // A track extended this frame may have crossed the line.
        for (Track& t : tracks) {
            if (t.retired || t.history.empty() || t.history.back().frame != frame_index) continue;
            const int side = line_side(cfg.line, t.history.back().x, t.history.back().y);
            const bool first_point = t.history.size() == 1;
            const int event = crossing_step(t.side_state, side);
            if (!first_point && event != 0) {
                result.events.push_back(CrossingEvent{frame_index, t.id, event});
                (event > 0 ? result.up : result.down) += 1;
                if (report) {
                    (*report) << "X " << frame_index << ' ' << t.id << ' ' << (event > 0 ? "+1" : "-1") << "\n";
                }
            }
        }

        if (report) {
            int active = 0;
            for (const Track& t : tracks) active += t.retired ? 0 : 1;
            (*report) << "F " << frame_index << ' ' << blobs.size() << ' ' << active << "\n";
        }
    }

    result.frames = frame_index;
    if (report) {
        (*report) << "TOTAL " << result.up << ' ' << result.down << "\n";
    }
    return result;
}

PipelineResult run_pipeline(const std::vector<GrayImage>& frames, const PipelineConfig& cfg, std::ostream* report) {
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].rows() != frames[0].rows() || frames[i].cols() != frames[0].cols()) {
            throw DataError("run_pipeline: inconsistent frame shapes");
        }
    }
    std::size_t i = 0;
    return run_pipeline(
        [&]() -> std::optional<GrayImage> {
            if (i >= frames.size()) return std::nullopt;
            return frames[i++];
        },
        cfg, report);
}

}  // namespace haarkit
