#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "haarkit/cascade.hpp"
#include "haarkit/detector.hpp"
#include "haarkit/image.hpp"

namespace haarkit {

using Mask = Plane<std::uint8_t>;  // 0 or 1 per pixel

// Running-average background with absolute-difference thresholding. The first
// frame initializes the mean and yields an all-zero mask.
struct BackgroundModel {
    Plane<float> mean;
    double learning_rate = 0.02;  // in (0, 1]
    double threshold = 25.0;      // intensity units
    bool initialized = false;
};

// mask = |frame - mean| > threshold, evaluated against the pre-update mean;
// then mean <- (1 - rate) * mean + rate * frame.
Mask update_background(BackgroundModel& model, const GrayImage& frame);

struct Blob {
    int pixel_count = 0;
    Rect bbox;
    double cx = 0.0;  // centroid, unweighted mean of member pixel coordinates
    double cy = 0.0;
};

// 8-connected components, components under min_blob_area dropped, output
// ordered by (bbox.y, bbox.x).
std::vector<Blob> extract_blobs(const Mask& mask, int min_blob_area);

struct TrackPoint {
    int frame = 0;
    double x = 0.0;
    double y = 0.0;
};

struct Track {
    int id = 0;  // assigned once, never reused within a run
    std::vector<TrackPoint> history;
    int missed_frames = 0;
    bool retired = false;
    int side_state = 0;  // last off-line side of the virtual line, 0 = unknown
};

struct VirtualLine {
    double x0 = 0.0, y0 = 0.0;
    double x1 = 0.0, y1 = 0.0;
    int direction_sign = 1;  // flips which crossing direction counts as +1
};

// Signed side of the line through (x0,y0)-(x1,y1): positive on one side,
// negative on the other, 0 on the line, multiplied by direction_sign.
int line_side(const VirtualLine& line, double px, double py);

// Greedy nearest-centroid matching: candidate pairs within max_dist sorted by
// distance, each track and blob matched at most once. Matched tracks extend,
// unmatched blobs spawn new ids via next_id, unmatched tracks age and retire
// past max_missed.
void associate_tracks(std::vector<Track>& tracks, const std::vector<Blob>& blobs, int frame_index, double max_dist,
                      int max_missed, int& next_id);

// Net signed crossings over the track history: +1 per negative-to-positive
// side flip, -1 for the reverse. A point exactly on the line belongs to the
// side the track departs to next. Requires at least two history points.
int count_crossings(const Track& track, const VirtualLine& line);

struct PipelineConfig {
    double bg_learning_rate = 0.02;
    double bg_threshold = 25.0;
    int min_blob_area = 25;
    double max_dist = 25.0;
    int max_missed = 5;
    VirtualLine line;
    // Optional: take per-frame cascade detections as the blob source instead
    // of the motion mask.
    const Cascade* detector_cascade = nullptr;
    ScanConfig detector_scan;
    int workers = 1;
};

void validate(const PipelineConfig& cfg);

struct CrossingEvent {
    int frame = 0;
    int track_id = 0;
    int direction = 0;  // +1 or -1
};

struct PipelineResult {
    int frames = 0;
    std::vector<CrossingEvent> events;
    int up = 0;    // +1 crossings
    int down = 0;  // -1 crossings
    std::vector<Track> tracks;  // all tracks ever spawned, including retired
};

// Streaming composition: background subtraction -> blobs -> track association
// -> crossing events. `next_frame` returns frames in order until empty.
// Report lines, when a stream is given: per frame `F <idx> <n_blobs>
// <n_tracks>`, per event `X <frame> <track_id> <+1|-1>`, final
// `TOTAL <up> <down>`. Frame indices are 1-based.
PipelineResult run_pipeline(const std::function<std::optional<GrayImage>()>& next_frame, const PipelineConfig& cfg,
                            std::ostream* report = nullptr);

PipelineResult run_pipeline(const std::vector<GrayImage>& frames, const PipelineConfig& cfg,
                            std::ostream* report = nullptr);

}  // namespace haarkit
