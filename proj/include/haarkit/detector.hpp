#pragma once

#include <vector>

#include "haarkit/cascade.hpp"
#include "haarkit/image.hpp"

namespace haarkit {

struct Detection {
    Rect rect;      // in source-image pixels
    double score;   // final-stage score
    double scale;   // window scale relative to the base window
};

struct ScanConfig {
    double scale_step = 1.25;     // > 1
    int stride = 2;               // pixels at base scale, scaled per level, min 1
    double min_scale = 1.0;       // >= 1
    double max_scale = 0.0;       // 0 = as large as fits the image
    int group_min_neighbors = 3;  // clusters smaller than this are dropped
    double group_overlap = 0.3;   // IoU threshold for clustering
    double variance_floor = 1.0;  // lower clamp on the window sigma
};

void validate(const ScanConfig& cfg);

double iou(const Rect& a, const Rect& b);

// Multi-scale sliding-window scan. The detector itself is scaled (features
// rescaled once per level, the image untouched), so every window costs the
// same number of reads regardless of size. Windows enumerate in (scale, y, x)
// order; raw output preserves that order for any worker count.
std::vector<Detection> scan(const Cascade& c, const GrayImage& img, const ScanConfig& cfg, int workers = 1);

// Clusters raw hits under the transitive closure of the IoU >= group_overlap
// relation, drops clusters smaller than group_min_neighbors, and emits one
// detection per surviving cluster: the member-average rect with the maximum
// member score and the mean member scale.
std::vector<Detection> group_detections(const std::vector<Detection>& dets, const ScanConfig& cfg,
                                        int image_width, int image_height);

// scan then group; output sorted by score descending, ties by (y, x).
std::vector<Detection> detect(const Cascade& c, const GrayImage& img, const ScanConfig& cfg, int workers = 1);

// One record per line: `x y w h score scale`, fixed decimal formatting.
std::string detection_record(const Detection& d);

}  // namespace haarkit
