#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "haarkit/detector.hpp"
#include "haarkit/image.hpp"

namespace haarkit {

struct Annotation {
    std::string image_path;
    std::vector<Rect> boxes;
};

// Text format, one record per line: `<image_path> <n> x1 y1 w1 h1 ...`.
// Paths resolve relative to the annotation file's directory; every box is
// validated against the image header.
std::vector<Annotation> load_annotations(const std::filesystem::path& path);

// Synthetic desk-scale task: bright, slightly jittered squares over textured
// noise. Positives are base-window crops, negatives are object-free textured
// noise images, scenes are larger annotated compositions of the same pattern.
struct SynthConfig {
    int base_window = 24;
    int num_positives = 600;
    int num_negatives = 300;
    int num_scenes = 50;
    int negative_size = 96;
    int scene_size = 160;
    int max_objects_per_scene = 3;
    double max_object_scale = 1.6;
};

void validate(const SynthConfig& cfg);

struct Scene {
    GrayImage image;
    std::vector<Rect> boxes;  // window-sized ground-truth boxes
};

struct SynthDataset {
    std::vector<GrayImage> positives;
    std::vector<GrayImage> negatives;
    std::vector<Scene> scenes;
};

// Bit-identical output for a given (config, seed).
SynthDataset synth_dataset(const SynthConfig& cfg, std::uint64_t seed);

struct EvalReport {
    double detection_rate = 0.0;  // TP / GT
    double fp_per_image = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    int true_positives = 0;
    int false_positives = 0;
    int ground_truth = 0;
    int images = 0;
    // matched ground-truth count per image, in annotation order
    std::vector<int> per_image_matches;
};

// Greedy one-to-one matching by descending score at the IoU threshold.
// Detection order does not matter: ties in score break on rect coordinates.
EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& dets_per_image,
                    const std::vector<Annotation>& annotations, double iou_threshold = 0.5);

// Fixed-format report, one `<name> <value>` line per field.
std::string format_report(const EvalReport& report);

// Detection-rate / FP-per-image pairs swept over score cutoffs, as CSV rows
// "threshold,detection_rate,fp_per_image".
std::string operating_points_csv(const std::map<std::string, std::vector<Detection>>& dets_per_image,
                                 const std::vector<Annotation>& annotations, double iou_threshold = 0.5);

}  // namespace haarkit
