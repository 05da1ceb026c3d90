#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "haarkit/boosting.hpp"

namespace haarkit {

// Ordered strong classifiers with per-stage rejection thresholds. A window is
// accepted only if every stage passes; any stage's rejection is final.
struct Cascade {
    BaseWindow base_window;
    std::vector<StrongClassifier> stages;
    std::map<std::string, std::string> metadata;  // training provenance, canonical strings
};

struct CascadeTrainConfig {
    double per_stage_min_detection = 0.995;  // in (0, 1]
    double per_stage_max_fp = 0.5;           // in (0, 1)
    double target_overall_fp = 1e-3;         // in (0, 1)
    int max_stages = 20;
    int stumps_per_stage_cap = 200;
    std::uint64_t seed = 1;
};

void validate(const CascadeTrainConfig& cfg);

struct CascadeEval {
    bool accept = false;
    int stages_evaluated = 0;  // how many stages actually ran
    double final_score = 0.0;  // score of the last stage evaluated
};

// Stages run in order; the first failing stage short-circuits.
CascadeEval eval_cascade(const Cascade& c, const IntegralImage& ii, int ox, int oy, double scale,
                         double sigma_floor = 1.0);

// Deterministic 80/20 split of the positive indices, shuffled by the seed.
// First part trains, second part validates stage thresholds.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n, std::uint64_t seed);

// One full mining pass over the pool at stride 2 / scale step 1.25: every
// window the current cascade accepts counts toward the measured overall
// false-positive rate, and up to `max_keep` accepted windows are kept as
// training negatives via seeded reservoir sampling.
struct MinePass {
    std::vector<GrayImage> negatives;  // base-window crops
    std::int64_t windows_scanned = 0;
    std::int64_t windows_accepted = 0;

    double accept_rate() const {
        return windows_scanned == 0 ? 0.0 : static_cast<double>(windows_accepted) / static_cast<double>(windows_scanned);
    }
};
MinePass mine_negatives(const Cascade& cascade, std::span<const GrayImage> pool, std::size_t max_keep,
                        std::uint64_t seed);

// Seed the mining pass before appending stage `stage_index` uses; part of the
// determinism contract.
std::uint64_t mine_seed(std::uint64_t config_seed, std::size_t stage_index);

// Stage-wise training with bootstrapped negatives. Stages are appended until
// the mining pass measures an overall false-positive rate at or below
// target_overall_fp, or max_stages is reached. Each stage grows one stump at
// a time until it meets the detection target on the validation split (the
// stage threshold is lowered from half the alpha sum as needed) and the
// false-positive target on its mined negatives. If the pool cannot supply
// enough fresh negatives, training stops with metadata["warning"] set.
Cascade train_cascade(std::span<const GrayImage> positives, std::span<const GrayImage> negative_pool,
                      std::span<const HaarFeature> features, const CascadeTrainConfig& cfg, int workers = 1,
                      std::ostream* log = nullptr);

// Versioned canonical JSON: sorted keys, two-space indent, floats at 17
// significant digits. Identical cascades serialize to identical bytes.
void save_cascade(const Cascade& c, const std::filesystem::path& path);
Cascade load_cascade(const std::filesystem::path& path);
std::string cascade_to_string(const Cascade& c);
Cascade cascade_from_string(const std::string& text);

}  // namespace haarkit
