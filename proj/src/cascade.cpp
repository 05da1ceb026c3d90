#include "haarkit/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "haarkit/errors.hpp"
#include "haarkit/fmt.hpp"
#include "haarkit/rng.hpp"

namespace haarkit {
namespace {

// Mining geometry mirrors the detector defaults so mined negatives match the
// deployment distribution.
constexpr int kMineStride = 2;
constexpr double kMineScaleStep = 1.25;
constexpr double kMineSigmaFloor = 1.0;

// Substream tags for seed derivation.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kMineStreamBase = 100;

double sample_stage_score(const StrongClassifier& sc, const Sample& s) {
    double score = 0.0;
    for (const WeakClassifier& stump : sc.stumps) {
        const double f = sample_feature_value(s, stump.feature);
        if (eval_stump(stump, f)) score += stump.alpha;
    }
    return score;
}

struct StageBuildResult {
    StrongClassifier stage;
    double detection_rate = 0.0;  // on the validation split, at the final threshold
    double fp_rate = 0.0;         // on the stage's mined negatives, at the final threshold
};

// Grows the stage one stump at a time. After each round the threshold is
// lowered from the default just enough to hit the detection target on the
// validation positives, then the false-positive rate is measured on the
// training negatives. Stops at the first stump count meeting both targets.
StageBuildResult build_stage(std::vector<Sample>& stage_samples, std::span<const Sample> val_positives,
                             std::span<const HaarFeature> features, const CascadeTrainConfig& cfg, int workers) {
    const std::size_t n_val = val_positives.size();
    const std::size_t allowed_misses =
        n_val - static_cast<std::size_t>(std::ceil(cfg.per_stage_min_detection * static_cast<double>(n_val)));

    std::size_t n_neg = 0;
    for (const Sample& s : stage_samples) n_neg += s.positive ? 0 : 1;

    Booster booster(stage_samples, features, workers);
    std::vector<double> val_scores(n_val, 0.0);

    bool can_grow = true;
    while (true) {
        can_grow = booster.step();
        const WeakClassifier stump = booster.strong().stumps.back();
        for (std::size_t i = 0; i < n_val; ++i) {
            const double f = sample_feature_value(val_positives[i], stump.feature);
            if (eval_stump(stump, f)) val_scores[i] += stump.alpha;
        }

        StrongClassifier sc = booster.strong();
        std::vector<double> sorted_val(val_scores);
        std::sort(sorted_val.begin(), sorted_val.end());
        // The detection-target quantile of a desk-scale validation split is an
        // optimistic estimate of the true quantile, so back the threshold off
        // further: by half the gap to the validation median, and by at least
        // one stump's vote so a positive at the validation minimum survives a
        // single stump flipping. The false-positive check below then grows the
        // stage until the lower threshold is affordable.
        double max_alpha = 0.0;
        for (const WeakClassifier& st : sc.stumps) max_alpha = std::max(max_alpha, st.alpha);
        const double low = sorted_val[allowed_misses];
        const double median = sorted_val[n_val / 2];
        const double det_threshold = low - std::max(0.5 * (median - low), max_alpha);
        sc.stage_threshold = std::min(sc.stage_threshold, det_threshold);

        std::size_t detected = 0;
        for (double s : val_scores) detected += s >= sc.stage_threshold ? 1 : 0;
        std::size_t false_pos = 0;
        const auto& scores = booster.sample_scores();
        for (std::size_t i = 0; i < stage_samples.size(); ++i) {
            if (!stage_samples[i].positive && scores[i] >= sc.stage_threshold) ++false_pos;
        }
        const double det_rate = static_cast<double>(detected) / static_cast<double>(n_val);
        const double fp_rate = static_cast<double>(false_pos) / static_cast<double>(n_neg);

        if (fp_rate <= cfg.per_stage_max_fp && det_rate >= cfg.per_stage_min_detection) {
            return StageBuildResult{std::move(sc), det_rate, fp_rate};
        }
        if (!can_grow) {
            throw TrainError("stage targets unattainable: boosting terminated at " +
                             std::to_string(booster.rounds()) + " stumps with fp rate " + std::to_string(fp_rate));
        }
        if (booster.rounds() >= cfg.stumps_per_stage_cap) {
            throw TrainError("stage targets unattainable at the stump cap (" +
                             std::to_string(cfg.stumps_per_stage_cap) + " stumps, fp rate " +
                             std::to_string(fp_rate) + ")");
        }
    }
}

}  // namespace

void validate(const CascadeTrainConfig& cfg) {
    if (!(cfg.per_stage_min_detection > 0.0 && cfg.per_stage_min_detection <= 1.0))
        throw ConfigError("per_stage_min_detection must be in (0, 1]");
    if (!(cfg.per_stage_max_fp > 0.0 && cfg.per_stage_max_fp < 1.0))
        throw ConfigError("per_stage_max_fp must be in (0, 1)");
    if (!(cfg.target_overall_fp > 0.0 && cfg.target_overall_fp < 1.0))
        throw ConfigError("target_overall_fp must be in (0, 1)");
    if (cfg.max_stages < 1) throw ConfigError("max_stages must be >= 1");
    if (cfg.stumps_per_stage_cap < 1) throw ConfigError("stumps_per_stage_cap must be >= 1");
}

CascadeEval eval_cascade(const Cascade& c, const IntegralImage& ii, int ox, int oy, double scale,
                         double sigma_floor) {
    CascadeEval out;
    for (const StrongClassifier& stage : c.stages) {
        const StrongEval se = eval_strong(stage, ii, ox, oy, scale, c.base_window.side, sigma_floor);
        ++out.stages_evaluated;
        out.final_score = se.score;
        if (!se.pass) {
            out.accept = false;
            return out;
        }
    }
    out.accept = true;
    return out;
}

std::uint64_t mine_seed(std::uint64_t config_seed, std::size_t stage_index) {
    return mix_seed(config_seed, kMineStreamBase + stage_index);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, kSplitStream));
    rng.shuffle(idx);
    const std::size_t n_train = (n * 4) / 5;
    std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> val(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return {std::move(train), std::move(val)};
}

MinePass mine_negatives(const Cascade& cascade, std::span<const GrayImage> pool, std::size_t max_keep,
                        std::uint64_t seed) {
    MinePass pass;
    Rng rng(seed);
    const int base = cascade.base_window.side;

    for (const GrayImage& img : pool) {
        const int w = static_cast<int>(img.cols());
        const int h = static_cast<int>(img.rows());
        if (w < base || h < base) continue;
        const IntegralImage ii = integral(img);

        for (double scale = 1.0;; scale *= kMineScaleStep) {
            const int side = static_cast<int>(std::llround(base * scale));
            if (side > w || side > h) break;
            const int stride = std::max(1, static_cast<int>(std::llround(kMineStride * scale)));
            for (int y = 0; y + side <= h; y += stride) {
                for (int x = 0; x + side <= w; x += stride) {
                    ++pass.windows_scanned;
                    const bool accepted = cascade.stages.empty()
                                              ? true
                                              : eval_cascade(cascade, ii, x, y, scale, kMineSigmaFloor).accept;
                    if (!accepted) continue;
                    ++pass.windows_accepted;
                    if (max_keep == 0) continue;
                    // Reservoir sampling keeps the stored negatives spread
                    // over the whole pool; crops happen only on insertion.
                    if (pass.negatives.size() < max_keep) {
                        pass.negatives.push_back(resample_box(ii, Rect{x, y, side, side}, base));
                    } else {
                        const std::uint64_t j = rng.bounded(static_cast<std::uint64_t>(pass.windows_accepted));
                        if (j < max_keep) {
                            pass.negatives[static_cast<std::size_t>(j)] =
                                resample_box(ii, Rect{x, y, side, side}, base);
                        }
                    }
                }
            }
        }
    }
    return pass;
}

Cascade train_cascade(std::span<const GrayImage> positives, std::span<const GrayImage> negative_pool,
                      std::span<const HaarFeature> features, const CascadeTrainConfig& cfg, int workers,
                      std::ostream* log) {
    validate(cfg);
    if (positives.size() < 50) throw TrainError("train_cascade: need at least 50 positive windows");
    if (negative_pool.empty()) throw TrainError("train_cascade: negative pool is empty");

    Cascade cascade;
    for (const GrayImage& p : positives) {
        if (p.cols() != cascade.base_window.side || p.rows() != cascade.base_window.side) {
            throw TrainError("train_cascade: every positive must be base-window sized (" +
                             std::to_string(cascade.base_window.side) + ")");
        }
    }

    const auto [train_idx, val_idx] = split_train_val(positives.size(), cfg.seed);
    std::vector<Sample> train_pos;
    train_pos.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_pos.push_back(make_sample(positives[i], true));
    std::vector<Sample> val_pos;
    val_pos.reserve(val_idx.size());
    for (std::size_t i : val_idx) val_pos.push_back(make_sample(positives[i], true));
    if (train_pos.empty() || val_pos.empty()) throw TrainError("train_cascade: positive split is degenerate");

    const std::size_t negatives_per_stage = train_pos.size();
    std::string warning = "none";
    double measured_overall_fp = 1.0;
    std::string stage_fp_rates;
    std::string stage_det_rates;

    while (true) {
        const MinePass pass = mine_negatives(cascade, negative_pool, negatives_per_stage,
                                             mine_seed(cfg.seed, cascade.stages.size()));
        measured_overall_fp = pass.accept_rate();
        if (log) {
            (*log) << "mining after stage " << cascade.stages.size() << ": accepts=" << pass.windows_accepted
                   << "/" << pass.windows_scanned << " rate=" << measured_overall_fp << "\n";
        }
        if (measured_overall_fp <= cfg.target_overall_fp) break;
        if (static_cast<int>(cascade.stages.size()) >= cfg.max_stages) break;
        if (pass.negatives.size() < negatives_per_stage) {
            warning = "negative_pool_exhausted";
            break;
        }

        std::vector<Sample> stage_samples;
        stage_samples.reserve(train_pos.size() + pass.negatives.size());
        for (const Sample& s : train_pos) stage_samples.push_back(s);
        for (const GrayImage& n : pass.negatives) stage_samples.push_back(make_sample(n, false));

        StageBuildResult built = build_stage(stage_samples, val_pos, features, cfg, workers);
        cascade.stages.push_back(std::move(built.stage));
        if (!stage_fp_rates.empty()) {
            stage_fp_rates += ",";
            stage_det_rates += ",";
        }
        stage_fp_rates += format_g17(built.fp_rate);
        stage_det_rates += format_g17(built.detection_rate);
        if (log) {
            (*log) << "stage " << cascade.stages.size() << ": stumps=" << cascade.stages.back().stumps.size()
                   << " det=" << built.detection_rate << " fp=" << built.fp_rate << "\n";
        }
    }

    cascade.metadata["format"] = "haarkit";
    cascade.metadata["positives"] = std::to_string(positives.size());
    cascade.metadata["negative_pool_images"] = std::to_string(negative_pool.size());
    cascade.metadata["seed"] = std::to_string(cfg.seed);
    cascade.metadata["per_stage_min_detection"] = format_g17(cfg.per_stage_min_detection);
    cascade.metadata["per_stage_max_fp"] = format_g17(cfg.per_stage_max_fp);
    cascade.metadata["target_overall_fp"] = format_g17(cfg.target_overall_fp);
    cascade.metadata["measured_overall_fp"] = format_g17(measured_overall_fp);
    cascade.metadata["stage_fp_rates"] = stage_fp_rates;
    cascade.metadata["stage_detection_rates"] = stage_det_rates;
    cascade.metadata["warning"] = warning;

    if (cascade.stages.empty()) {
        throw TrainError("train_cascade: no stage could be trained (pool exhausted immediately)");
    }
    return cascade;
}

}  // namespace haarkit
