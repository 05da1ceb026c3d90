#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "haarkit/haar.hpp"
#include "haarkit/image.hpp"

namespace haarkit {

// Finite stand-in for the +/- infinity threshold sentinels. Variance
// normalized feature values never leave [-1020, 1020], and a finite sentinel
// keeps model files plain JSON.
inline constexpr double kThresholdSentinel = 1e9;

// Decision stump: h = 1 iff polarity * f < polarity * threshold.
struct WeakClassifier {
    HaarFeature feature;
    std::int64_t feature_index = -1;  // position in the enumeration order, -1 if unknown
    int polarity = +1;                // exactly +1 or -1
    double threshold = 0.0;
    double alpha = 0.0;               // vote weight, finite and >= 0
};

inline int eval_stump(const WeakClassifier& c, double f_value) {
    return c.polarity * f_value < c.polarity * c.threshold ? 1 : 0;
}

struct StrongClassifier {
    std::vector<WeakClassifier> stumps;
    double stage_threshold = 0.0;  // never above the sum of alphas
};

// A training window of base-window size with its cached integral image and
// contrast normalizer. Feature values for a sample are always evaluated as
// raw value / window sigma so that training matches the scanner.
struct Sample {
    GrayImage window;
    bool positive = false;
    double boost_weight = 0.0;
    IntegralImage ii;
    double inv_sigma = 1.0;
};

Sample make_sample(GrayImage window, bool positive, double sigma_floor = 1.0);

inline double sample_feature_value(const Sample& s, const HaarFeature& feat) {
    return eval_feature_scaled(feat, s.ii, 0, 0) * s.inv_sigma;
}

struct TrainedStump {
    WeakClassifier classifier;
    double error = 0.0;  // weighted misclassification, in [0, 0.5] after polarity choice
};

// Optimal (polarity, threshold) for one feature under the current sample
// weights. Threshold candidates are the midpoints between consecutive
// distinct feature values plus the two sentinels; ties in error break toward
// the smaller threshold, then polarity +1. The reported error is recomputed
// by direct summation in sample-index order.
TrainedStump train_stump(std::span<const Sample> samples, const HaarFeature& feature);

// Same search over precomputed 1-D values; exposed for the threshold-sweep
// oracle tests.
struct StumpFit {
    int polarity = +1;
    double threshold = 0.0;
    double error = 0.0;
};
StumpFit fit_stump_1d(std::span<const double> values, std::span<const double> weights,
                      std::span<const std::uint8_t> labels);

struct StrongEval {
    bool pass = false;
    double score = 0.0;
};

// Weighted vote of the stage's stumps over the window at (ox, oy) scaled by
// `scale`. Feature values are divided by the window standard deviation
// (clamped to sigma_floor) before thresholding.
StrongEval eval_strong(const StrongClassifier& sc, const IntegralImage& ii, int ox, int oy, double scale,
                       int base_side, double sigma_floor = 1.0);

// One boosting round's outcome, kept for logs and diagnostics.
struct RoundRecord {
    std::int64_t feature_index = -1;
    double stump_error = 0.0;
    double alpha = 0.0;
    double train_error = 0.0;  // stage misclassification at the default threshold
};

// Incremental AdaBoost over a fixed sample set and feature pool. Each step
// normalizes the weights, picks the globally best stump, and downweights the
// correctly classified samples by beta = eps / (1 - eps). Partial searches
// run per worker and merge by (error, feature index), so any worker count
// selects identical stumps.
class Booster {
public:
    Booster(std::vector<Sample>& samples, std::span<const HaarFeature> features, int workers = 1);

    // Adds one stump. Returns false when boosting terminated early because
    // the stump was perfect (its alpha is capped at ln(1e10)); further steps
    // would be degenerate. Throws TrainError if the best stump is no better
    // than chance.
    bool step();

    StrongClassifier strong() const;  // default threshold: half the alpha sum
    const std::vector<RoundRecord>& records() const { return records_; }
    const std::vector<double>& sample_scores() const { return scores_; }
    double alpha_sum() const { return alpha_sum_; }
    int rounds() const { return static_cast<int>(stumps_.size()); }

private:
    std::vector<Sample>& samples_;
    std::span<const HaarFeature> features_;
    int workers_;
    std::vector<WeakClassifier> stumps_;
    std::vector<RoundRecord> records_;
    std::vector<double> scores_;  // running weighted vote per sample
    double alpha_sum_ = 0.0;
    bool terminated_ = false;
};

// Classic stage training: T boosting rounds (fewer if a round is perfect),
// stage threshold at half the alpha sum.
StrongClassifier train_stage(std::vector<Sample>& samples, std::span<const HaarFeature> features, int rounds,
                             int workers = 1);

}  // namespace haarkit
