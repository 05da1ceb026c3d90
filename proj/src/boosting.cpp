#include "haarkit/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "haarkit/errors.hpp"
#include "haarkit/parallel.hpp"

namespace haarkit {
namespace {

constexpr double kAlphaCap = 23.025850929940457;  // ln(1e10)

// Feature-block width for the per-round search. Values for one block are
// filled sample-major so every sample's integral image is visited once per
// block instead of once per feature.
constexpr std::size_t kSearchBlock = 2048;

// One threshold sweep over precomputed values. Boundary k means "the first k
// sorted samples fall below the candidate threshold"; prefix totals reuse the
// running accumulators, so a boundary with an empty misclassification set
// yields an exact zero. Candidates are midpoints between distinct values plus
// the two sentinels; ties break toward the smaller threshold, then +1.
StumpFit sweep_values(const double* values, std::span<const double> weights, std::span<const std::uint8_t> labels,
                      std::vector<std::uint32_t>& order) {
    const std::size_t n = weights.size();
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    std::sort(order.begin(), order.end(), [values](std::uint32_t a, std::uint32_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });

    double pos_total = 0.0;
    double neg_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t s = order[i];
        (labels[s] ? pos_total : neg_total) += weights[s];
    }

    StumpFit best;
    bool have_best = false;
    auto consider = [&](double theta, double pos_below, double neg_below) {
        // polarity +1 predicts positive below theta; -1 predicts positive above.
        const double err_pos = neg_below + (pos_total - pos_below);
        const double err_neg = pos_below + (neg_total - neg_below);
        for (int pol : {+1, -1}) {
            const double err = pol == +1 ? err_pos : err_neg;
            const bool better = !have_best || err < best.error ||
                                (err == best.error && (theta < best.threshold ||
                                                       (theta == best.threshold && pol > best.polarity)));
            if (better) {
                best = StumpFit{pol, theta, err};
                have_best = true;
            }
        }
    };

    consider(-kThresholdSentinel, 0.0, 0.0);
    double pos_run = 0.0;
    double neg_run = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t s = order[i];
        if (i > 0 && values[s] != values[order[i - 1]]) {
            consider((values[order[i - 1]] + values[s]) / 2.0, pos_run, neg_run);
        }
        (labels[s] ? pos_run : neg_run) += weights[s];
    }
    consider(kThresholdSentinel, pos_run, neg_run);
    return best;
}

void check_two_classes(std::span<const Sample> samples) {
    bool has_pos = false;
    bool has_neg = false;
    for (const Sample& s : samples) {
        (s.positive ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw TrainError("stump training needs both classes in the sample set");
}

// Misclassification weight of (polarity, theta), summed in sample-index order
// so it is bit-identical to a direct reference computation.
double direct_error(std::span<const double> values, std::span<const Sample> samples, const StumpFit& fit) {
    double err = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int h = fit.polarity * values[i] < fit.polarity * fit.threshold ? 1 : 0;
        if (h != (samples[i].positive ? 1 : 0)) err += samples[i].boost_weight;
    }
    return err;
}

}  // namespace

Sample make_sample(GrayImage window, bool positive, double sigma_floor) {
    Sample s;
    s.window = std::move(window);
    s.positive = positive;
    s.ii = integral(s.window);
    const Rect full{0, 0, s.ii.width(), s.ii.height()};
    s.inv_sigma = 1.0 / window_sigma(s.ii, full, sigma_floor);
    return s;
}

StumpFit fit_stump_1d(std::span<const double> values, std::span<const double> weights,
                      std::span<const std::uint8_t> labels) {
    std::vector<std::uint32_t> order;
    return sweep_values(values.data(), weights, labels, order);
}

TrainedStump train_stump(std::span<const Sample> samples, const HaarFeature& feature) {
    check_two_classes(samples);
    double total = 0.0;
    for (const Sample& s : samples) total += s.boost_weight;
    if (!(total > 0.0)) throw TrainError("train_stump: sample weights must be positive and normalized");
    std::vector<double> values(samples.size());
    std::vector<double> weights(samples.size());
    std::vector<std::uint8_t> labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        values[i] = sample_feature_value(samples[i], feature);
        weights[i] = samples[i].boost_weight;
        labels[i] = static_cast<std::uint8_t>(samples[i].positive);
    }
    std::vector<std::uint32_t> order;
    StumpFit fit = sweep_values(values.data(), weights, labels, order);
    fit.error = direct_error(values, samples, fit);

    TrainedStump out;
    out.classifier.feature = feature;
    out.classifier.polarity = fit.polarity;
    out.classifier.threshold = fit.threshold;
    out.error = fit.error;
    return out;
}

StrongEval eval_strong(const StrongClassifier& sc, const IntegralImage& ii, int ox, int oy, double scale,
                       int base_side, double sigma_floor) {
    const int side = static_cast<int>(std::llround(base_side * scale));
    const Rect window{ox, oy, side, side};
    require_rect_in(window, ii.width(), ii.height(), "eval_strong");
    const double inv_sigma = 1.0 / window_sigma(ii, window, sigma_floor);

    double score = 0.0;
    for (const WeakClassifier& stump : sc.stumps) {
        const double f = eval_feature(stump.feature, ii, ox, oy, scale, base_side) * inv_sigma;
        if (eval_stump(stump, f)) score += stump.alpha;
    }
    return {score >= sc.stage_threshold, score};
}

Booster::Booster(std::vector<Sample>& samples, std::span<const HaarFeature> features, int workers)
    : samples_(samples), features_(features), workers_(workers), scores_(samples.size(), 0.0) {
    if (features_.empty()) throw TrainError("boosting needs a non-empty feature pool");
    check_two_classes(samples_);
    // Viola-Jones initialization: each class starts with half the mass.
    std::size_t n_pos = 0;
    for (const Sample& s : samples_) n_pos += s.positive ? 1 : 0;
    const std::size_t n_neg = samples_.size() - n_pos;
    for (Sample& s : samples_) {
        s.boost_weight = s.positive ? 0.5 / static_cast<double>(n_pos) : 0.5 / static_cast<double>(n_neg);
    }
}

bool Booster::step() {
    if (terminated_) return false;

    double total = 0.0;
    for (const Sample& s : samples_) total += s.boost_weight;
    for (Sample& s : samples_) s.boost_weight /= total;

    const std::size_t n = samples_.size();
    std::vector<double> weights(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        weights[i] = samples_[i].boost_weight;
        labels[i] = static_cast<std::uint8_t>(samples_[i].positive);
    }

    struct Best {
        double error = 2.0;
        std::int64_t feature_index = -1;
        StumpFit fit;
    };
    const std::int64_t n_features = static_cast<std::int64_t>(features_.size());
    const auto partials = parallel_map_ranges<Best>(
        n_features, workers_, [&, this](std::int64_t, std::int64_t begin, std::int64_t end) {
            Best local;
            std::vector<double> block(kSearchBlock * n);
            std::vector<std::uint32_t> order;
            for (std::int64_t b0 = begin; b0 < end; b0 += static_cast<std::int64_t>(kSearchBlock)) {
                const std::int64_t b1 = std::min(end, b0 + static_cast<std::int64_t>(kSearchBlock));
                // Sample-major fill keeps each sample's integral image hot.
                for (std::size_t i = 0; i < n; ++i) {
                    const Sample& s = samples_[i];
                    for (std::int64_t fi = b0; fi < b1; ++fi) {
                        block[static_cast<std::size_t>(fi - b0) * n + i] = sample_feature_value(s, features_[fi]);
                    }
                }
                for (std::int64_t fi = b0; fi < b1; ++fi) {
                    const StumpFit fit =
                        sweep_values(block.data() + static_cast<std::size_t>(fi - b0) * n, weights, labels, order);
                    if (fit.error < local.error) {
                        local = Best{fit.error, fi, fit};
                    }
                }
            }
            return local;
        });
    Best best;
    for (const Best& p : partials) {
        if (p.feature_index < 0) continue;
        if (p.error < best.error || (p.error == best.error && p.feature_index < best.feature_index)) {
            best = p;
        }
    }

    // Recompute the winner's values once; the exact index-order error drives
    // the weight update and the abort checks.
    std::vector<double> values(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        values[i] = sample_feature_value(samples_[i], features_[best.feature_index]);
    }
    const double eps = direct_error(values, samples_, best.fit);
    if (eps >= 0.5) {
        throw TrainError("boosting round " + std::to_string(stumps_.size() + 1) +
                         ": best stump error " + std::to_string(eps) + " is no better than chance");
    }

    WeakClassifier stump;
    stump.feature = features_[best.feature_index];
    stump.feature_index = best.feature_index;
    stump.polarity = best.fit.polarity;
    stump.threshold = best.fit.threshold;

    double beta = 0.0;
    if (eps == 0.0) {
        stump.alpha = kAlphaCap;
        terminated_ = true;
    } else {
        beta = eps / (1.0 - eps);
        stump.alpha = std::log(1.0 / beta);
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const int h = stump.polarity * values[i] < stump.polarity * stump.threshold ? 1 : 0;
            if (h == (samples_[i].positive ? 1 : 0)) samples_[i].boost_weight *= beta;
        }
    }

    alpha_sum_ += stump.alpha;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const int h = stump.polarity * values[i] < stump.polarity * stump.threshold ? 1 : 0;
        if (h) scores_[i] += stump.alpha;
    }
    stumps_.push_back(stump);

    const double default_threshold = 0.5 * alpha_sum_;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const bool voted = scores_[i] >= default_threshold;
        if (voted != samples_[i].positive) ++wrong;
    }
    records_.push_back(RoundRecord{best.feature_index, eps, stump.alpha,
                                   static_cast<double>(wrong) / static_cast<double>(samples_.size())});
    return !terminated_;
}

StrongClassifier Booster::strong() const {
    if (stumps_.empty()) throw TrainError("no boosting rounds were run");
    return StrongClassifier{stumps_, 0.5 * alpha_sum_};
}

StrongClassifier train_stage(std::vector<Sample>& samples, std::span<const HaarFeature> features, int rounds,
                             int workers) {
    if (rounds < 1) throw TrainError("train_stage: round count must be >= 1");
    Booster booster(samples, features, workers);
    for (int t = 0; t < rounds; ++t) {
        if (!booster.step()) break;
    }
    return booster.strong();
}

}  // namespace haarkit
