#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "haarkit/image.hpp"

namespace haarkit {

// The five classic rectangle templates. The tag names the edge/line
// orientation the template responds to: an EdgeHorizontal feature stacks two
// rects vertically, a LineVertical feature places three side by side.
enum class FeatureKind : std::uint8_t {
    EdgeHorizontal = 0,
    EdgeVertical = 1,
    LineHorizontal = 2,
    LineVertical = 3,
    FourSquareDiagonal = 4,
};

const char* feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);
int feature_kind_rects(FeatureKind kind);

struct WeightedRect {
    Rect rect;
    double weight = 0.0;

    friend bool operator==(const WeightedRect&, const WeightedRect&) = default;
};

// A weighted rectangle set inside a base window. The feature value is the
// weighted sum of rectangle MEANS, and the weights of every feature ever
// constructed sum to zero exactly, so constant regions always score 0.
struct HaarFeature {
    FeatureKind kind = FeatureKind::EdgeHorizontal;
    std::uint8_t rect_count = 0;
    std::array<WeightedRect, 4> rects{};

    std::span<const WeightedRect> rect_span() const { return {rects.data(), rect_count}; }
    friend bool operator==(const HaarFeature&, const HaarFeature&) = default;
};

struct BaseWindow {
    int side = 24;
};

// Enumerates every template placement on the stride grid: offsets x, y and
// unit rect sides are multiples of `stride`, unit sides at least `min_size`.
// Order is fixed: kind tag, then y, x ascending, then unit height, unit width
// ascending. The full 24-window set at stride 1, min_size 1 has 162336
// entries.
std::vector<HaarFeature> enumerate_features(BaseWindow win, int stride = 1, int min_size = 1);

// Rect coordinates and extents multiplied by `scale`, each edge rounded to
// the nearest pixel independently, extents clamped to at least one pixel and
// into the scaled window. If rounding upset the positive/negative weight
// balance, negative weights are rescaled by the positive-to-negative ratio so
// the weights again sum to zero exactly.
HaarFeature scale_feature(const HaarFeature& feat, double scale, int base_side);

// f = sum of w_i * mean_i over the feature's rects, translated by (ox, oy)
// and scaled by `scale`. Costs exactly four table reads per rect no matter
// the scale.
template <IntegralTable Table>
double eval_feature_scaled(const HaarFeature& feat, const Table& ii, int ox, int oy) {
    double f = 0.0;
    for (const WeightedRect& wr : feat.rect_span()) {
        Rect r = wr.rect;
        r.x += ox;
        r.y += oy;
        f += wr.weight * rect_mean(ii, r);
    }
    return f;
}

template <IntegralTable Table>
double eval_feature(const HaarFeature& feat, const Table& ii, int ox, int oy, double scale, int base_side) {
    if (scale == 1.0) return eval_feature_scaled(feat, ii, ox, oy);
    return eval_feature_scaled(scale_feature(feat, scale, base_side), ii, ox, oy);
}

}  // namespace haarkit
