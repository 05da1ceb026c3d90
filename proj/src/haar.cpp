#include "haarkit/haar.hpp"

#include <cmath>

namespace haarkit {
namespace {

struct TemplateSpec {
    FeatureKind kind;
    int cells_x;  // template width in unit rects
    int cells_y;  // template height in unit rects
};

constexpr TemplateSpec kTemplates[] = {
    {FeatureKind::EdgeHorizontal, 1, 2},
    {FeatureKind::EdgeVertical, 2, 1},
    {FeatureKind::LineHorizontal, 1, 3},
    {FeatureKind::LineVertical, 3, 1},
    {FeatureKind::FourSquareDiagonal, 2, 2},
};

void push_rect(HaarFeature& f, int x, int y, int w, int h, double weight) {
    f.rects[f.rect_count++] = WeightedRect{Rect{x, y, w, h}, weight};
}

// Default integer weights: (+1,-1) for two-rect templates, (+1,-2,+1) for
// three-rect, (+1,-1,-1,+1) for the four-square checker. First rect carries
// the positive lobe.
HaarFeature instantiate(FeatureKind kind, int x, int y, int uw, int uh) {
    HaarFeature f;
    f.kind = kind;
    switch (kind) {
        case FeatureKind::EdgeHorizontal:
            push_rect(f, x, y, uw, uh, +1.0);
            push_rect(f, x, y + uh, uw, uh, -1.0);
            break;
        case FeatureKind::EdgeVertical:
            push_rect(f, x, y, uw, uh, +1.0);
            push_rect(f, x + uw, y, uw, uh, -1.0);
            break;
        case FeatureKind::LineHorizontal:
            push_rect(f, x, y, uw, uh, +1.0);
            push_rect(f, x, y + uh, uw, uh, -2.0);
            push_rect(f, x, y + 2 * uh, uw, uh, +1.0);
            break;
        case FeatureKind::LineVertical:
            push_rect(f, x, y, uw, uh, +1.0);
            push_rect(f, x + uw, y, uw, uh, -2.0);
            push_rect(f, x + 2 * uw, y, uw, uh, +1.0);
            break;
        case FeatureKind::FourSquareDiagonal:
            push_rect(f, x, y, uw, uh, +1.0);
            push_rect(f, x + uw, y, uw, uh, -1.0);
            push_rect(f, x, y + uh, uw, uh, -1.0);
            push_rect(f, x + uw, y + uh, uw, uh, +1.0);
            break;
    }
    return f;
}

int round_px(double v) { return static_cast<int>(std::llround(v)); }

}  // namespace

const char* feature_kind_name(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::EdgeHorizontal: return "edge_horizontal";
        case FeatureKind::EdgeVertical: return "edge_vertical";
        case FeatureKind::LineHorizontal: return "line_horizontal";
        case FeatureKind::LineVertical: return "line_vertical";
        case FeatureKind::FourSquareDiagonal: return "four_square_diagonal";
    }
    throw DataError("feature_kind_name: bad kind");
}

FeatureKind feature_kind_from_name(const std::string& name) {
    for (const TemplateSpec& t : kTemplates) {
        if (name == feature_kind_name(t.kind)) return t.kind;
    }
    throw DataError("feature_kind_from_name: unknown kind '" + name + "'");
}

int feature_kind_rects(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::EdgeHorizontal:
        case FeatureKind::EdgeVertical: return 2;
        case FeatureKind::LineHorizontal:
        case FeatureKind::LineVertical: return 3;
        case FeatureKind::FourSquareDiagonal: return 4;
    }
    throw DataError("feature_kind_rects: bad kind");
}

std::vector<HaarFeature> enumerate_features(BaseWindow win, int stride, int min_size) {
    if (win.side < 4) throw DataError("enumerate_features: base window side must be >= 4");
    if (stride < 1 || min_size < 1) throw DataError("enumerate_features: stride and min_size must be >= 1");

    // Smallest unit side that is a multiple of stride and >= min_size.
    const int unit0 = ((min_size + stride - 1) / stride) * stride;

    std::vector<HaarFeature> out;
    for (const TemplateSpec& t : kTemplates) {
        for (int y = 0; y < win.side; y += stride) {
            for (int x = 0; x < win.side; x += stride) {
                for (int uh = unit0; y + t.cells_y * uh <= win.side; uh += stride) {
                    for (int uw = unit0; x + t.cells_x * uw <= win.side; uw += stride) {
                        out.push_back(instantiate(t.kind, x, y, uw, uh));
                    }
                }
            }
        }
    }
    return out;
}

HaarFeature scale_feature(const HaarFeature& feat, double scale, int base_side) {
    if (scale < 1.0) throw DataError("scale_feature: scale must be >= 1");
    if (scale == 1.0) return feat;

    const int scaled_side = round_px(base_side * scale);
    HaarFeature out = feat;
    double pos = 0.0;
    double neg = 0.0;
    for (std::uint8_t i = 0; i < out.rect_count; ++i) {
        const Rect& r = feat.rects[i].rect;
        int x0 = round_px(r.x * scale);
        int y0 = round_px(r.y * scale);
        int x1 = round_px((r.x + r.w) * scale);
        int y1 = round_px((r.y + r.h) * scale);
        if (x1 <= x0) x1 = x0 + 1;
        if (y1 <= y0) y1 = y0 + 1;
        // Keep the rect inside the scaled window.
        if (x1 > scaled_side) x1 = scaled_side;
        if (y1 > scaled_side) y1 = scaled_side;
        if (x0 >= x1) x0 = x1 - 1;
        if (y0 >= y1) y0 = y1 - 1;
        out.rects[i].rect = Rect{x0, y0, x1 - x0, y1 - y0};
        const double w = out.rects[i].weight;
        if (w > 0.0) pos += w;
        else neg -= w;
    }
    // Restore the zero-sum weight identity if the positive/negative balance
    // came out uneven. A no-op for the stock templates, whose weights are
    // untouched by geometric rounding.
    if (pos != neg && neg > 0.0) {
        const double ratio = pos / neg;
        for (std::uint8_t i = 0; i < out.rect_count; ++i) {
            if (out.rects[i].weight < 0.0) out.rects[i].weight *= ratio;
        }
    }
    return out;
}

}  // namespace haarkit
