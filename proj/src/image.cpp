#include "haarkit/image.hpp"

namespace haarkit {

IntegralImage integral(const GrayImage& img) {
    const int h = static_cast<int>(img.rows());
    const int w = static_cast<int>(img.cols());
    if (w <= 0 || h <= 0) throw DataError("integral: empty image");

    IntegralImage ii;
    ii.sum.resize(h, w);
    ii.sq.resize(h, w);
    for (int y = 0; y < h; ++y) {
        std::uint64_t row_sum = 0;
        std::uint64_t row_sq = 0;
        for (int x = 0; x < w; ++x) {
            const std::uint64_t v = img(y, x);
            row_sum += v;
            row_sq += v * v;
            const std::uint64_t above = y > 0 ? ii.sum(y - 1, x) : 0;
            const std::uint64_t above_sq = y > 0 ? ii.sq(y - 1, x) : 0;
            ii.sum(y, x) = row_sum + above;
            ii.sq(y, x) = row_sq + above_sq;
        }
    }
    return ii;
}

std::uint64_t rect_sum_sq(const IntegralImage& ii, const Rect& r) {
    require_rect_in(r, ii.width(), ii.height(), "rect_sum_sq");
    const std::uint64_t d = ii.sq_cell(r.x + r.w - 1, r.y + r.h - 1);
    const std::uint64_t a = ii.sq_cell(r.x - 1, r.y - 1);
    const std::uint64_t b = ii.sq_cell(r.x + r.w - 1, r.y - 1);
    const std::uint64_t c = ii.sq_cell(r.x - 1, r.y + r.h - 1);
    return (d + a) - (b + c);
}

double window_sigma(const IntegralImage& ii, const Rect& r, double sigma_floor) {
    const double n = static_cast<double>(r.area());
    const double mean = static_cast<double>(rect_sum(ii, r)) / n;
    const double mean_sq = static_cast<double>(rect_sum_sq(ii, r)) / n;
    const double var = mean_sq - mean * mean;
    const double sigma = std::sqrt(var > 0.0 ? var : 0.0);
    return sigma > sigma_floor ? sigma : sigma_floor;
}

GrayImage resample_box(const IntegralImage& ii, const Rect& r, int out_side) {
    require_rect_in(r, ii.width(), ii.height(), "resample_box");
    if (out_side <= 0 || r.w < out_side || r.h < out_side) {
        throw DataError("resample_box: output side must be positive and no larger than the source rect");
    }
    // Edge grids are strictly increasing because the ratio is >= 1.
    auto edge = [](int origin, int extent, int out, int k) {
        return origin + static_cast<int>(std::llround(static_cast<double>(k) * extent / out));
    };
    GrayImage out = make_gray(out_side, out_side);
    for (int v = 0; v < out_side; ++v) {
        const int y0 = edge(r.y, r.h, out_side, v);
        const int y1 = edge(r.y, r.h, out_side, v + 1);
        for (int u = 0; u < out_side; ++u) {
            const int x0 = edge(r.x, r.w, out_side, u);
            const int x1 = edge(r.x, r.w, out_side, u + 1);
            const Rect cellr{x0, y0, x1 - x0, y1 - y0};
            const double m = rect_mean(ii, cellr);
            out(v, u) = static_cast<std::uint8_t>(std::llround(m));
        }
    }
    return out;
}

}  // namespace haarkit
