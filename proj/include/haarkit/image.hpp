#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>

#include "haarkit/errors.hpp"

namespace haarkit {

// Dense pixel planes are row-major Eigen arrays indexed (y, x), so the memory
// layout matches a binary PGM payload and `plane.data()` walks rows
// top-to-bottom.
template <class Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Plane<std::uint8_t>;

inline GrayImage make_gray(int width, int height, std::uint8_t fill = 0) {
    return GrayImage::Constant(height, width, fill);
}

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    friend bool operator==(const Rect&, const Rect&) = default;
    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
};

// Summed-area table over intensities and squared intensities, inclusive
// convention: cell(x, y) covers all pixels with x' <= x and y' <= y. Reads at
// coordinate -1 return 0, which keeps the four-corner rectangle algebra
// branch-free at the image border. 64-bit cells cannot overflow below
// 65535 x 65535 at 8-bit depth on either channel.
struct IntegralImage {
    Plane<std::uint64_t> sum;
    Plane<std::uint64_t> sq;

    int width() const { return static_cast<int>(sum.cols()); }
    int height() const { return static_cast<int>(sum.rows()); }

    std::uint64_t cell(int x, int y) const { return (x < 0 || y < 0) ? 0 : sum(y, x); }
    std::uint64_t sq_cell(int x, int y) const { return (x < 0 || y < 0) ? 0 : sq(y, x); }
};

// Builds both channels in one pass, O(width*height) additions.
IntegralImage integral(const GrayImage& img);

// Anything that looks like a summed-area table. Tests substitute an
// instrumented wrapper here to count cell reads.
template <class Table>
concept IntegralTable = requires(const Table& t, int x, int y) {
    { t.cell(x, y) } -> std::convertible_to<std::uint64_t>;
    { t.width() } -> std::convertible_to<int>;
    { t.height() } -> std::convertible_to<int>;
};

inline void require_rect_in(const Rect& r, int width, int height, const char* what) {
    if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height) {
        throw DataError(std::string(what) + ": rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                        std::to_string(r.w) + "," + std::to_string(r.h) + ") outside " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
}

// Sum of intensities over r using exactly four cell reads (the two reads that
// can fall at coordinate -1 hit the virtual zero border).
template <IntegralTable Table>
std::uint64_t rect_sum(const Table& ii, const Rect& r) {
    require_rect_in(r, ii.width(), ii.height(), "rect_sum");
    const std::uint64_t d = ii.cell(r.x + r.w - 1, r.y + r.h - 1);
    const std::uint64_t a = ii.cell(r.x - 1, r.y - 1);
    const std::uint64_t b = ii.cell(r.x + r.w - 1, r.y - 1);
    const std::uint64_t c = ii.cell(r.x - 1, r.y + r.h - 1);
    return (d + a) - (b + c);
}

template <IntegralTable Table>
double rect_mean(const Table& ii, const Rect& r) {
    return static_cast<double>(rect_sum(ii, r)) / static_cast<double>(r.area());
}

// Same four-corner read on the squared channel.
std::uint64_t rect_sum_sq(const IntegralImage& ii, const Rect& r);

// Intensity standard deviation over a window, clamped from below. Uses both
// integral channels, so it costs eight cell reads regardless of window size.
double window_sigma(const IntegralImage& ii, const Rect& r, double sigma_floor);

// Area-average downscale of the source rectangle to out_side x out_side,
// computed from the integral image. Requires r.w >= out_side and
// r.h >= out_side.
GrayImage resample_box(const IntegralImage& ii, const Rect& r, int out_side);

}  // namespace haarkit
