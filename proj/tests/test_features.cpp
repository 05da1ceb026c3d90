#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "haarkit/haar.hpp"
#include "haarkit/rng.hpp"
#include "test_util.hpp"

using namespace haarkit;
using testutil::random_image;

namespace {

// Independent pixel-loop evaluation of a (possibly pre-scaled) feature.
double naive_eval(const HaarFeature& feat, const GrayImage& img, int ox, int oy) {
    double f = 0.0;
    for (const WeightedRect& wr : feat.rect_span()) {
        double s = 0.0;
        for (int y = wr.rect.y + oy; y < wr.rect.y + wr.rect.h + oy; ++y) {
            for (int x = wr.rect.x + ox; x < wr.rect.x + wr.rect.w + ox; ++x) s += img(y, x);
        }
        f += wr.weight * (s / static_cast<double>(wr.rect.area()));
    }
    return f;
}

// Exhaustive placement count of an a x b cell template inside `side`,
// independent of the enumeration loops.
long exhaustive_count(int side, int cells_x, int cells_y) {
    long n = 0;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            for (int uh = 1; uh <= side; ++uh) {
                for (int uw = 1; uw <= side; ++uw) {
                    if (x + cells_x * uw <= side && y + cells_y * uh <= side) ++n;
                }
            }
        }
    }
    return n;
}

double weight_sum(const HaarFeature& f) {
    double s = 0.0;
    for (const WeightedRect& wr : f.rect_span()) s += wr.weight;
    return s;
}

bool fits_window(const HaarFeature& f, int side) {
    for (const WeightedRect& wr : f.rect_span()) {
        const Rect& r = wr.rect;
        if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > side || r.y + r.h > side) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("two-rect horizontal placements on a 4-window match the exhaustive count") {
    const auto feats = enumerate_features(BaseWindow{4}, 1, 1);
    long measured = 0;
    for (const HaarFeature& f : feats) {
        if (f.kind == FeatureKind::EdgeVertical) ++measured;  // 2 cells wide, 1 tall
    }
    CHECK(measured == exhaustive_count(4, 2, 1));
    CHECK(measured == 40);
}

TEST_CASE("full 24-window enumeration: count regression and invariants") {
    const auto feats = enumerate_features(BaseWindow{24}, 1, 1);
    CHECK(feats.size() > 100000);
    // Regression constant recorded at first build.
    CHECK(feats.size() == 162336);

    for (std::size_t i = 0; i < feats.size(); i += 997) {
        const HaarFeature& f = feats[i];
        CHECK(f.rect_count >= 2);
        CHECK(fits_window(f, 24));
        CHECK(weight_sum(f) == 0.0);
    }
}

TEST_CASE("per-template counts match the exhaustive placement oracle") {
    const auto feats = enumerate_features(BaseWindow{24}, 1, 1);
    long counts[5] = {0, 0, 0, 0, 0};
    for (const HaarFeature& f : feats) counts[static_cast<int>(f.kind)]++;
    CHECK(counts[static_cast<int>(FeatureKind::EdgeHorizontal)] == exhaustive_count(24, 1, 2));
    CHECK(counts[static_cast<int>(FeatureKind::EdgeVertical)] == exhaustive_count(24, 2, 1));
    CHECK(counts[static_cast<int>(FeatureKind::LineHorizontal)] == exhaustive_count(24, 1, 3));
    CHECK(counts[static_cast<int>(FeatureKind::LineVertical)] == exhaustive_count(24, 3, 1));
    CHECK(counts[static_cast<int>(FeatureKind::FourSquareDiagonal)] == exhaustive_count(24, 2, 2));
}

TEST_CASE("stride larger than the window yields nothing") {
    CHECK(enumerate_features(BaseWindow{4}, 5, 1).empty());
}

TEST_CASE("enumeration order is deterministic") {
    const auto a = enumerate_features(BaseWindow{12}, 2, 2);
    const auto b = enumerate_features(BaseWindow{12}, 2, 2);
    REQUIRE(a.size() == b.size());
    CHECK(a == b);
}

TEST_CASE("every feature evaluates to exactly zero on constant images") {
    const auto feats = enumerate_features(BaseWindow{8}, 1, 1);
    for (std::uint8_t c : {0, 1, 77, 255}) {
        const IntegralImage ii = integral(make_gray(8, 8, c));
        for (const HaarFeature& f : feats) {
            CHECK(eval_feature(f, ii, 0, 0, 1.0, 8) == 0.0);
        }
    }
}

TEST_CASE("vertical edge over a 255|0 split scores 255") {
    GrayImage img = make_gray(8, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 4; ++x) img(y, x) = 255;
    }
    HaarFeature f;
    f.kind = FeatureKind::EdgeVertical;
    f.rect_count = 2;
    f.rects[0] = WeightedRect{Rect{0, 0, 4, 8}, +1.0};
    f.rects[1] = WeightedRect{Rect{4, 0, 4, 8}, -1.0};
    CHECK(eval_feature(f, integral(img), 0, 0, 1.0, 8) == 255.0);
}

TEST_CASE("eval_feature matches the naive pixel loop over random placements and scales") {
    Rng rng(41);
    const auto feats = enumerate_features(BaseWindow{24}, 1, 1);
    const GrayImage img = random_image(96, 96, rng);
    const IntegralImage ii = integral(img);

    for (int i = 0; i < 500; ++i) {
        const HaarFeature& f = feats[static_cast<std::size_t>(rng.bounded(feats.size()))];
        const double scale = 1.0 + rng.uniform() * 2.0;
        const HaarFeature scaled = scale_feature(f, scale, 24);
        const int side = static_cast<int>(std::llround(24 * scale));
        const int ox = static_cast<int>(rng.uniform_int(0, 96 - side));
        const int oy = static_cast<int>(rng.uniform_int(0, 96 - side));
        const double got = eval_feature(f, ii, ox, oy, scale, 24);
        const double want = naive_eval(scaled, img, ox, oy);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("eval_feature costs exactly 4k table reads") {
    Rng rng(43);
    const auto feats = enumerate_features(BaseWindow{24}, 3, 2);
    const IntegralImage ii = integral(random_image(24, 24, rng));
    testutil::CountingTable counting{&ii};
    long expected = 0;
    for (std::size_t i = 0; i < feats.size(); i += 17) {
        (void)eval_feature_scaled(feats[i], counting, 0, 0);
        expected += 4L * feats[i].rect_count;
        CHECK(counting.reads == expected);
    }
}

TEST_CASE("scale_feature identity and exact doubling") {
    const auto feats = enumerate_features(BaseWindow{24}, 4, 2);
    for (std::size_t i = 0; i < feats.size(); i += 11) {
        CHECK(scale_feature(feats[i], 1.0, 24) == feats[i]);
    }

    HaarFeature f;
    f.kind = FeatureKind::EdgeHorizontal;
    f.rect_count = 2;
    f.rects[0] = WeightedRect{Rect{1, 1, 2, 2}, +1.0};
    f.rects[1] = WeightedRect{Rect{1, 3, 2, 2}, -1.0};
    const HaarFeature doubled = scale_feature(f, 2.0, 24);
    CHECK(doubled.rects[0].rect == Rect{2, 2, 4, 4});
    CHECK(doubled.rects[1].rect == Rect{2, 6, 4, 4});
}

TEST_CASE("scaled features stay inside the scaled window with zero-sum weights") {
    Rng rng(47);
    const auto feats = enumerate_features(BaseWindow{24}, 1, 1);
    for (int i = 0; i < 1000; ++i) {
        const HaarFeature& f = feats[static_cast<std::size_t>(rng.bounded(feats.size()))];
        const double scale = 1.0 + rng.uniform() * 3.0;
        const int scaled_side = static_cast<int>(std::llround(24 * scale));
        const HaarFeature scaled = scale_feature(f, scale, 24);
        CHECK(fits_window(scaled, scaled_side));
        CHECK(weight_sum(scaled) == 0.0);
    }
    // Constant-image zero survives scaling.
    const IntegralImage ii = integral(make_gray(100, 100, 100));
    for (int i = 0; i < 50; ++i) {
        const HaarFeature& f = feats[static_cast<std::size_t>(rng.bounded(feats.size()))];
        const HaarFeature scaled = scale_feature(f, 1.0 + rng.uniform() * 3.0, 24);
        CHECK(eval_feature_scaled(scaled, ii, 0, 0) == 0.0);
    }
}

TEST_CASE("negating the image negates every feature value") {
    Rng rng(53);
    const auto feats = enumerate_features(BaseWindow{16}, 2, 1);
    const GrayImage img = random_image(16, 16, rng);
    GrayImage neg = img;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) neg(y, x) = static_cast<std::uint8_t>(255 - img(y, x));
    }
    const IntegralImage ii = integral(img);
    const IntegralImage nii = integral(neg);
    for (std::size_t i = 0; i < feats.size(); i += 7) {
        const double f = eval_feature_scaled(feats[i], ii, 0, 0);
        const double fn = eval_feature_scaled(feats[i], nii, 0, 0);
        CHECK(fn == doctest::Approx(-f).epsilon(1e-9).scale(1.0));
    }
}
