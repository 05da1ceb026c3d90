#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "haarkit/cascade.hpp"
#include "haarkit/dataset.hpp"
#include "haarkit/detector.hpp"
#include "haarkit/errors.hpp"
#include "haarkit/rng.hpp"
#include "test_util.hpp"

using namespace haarkit;
using testutil::random_image;

namespace {

struct Fixture {
    SynthDataset data;
    Cascade cascade;
};

const Fixture& fixture() {
    static const Fixture fx = [] {
        Fixture f;
        SynthConfig sc;
        sc.num_positives = 150;
        sc.num_negatives = 100;
        sc.num_scenes = 0;
        f.data = synth_dataset(sc, 5);
        const auto features = enumerate_features(BaseWindow{24}, 2, 2);
        CascadeTrainConfig tc;
        tc.seed = 5;
        tc.max_stages = 14;
        f.cascade = train_cascade(f.data.positives, f.data.negatives, features, tc, 2);
        return f;
    }();
    return fx;
}

Cascade always_reject_cascade() {
    Cascade c;
    c.base_window.side = 24;
    StrongClassifier sc;
    WeakClassifier stump;
    stump.feature.kind = FeatureKind::EdgeVertical;
    stump.feature.rect_count = 2;
    stump.feature.rects[0] = WeightedRect{Rect{0, 0, 12, 24}, +1.0};
    stump.feature.rects[1] = WeightedRect{Rect{12, 0, 12, 24}, -1.0};
    stump.polarity = +1;
    stump.threshold = -kThresholdSentinel;  // h is 0 everywhere
    stump.alpha = 1.0;
    sc.stumps.push_back(stump);
    sc.stage_threshold = 0.5;
    c.stages.push_back(sc);
    return c;
}

void paint_square(GrayImage& img, int cx, int cy, int side, int delta) {
    for (int y = cy - side / 2; y < cy - side / 2 + side; ++y) {
        for (int x = cx - side / 2; x < cx - side / 2 + side; ++x) {
            const int v = static_cast<int>(img(y, x)) + delta;
            img(y, x) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    }
}

// Brute-force transitive closure over the IoU relation.
std::vector<int> closure_labels(const std::vector<Detection>& dets, double overlap) {
    const int n = static_cast<int>(dets.size());
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (int i = 0; i < n; ++i) {
        adj[i][i] = true;
        for (int j = 0; j < n; ++j) {
            if (i != j && iou(dets[i].rect, dets[j].rect) >= overlap) adj[i][j] = true;
        }
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            if (!adj[i][k]) continue;
            for (int j = 0; j < n; ++j) {
                if (adj[k][j]) adj[i][j] = true;
            }
        }
    }
    std::vector<int> label(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        if (label[i] >= 0) continue;
        for (int j = 0; j < n; ++j) {
            if (adj[i][j]) label[j] = next;
        }
        ++next;
    }
    return label;
}

}  // namespace

TEST_CASE("scan validates its config and inputs") {
    ScanConfig bad;
    bad.scale_step = 1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);

    const Cascade c = always_reject_cascade();
    CHECK_THROWS_AS(scan(c, make_gray(10, 10, 0), ScanConfig{}), DataError);
}

TEST_CASE("scan finds a known-accepted training positive at the origin") {
    const Fixture& fx = fixture();
    // Pick the first training positive the cascade accepts as a window.
    const GrayImage* accepted = nullptr;
    for (const GrayImage& p : fx.data.positives) {
        if (eval_cascade(fx.cascade, integral(p), 0, 0, 1.0).accept) {
            accepted = &p;
            break;
        }
    }
    REQUIRE(accepted != nullptr);

    ScanConfig cfg;
    cfg.min_scale = 1.0;
    cfg.max_scale = 1.0;
    const auto raw = scan(fx.cascade, *accepted, cfg);
    REQUIRE(raw.size() == 1);
    CHECK(raw[0].rect == Rect{0, 0, 24, 24});
    CHECK(raw[0].scale == 1.0);
}

TEST_CASE("blank image with an always-reject cascade yields nothing") {
    const auto raw = scan(always_reject_cascade(), make_gray(64, 64, 0), ScanConfig{});
    CHECK(raw.empty());
}

TEST_CASE("scan agrees with a crop-and-rescale scanner on nearly every window") {
    const Fixture& fx = fixture();
    ScanConfig cfg;
    Rng rng(157);

    std::int64_t windows = 0;
    std::int64_t agree = 0;
    for (int trial = 0; trial < 3; ++trial) {
        GrayImage img = fx.data.negatives[static_cast<std::size_t>(rng.bounded(fx.data.negatives.size()))];
        paint_square(img, 30 + trial * 10, 40, 13, 100);
        const IntegralImage ii = integral(img);
        const int w = static_cast<int>(img.cols());
        const int h = static_cast<int>(img.rows());

        // Index raw scan accepts by (x, y, side).
        const auto raw = scan(fx.cascade, img, cfg);
        std::set<std::tuple<int, int, int>> accepted;
        for (const Detection& d : raw) accepted.insert({d.rect.x, d.rect.y, d.rect.w});

        for (double s = 1.0;; s *= cfg.scale_step) {
            const int side = static_cast<int>(std::llround(24 * s));
            if (side > w || side > h) break;
            const int stride = std::max(1, static_cast<int>(std::llround(cfg.stride * s)));
            for (int y = 0; y + side <= h; y += stride) {
                for (int x = 0; x + side <= w; x += stride) {
                    const GrayImage crop = resample_box(ii, Rect{x, y, side, side}, 24);
                    const bool naive = eval_cascade(fx.cascade, integral(crop), 0, 0, 1.0).accept;
                    const bool fast = accepted.count({x, y, side}) > 0;
                    ++windows;
                    agree += naive == fast ? 1 : 0;
                }
            }
        }
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(windows) >= 0.99);
}

TEST_CASE("group_detections basics") {
    ScanConfig cfg;
    CHECK(group_detections({}, cfg, 100, 100).empty());

    std::vector<Detection> three(3, Detection{Rect{10, 10, 24, 24}, 1.0, 1.0});
    three[1].score = 2.0;
    const auto grouped = group_detections(three, cfg, 100, 100);
    REQUIRE(grouped.size() == 1);
    CHECK(grouped[0].rect == Rect{10, 10, 24, 24});
    CHECK(grouped[0].score == 2.0);

    // Two members only: dropped at the default min_neighbors of 3.
    std::vector<Detection> two(2, Detection{Rect{10, 10, 24, 24}, 1.0, 1.0});
    CHECK(group_detections(two, cfg, 100, 100).empty());
}

TEST_CASE("grouping clusters match the brute-force transitive closure") {
    Rng rng(163);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Detection> dets;
        const int n = static_cast<int>(rng.uniform_int(0, 40));
        for (int i = 0; i < n; ++i) {
            const int x = static_cast<int>(rng.uniform_int(0, 60));
            const int y = static_cast<int>(rng.uniform_int(0, 60));
            const int w = static_cast<int>(rng.uniform_int(8, 30));
            dets.push_back(Detection{Rect{x, y, w, w}, rng.uniform(), 1.0});
        }
        ScanConfig cfg;
        const std::vector<int> labels = closure_labels(dets, cfg.group_overlap);
        std::map<int, int> closure_sizes;
        for (int l : labels) closure_sizes[l]++;

        // The survivor count at every min_neighbors cutoff pins the cluster
        // size multiset against the oracle.
        for (int min_members = 1; min_members <= 5; ++min_members) {
            int expected = 0;
            for (const auto& [l, c] : closure_sizes) expected += c >= min_members ? 1 : 0;
            cfg.group_min_neighbors = min_members;
            CHECK(static_cast<int>(group_detections(dets, cfg, 100, 100).size()) == expected);
        }
    }
}

TEST_CASE("detect composes scan and group exactly") {
    const Fixture& fx = fixture();
    ScanConfig cfg;
    GrayImage img = fx.data.negatives[3];
    paint_square(img, 30, 30, 13, 100);

    const auto composed = detect(fx.cascade, img, cfg);
    auto manual = group_detections(scan(fx.cascade, img, cfg), cfg, static_cast<int>(img.cols()),
                                   static_cast<int>(img.rows()));
    std::sort(manual.begin(), manual.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.rect.y != b.rect.y) return a.rect.y < b.rect.y;
        return a.rect.x < b.rect.x;
    });
    REQUIRE(composed.size() == manual.size());
    for (std::size_t i = 0; i < composed.size(); ++i) {
        CHECK(composed[i].rect == manual[i].rect);
        CHECK(composed[i].score == manual[i].score);
    }
}

TEST_CASE("two well-separated squares give exactly two detections") {
    const Fixture& fx = fixture();
    GrayImage img = fx.data.negatives[7];  // 96x96 textured background
    paint_square(img, 20, 20, 13, 110);
    paint_square(img, 70, 70, 13, 110);

    const auto dets = detect(fx.cascade, img, ScanConfig{});
    REQUIRE(dets.size() == 2);
    // Sorted by score; identify by location.
    const bool first_is_tl = dets[0].rect.x < 48;
    const Detection& tl = first_is_tl ? dets[0] : dets[1];
    const Detection& br = first_is_tl ? dets[1] : dets[0];
    CHECK(iou(tl.rect, Rect{8, 8, 24, 24}) >= 0.5);
    CHECK(iou(br.rect, Rect{58, 58, 24, 24}) >= 0.5);
}

TEST_CASE("contrast-negated objects are not detected") {
    // Bright-over-ground crops detect; the same crops negated (p -> 255 - p)
    // never do. Single-window images isolate the polarity claim from the
    // bright-flank structures negation creates around an object in a larger
    // scene.
    const Fixture& fx = fixture();
    ScanConfig cfg;
    cfg.min_scale = 1.0;
    cfg.max_scale = 1.0;
    cfg.group_min_neighbors = 1;

    int detected = 0;
    int negated_hits = 0;
    int used = 0;
    for (std::size_t i = 0; i < 30; ++i) {
        const GrayImage& crop = fx.data.positives[i];
        if (!eval_cascade(fx.cascade, integral(crop), 0, 0, 1.0).accept) continue;
        ++used;
        detected += static_cast<int>(detect(fx.cascade, crop, cfg).size());
        GrayImage neg = crop;
        for (int y = 0; y < 24; ++y) {
            for (int x = 0; x < 24; ++x) neg(y, x) = static_cast<std::uint8_t>(255 - crop(y, x));
        }
        negated_hits += static_cast<int>(detect(fx.cascade, neg, cfg).size());
    }
    REQUIRE(used > 20);
    CHECK(detected == used);
    CHECK(negated_hits == 0);
}

TEST_CASE("detection lists are identical for any worker count") {
    const Fixture& fx = fixture();
    GrayImage img = fx.data.negatives[11];
    paint_square(img, 40, 50, 14, 100);

    const auto d1 = detect(fx.cascade, img, ScanConfig{}, 1);
    const auto d4 = detect(fx.cascade, img, ScanConfig{}, 4);
    const auto d0 = detect(fx.cascade, img, ScanConfig{}, 0);
    REQUIRE(d1.size() == d4.size());
    REQUIRE(d1.size() == d0.size());
    for (std::size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1[i].rect == d4[i].rect);
        CHECK(d1[i].score == d4[i].score);
        CHECK(d1[i].rect == d0[i].rect);
        CHECK(d1[i].score == d0[i].score);
    }
}

TEST_CASE("raw detections shift with the image at stride granularity") {
    const Fixture& fx = fixture();
    ScanConfig cfg;
    cfg.min_scale = 1.0;
    cfg.max_scale = 1.0;

    GrayImage base = fx.data.negatives[13];
    paint_square(base, 40, 40, 13, 105);
    const int w = static_cast<int>(base.cols());
    const int h = static_cast<int>(base.rows());

    // Shift content left by one stride, padding the right edge with a copy of
    // the last column.
    GrayImage shifted = base;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w - cfg.stride; ++x) shifted(y, x) = base(y, x + cfg.stride);
        for (int x = w - cfg.stride; x < w; ++x) shifted(y, x) = base(y, w - 1);
    }

    std::set<std::pair<int, int>> got_a;
    for (const Detection& d : scan(fx.cascade, base, cfg)) got_a.insert({d.rect.x, d.rect.y});
    std::set<std::pair<int, int>> got_b;
    for (const Detection& d : scan(fx.cascade, shifted, cfg)) got_b.insert({d.rect.x, d.rect.y});

    // Interior windows only: both the original and shifted window must avoid
    // the right border the padding disturbed.
    for (const auto& [x, y] : got_a) {
        if (x < cfg.stride || x + 24 + cfg.stride > w - cfg.stride) continue;
        CHECK(got_b.count({x - cfg.stride, y}) == 1);
    }
}

TEST_CASE("every emitted rect lies inside the image") {
    const Fixture& fx = fixture();
    GrayImage img = fx.data.negatives[17];
    paint_square(img, 25, 70, 13, 100);
    for (const Detection& d : detect(fx.cascade, img, ScanConfig{})) {
        CHECK(d.rect.x >= 0);
        CHECK(d.rect.y >= 0);
        CHECK(d.rect.x + d.rect.w <= img.cols());
        CHECK(d.rect.y + d.rect.h <= img.rows());
    }
}

TEST_CASE("detection_record uses fixed decimal formatting") {
    const Detection d{Rect{3, 4, 24, 24}, 1.75, 1.25};
    CHECK(detection_record(d) == "3 4 24 24 1.750000 1.250000");
}
