#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "haarkit/image.hpp"
#include "haarkit/pgm.hpp"
#include "haarkit/rng.hpp"
#include "test_util.hpp"

using namespace haarkit;
using testutil::naive_rect_sum;
using testutil::random_image;
using testutil::random_rect;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_pgm maps payload bytes directly") {
    testutil::TempDir tmp("pgm_load");
    const auto p = tmp.path() / "a.pgm";
    write_file(p, std::string("P5\n2 2\n255\n") + '\0' + '\xff' + '\x80' + '\x07');
    const GrayImage img = load_pgm(p);
    CHECK(img.cols() == 2);
    CHECK(img.rows() == 2);
    CHECK(img(0, 0) == 0);
    CHECK(img(0, 1) == 255);
    CHECK(img(1, 0) == 128);
    CHECK(img(1, 1) == 7);
}

TEST_CASE("load_pgm rejects plain-text P2") {
    testutil::TempDir tmp("pgm_p2");
    const auto p = tmp.path() / "a.pgm";
    write_file(p, "P2\n1 1\n255\n42\n");
    CHECK_THROWS_AS(load_pgm(p), PgmError);
    try {
        load_pgm(p);
    } catch (const PgmError& e) {
        CHECK(e.kind() == PgmErrorKind::BadMagic);
    }
}

TEST_CASE("load_pgm error kinds name the offending field") {
    testutil::TempDir tmp("pgm_err");
    const auto bad_maxval = tmp.path() / "maxval.pgm";
    write_file(bad_maxval, "P5\n1 1\n65535\n\0\0");
    CHECK_THROWS_AS(load_pgm(bad_maxval), PgmError);
    try {
        load_pgm(bad_maxval);
    } catch (const PgmError& e) {
        CHECK(e.kind() == PgmErrorKind::BadMaxval);
        CHECK(std::string(e.what()).find("maxval") != std::string::npos);
    }

    const auto bad_width = tmp.path() / "width.pgm";
    write_file(bad_width, "P5\nx 1\n255\n\0");
    try {
        load_pgm(bad_width);
        CHECK(false);
    } catch (const PgmError& e) {
        CHECK(e.kind() == PgmErrorKind::BadHeader);
        CHECK(std::string(e.what()).find("width") != std::string::npos);
    }

    const auto truncated = tmp.path() / "short.pgm";
    write_file(truncated, "P5\n4 4\n255\nabc");
    try {
        load_pgm(truncated);
        CHECK(false);
    } catch (const PgmError& e) {
        CHECK(e.kind() == PgmErrorKind::Truncated);
    }
}

TEST_CASE("load_pgm accepts header comments") {
    testutil::TempDir tmp("pgm_comment");
    const auto p = tmp.path() / "a.pgm";
    write_file(p, "P5\n# a comment\n1 # inline\n1\n255\nZ");
    const GrayImage img = load_pgm(p);
    CHECK(img(0, 0) == 'Z');
}

TEST_CASE("save_pgm emits the exact pinned header") {
    testutil::TempDir tmp("pgm_save");
    const auto p = tmp.path() / "a.pgm";
    GrayImage one = make_gray(1, 1);
    one(0, 0) = 42;
    save_pgm(one, p);
    const std::string bytes = read_file(p);
    CHECK(bytes == std::string("P5\n1 1\n255\n") + '\x2a');
    CHECK(bytes.size() == 12);

    GrayImage two = make_gray(2, 1);
    two(0, 0) = 0;
    two(0, 1) = 255;
    save_pgm(two, p);
    const std::string b2 = read_file(p);
    CHECK(b2.substr(b2.size() - 2) == std::string("\x00\xff", 2));
}

TEST_CASE("pgm round-trip is byte-identical") {
    testutil::TempDir tmp("pgm_rt");
    Rng rng(7);
    for (int i = 0; i < 5; ++i) {
        const GrayImage img = random_image(64, 64, rng);
        const auto p1 = tmp.path() / "a.pgm";
        const auto p2 = tmp.path() / "b.pgm";
        save_pgm(img, p1);
        const GrayImage back = load_pgm(p1);
        CHECK((back == img).all());
        save_pgm(back, p2);
        CHECK(read_file(p1) == read_file(p2));
    }
}

TEST_CASE("integral of an all-zero image is zero in both channels") {
    const GrayImage img = make_gray(4, 4, 0);
    const IntegralImage ii = integral(img);
    CHECK((ii.sum == 0).all());
    CHECK((ii.sq == 0).all());
}

TEST_CASE("integral of an all-one image has the closed form (x+1)(y+1)") {
    const GrayImage img = make_gray(3, 3, 1);
    const IntegralImage ii = integral(img);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            CHECK(ii.cell(x, y) == static_cast<std::uint64_t>((x + 1) * (y + 1)));
            CHECK(ii.sq_cell(x, y) == static_cast<std::uint64_t>((x + 1) * (y + 1)));
        }
    }
}

TEST_CASE("integral matches brute-force cumulative sums everywhere") {
    Rng rng(11);
    const GrayImage img = random_image(5, 7, rng);
    const IntegralImage ii = integral(img);
    for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 5; ++x) {
            std::uint64_t s = 0;
            std::uint64_t q = 0;
            for (int yy = 0; yy <= y; ++yy) {
                for (int xx = 0; xx <= x; ++xx) {
                    s += img(yy, xx);
                    q += static_cast<std::uint64_t>(img(yy, xx)) * img(yy, xx);
                }
            }
            CHECK(ii.cell(x, y) == s);
            CHECK(ii.sq_cell(x, y) == q);
        }
    }
}

TEST_CASE("integral cells are monotone along rows and columns") {
    Rng rng(13);
    const GrayImage img = random_image(16, 9, rng);
    const IntegralImage ii = integral(img);
    for (int y = 0; y < 9; ++y) {
        for (int x = 1; x < 16; ++x) CHECK(ii.cell(x, y) >= ii.cell(x - 1, y));
    }
    for (int x = 0; x < 16; ++x) {
        for (int y = 1; y < 9; ++y) CHECK(ii.cell(x, y) >= ii.cell(x, y - 1));
    }
}

TEST_CASE("rect_sum degenerate cases") {
    Rng rng(17);
    const GrayImage img = random_image(8, 8, rng);
    const IntegralImage ii = integral(img);
    CHECK(rect_sum(ii, Rect{0, 0, 8, 8}) == ii.cell(7, 7));

    const GrayImage constant = make_gray(10, 6, 9);
    const IntegralImage cii = integral(constant);
    CHECK(rect_sum(cii, Rect{2, 1, 5, 3}) == 9ull * 5 * 3);
}

TEST_CASE("rect_sum equals the naive double loop on 1000 random rects") {
    Rng rng(19);
    const GrayImage img = random_image(32, 32, rng);
    const IntegralImage ii = integral(img);
    for (int i = 0; i < 1000; ++i) {
        const Rect r = random_rect(32, 32, rng);
        CHECK(rect_sum(ii, r) == naive_rect_sum(img, r));
    }
}

TEST_CASE("rect_sum rejects out-of-bounds rects") {
    const IntegralImage ii = integral(make_gray(4, 4, 1));
    CHECK_THROWS_AS(rect_sum(ii, Rect{2, 2, 3, 1}), DataError);
    CHECK_THROWS_AS(rect_sum(ii, Rect{-1, 0, 2, 2}), DataError);
    CHECK_THROWS_AS(rect_sum(ii, Rect{0, 0, 0, 1}), DataError);
}

TEST_CASE("rect_sum reads exactly four cells") {
    const IntegralImage ii = integral(make_gray(6, 6, 3));
    testutil::CountingTable counting{&ii};
    (void)rect_sum(counting, Rect{1, 2, 3, 2});
    CHECK(counting.reads == 4);
    (void)rect_sum(counting, Rect{0, 0, 6, 6});  // corner reads at -1 count too
    CHECK(counting.reads == 8);
}

TEST_CASE("rect_mean basics and oracle") {
    const IntegralImage cii = integral(make_gray(5, 5, 77));
    CHECK(rect_mean(cii, Rect{1, 1, 3, 2}) == 77.0);

    GrayImage pair = make_gray(2, 1);
    pair(0, 0) = 0;
    pair(0, 1) = 255;
    CHECK(rect_mean(integral(pair), Rect{0, 0, 2, 1}) == 127.5);

    Rng rng(23);
    const GrayImage img = random_image(20, 15, rng);
    const IntegralImage ii = integral(img);
    for (int i = 0; i < 300; ++i) {
        const Rect r = random_rect(20, 15, rng);
        const double naive = static_cast<double>(naive_rect_sum(img, r)) / static_cast<double>(r.area());
        CHECK(rect_mean(ii, r) == doctest::Approx(naive).epsilon(1e-9));
    }
}

TEST_CASE("rect sums are additive over disjoint splits") {
    Rng rng(29);
    const GrayImage img = random_image(24, 24, rng);
    const IntegralImage ii = integral(img);
    for (int i = 0; i < 200; ++i) {
        Rect r = random_rect(24, 24, rng);
        if (r.w < 2) r.w = 2;
        if (r.x + r.w > 24) r.x = 24 - r.w;
        const int split = static_cast<int>(rng.uniform_int(1, r.w - 1));
        const Rect left{r.x, r.y, split, r.h};
        const Rect right{r.x + split, r.y, r.w - split, r.h};
        CHECK(rect_sum(ii, left) + rect_sum(ii, right) == rect_sum(ii, r));
    }
}

TEST_CASE("window_sigma is zero-clamped on constant windows") {
    const IntegralImage ii = integral(make_gray(10, 10, 50));
    CHECK(window_sigma(ii, Rect{0, 0, 10, 10}, 1.0) == 1.0);
}

TEST_CASE("resample_box at identical size copies pixels") {
    Rng rng(31);
    const GrayImage img = random_image(24, 24, rng);
    const GrayImage out = resample_box(integral(img), Rect{0, 0, 24, 24}, 24);
    CHECK((out == img).all());
}

TEST_CASE("resample_box halves a doubled image back") {
    Rng rng(37);
    const GrayImage small = random_image(12, 12, rng);
    GrayImage big = make_gray(24, 24);
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) big(y, x) = small(y / 2, x / 2);
    }
    const GrayImage out = resample_box(integral(big), Rect{0, 0, 24, 24}, 12);
    CHECK((out == small).all());
}
