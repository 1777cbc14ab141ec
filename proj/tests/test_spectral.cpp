#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "fsw/prng.hpp"
#include "fsw/spectral.hpp"

using namespace fsw;

namespace {

Plane random_plane(DetRng& rng, int h, int w, float scale = 255.0f) {
    Plane p(h, w);
    for (auto& v : p.values) v = static_cast<float>(rng.uniform_f64()) * scale;
    return p;
}

double max_abs_diff(const Plane& a, const Plane& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        m = std::max(m, std::abs(double(a.values[i]) - double(b.values[i])));
    }
    return m;
}

double energy(const std::vector<float>& v) {
    double e = 0.0;
    for (float x : v) e += double(x) * double(x);
    return e;
}

}  // namespace

TEST_CASE("dct2 of a constant plane is DC-only") {
    const float c = 3.25f;
    Plane p(6, 10, c);
    const Spectrum2D s = dct2(p);
    CHECK(s.at(0, 0) == doctest::Approx(c * std::sqrt(60.0)).epsilon(1e-6));
    for (int u = 0; u < 6; ++u) {
        for (int v = 0; v < 10; ++v) {
            if (u == 0 && v == 0) continue;
            CHECK(std::abs(s.at(u, v)) < 1e-4);
        }
    }
}

TEST_CASE("idct2 inverts dct2") {
    DetRng rng(11);
    const Plane p = random_plane(rng, 128, 128);
    CHECK(max_abs_diff(idct2(dct2(p)), p) < 1e-5 * 255.0);

    SUBCASE("tight bound at spec sizes") {
        for (int n : {16, 31, 64}) {
            const Plane q = random_plane(rng, n, n + 3);
            CHECK(max_abs_diff(idct2(dct2(q)), q) < 1e-4);
        }
    }
}

TEST_CASE("dct2 on 1x1 is the identity") {
    Plane p(1, 1);
    p.values[0] = 42.5f;
    const Spectrum2D s = dct2(p);
    CHECK(s.coeffs[0] == doctest::Approx(42.5f));
    CHECK(idct2(s).values[0] == doctest::Approx(42.5f));
}

TEST_CASE("idct2 basics") {
    Spectrum2D zero(8, 8);
    const Plane z = idct2(zero);
    for (float v : z.values) CHECK(v == 0.0f);

    Spectrum2D dc(4, 4);
    dc.at(0, 0) = 1.0f;
    const Plane flat = idct2(dc);
    for (float v : flat.values) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("parseval energy preservation") {
    DetRng rng(12);
    const Plane p = random_plane(rng, 96, 64);
    const Spectrum2D s = dct2(p);
    const double es = energy(s.coeffs), ep = energy(p.values);
    CHECK(std::abs(es - ep) / ep < 1e-4);
}

TEST_CASE("dct2 is linear") {
    DetRng rng(13);
    const Plane p = random_plane(rng, 20, 20, 1.0f);
    const Plane q = random_plane(rng, 20, 20, 1.0f);
    const float a = 2.75f;
    Plane combo(20, 20);
    for (size_t i = 0; i < combo.values.size(); ++i) combo.values[i] = a * p.values[i] + q.values[i];
    const Spectrum2D sc = dct2(combo), sp = dct2(p), sq = dct2(q);
    for (size_t i = 0; i < sc.coeffs.size(); ++i) {
        CHECK(sc.coeffs[i] == doctest::Approx(a * sp.coeffs[i] + sq.coeffs[i]).epsilon(1e-4));
    }
}

TEST_CASE("dct_basis matches the cosine product form") {
    const Plane b = dct_basis(0, 0, 2, 2);
    CHECK(b.at(0, 0) == doctest::Approx(1.0));
    CHECK(b.at(0, 1) == doctest::Approx(0.70710678).epsilon(1e-6));
    CHECK(b.at(1, 0) == doctest::Approx(0.70710678).epsilon(1e-6));
    CHECK(b.at(1, 1) == doctest::Approx(0.5).epsilon(1e-6));

    // B[0,0] = 1 for every frequency pair; all values within [-1, 1]
    for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
            const Plane f = dct_basis(u, v, 8, 8);
            CHECK(f.at(0, 0) == doctest::Approx(1.0));
            for (float x : f.values) {
                CHECK(x <= 1.0f);
                CHECK(x >= -1.0f);
            }
        }
    }
    CHECK_THROWS(dct_basis(8, 0, 8, 8));
}

TEST_CASE("haar level on a constant plane") {
    Plane p(4, 4, 5.0f);
    const DwtPyramid pyr = haar_dwt2(p, 1);
    REQUIRE(pyr.levels.size() == 1);
    for (float v : pyr.levels[0].ll.values) CHECK(v == doctest::Approx(10.0f));
    for (float v : pyr.levels[0].hl.values) CHECK(v == doctest::Approx(0.0f));
    for (float v : pyr.levels[0].lh.values) CHECK(v == doctest::Approx(0.0f));
    for (float v : pyr.levels[0].hh.values) CHECK(v == doctest::Approx(0.0f));
}

TEST_CASE("haar 2x2 hand-applied filters") {
    Plane p(2, 2);
    const float a = 7, b = 1, c = -3, d = 4;
    p.at(0, 0) = a;
    p.at(0, 1) = b;
    p.at(1, 0) = c;
    p.at(1, 1) = d;
    const DwtPyramid pyr = haar_dwt2(p, 1);
    CHECK(pyr.levels[0].ll.at(0, 0) == doctest::Approx((a + b + c + d) / 2));
    CHECK(pyr.levels[0].hl.at(0, 0) == doctest::Approx((a - b + c - d) / 2));
    CHECK(pyr.levels[0].lh.at(0, 0) == doctest::Approx((a + b - c - d) / 2));
    CHECK(pyr.levels[0].hh.at(0, 0) == doctest::Approx((a - b - c + d) / 2));
}

TEST_CASE("haar reconstruction on random planes") {
    DetRng rng(14);
    const Plane p = random_plane(rng, 256, 256);
    CHECK(max_abs_diff(haar_idwt2(haar_dwt2(p, 2)), p) < 1e-4);
}

TEST_CASE("haar handles odd sizes via edge padding") {
    DetRng rng(15);
    const Plane p = random_plane(rng, 5, 7);
    const DwtPyramid pyr = haar_dwt2(p, 2);
    const Plane back = haar_idwt2(pyr);
    REQUIRE(back.height == 5);
    REQUIRE(back.width == 7);
    CHECK(max_abs_diff(back, p) < 1e-4);
}

TEST_CASE("haar parseval on even sizes") {
    DetRng rng(16);
    const Plane p = random_plane(rng, 64, 64);
    const DwtPyramid pyr = haar_dwt2(p, 2);
    double e = energy(pyr.deepest_ll().values);
    for (const auto& lvl : pyr.levels) {
        e += energy(lvl.hl.values) + energy(lvl.lh.values) + energy(lvl.hh.values);
    }
    const double ep = energy(p.values);
    CHECK(std::abs(e - ep) / ep < 1e-4);
}

TEST_CASE("sub-band dimensions halve per level") {
    Plane p(64, 32);
    const DwtPyramid pyr = haar_dwt2(p, 2);
    CHECK(pyr.levels[0].hl.height == 32);
    CHECK(pyr.levels[0].hl.width == 16);
    CHECK(pyr.levels[1].hl.height == 16);
    CHECK(pyr.levels[1].hl.width == 8);
}

TEST_CASE("zigzag order") {
    const auto order = zigzag_order(8, 8);
    REQUIRE(order.size() == 64);
    CHECK(order[0] == std::pair{0, 0});
    CHECK(order[1] == std::pair{0, 1});
    CHECK(order[2] == std::pair{1, 0});
    CHECK(order[3] == std::pair{2, 0});
    CHECK(order[4] == std::pair{1, 1});

    std::set<std::pair<int, int>> seen(order.begin(), order.end());
    CHECK(seen.size() == 64);

    const auto rect = zigzag_order(3, 5);
    CHECK(rect.size() == 15);
    CHECK(rect[0] == std::pair{0, 0});
    std::set<std::pair<int, int>> rseen(rect.begin(), rect.end());
    CHECK(rseen.size() == 15);
}
