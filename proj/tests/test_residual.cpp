#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fsw/errors.hpp"
#include "fsw/residual.hpp"
#include "fsw/prng.hpp"
#include "test_util.hpp"

using namespace fsw;

TEST_CASE("identical images give an all-zero residual") {
    DetRng rng(1);
    const RasterImage a = fswtest::random_rgb(rng, 16, 16);
    const ResidualMap r = absolute_residual(a, a);
    for (uint8_t v : r.values) CHECK(v == 0);
    const SparsityReport rep = sparsity_stats(r);
    CHECK(rep.l0 == 0);
    CHECK(rep.density == 0.0);
    CHECK(rep.max_amp == 0);
    CHECK(rep.mean_amp_nonzero == 0.0);
}

TEST_CASE("residual takes the max over channels") {
    RasterImage a = RasterImage::filled(4, 4, 10);
    RasterImage b = a;
    b.at(2, 3, 2) = 13;  // (0,0,3) delta on one pixel
    const ResidualMap r = absolute_residual(a, b);
    CHECK(r.at(2, 3) == 3);
    int64_t nonzero = 0;
    for (uint8_t v : r.values) nonzero += v > 0;
    CHECK(nonzero == 1);
}

TEST_CASE("residual is symmetric and shape-checked") {
    DetRng rng(2);
    const RasterImage a = fswtest::random_rgb(rng, 8, 8);
    const RasterImage b = fswtest::random_rgb(rng, 8, 8);
    CHECK(absolute_residual(a, b).values == absolute_residual(b, a).values);
    const RasterImage c = fswtest::random_rgb(rng, 8, 9);
    CHECK_THROWS_AS(absolute_residual(a, c), ShapeError);
}

TEST_CASE("binarize popcount equals sparsity l0") {
    DetRng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const RasterImage a = fswtest::random_rgb(rng, 32, 32);
        RasterImage b = a;
        for (int k = 0; k < 100; ++k) {
            const size_t i = rng.next_below(b.samples.size());
            b.samples[i] = static_cast<uint8_t>(rng.next_u64() & 0xFF);
        }
        const ResidualMap r = absolute_residual(a, b);
        CHECK(binarize_extremum(r).popcount() == sparsity_stats(r).l0);
    }
}

TEST_CASE("binarize of the zero map is zero") {
    ResidualMap r;
    r.height = 3;
    r.width = 3;
    r.values.assign(9, 0);
    const BitPlane p = binarize_extremum(r);
    CHECK(p.popcount() == 0);
}

TEST_CASE("pgm heatmap export") {
    fswtest::TempDir tmp;
    SUBCASE("zero map stays zero") {
        ResidualMap r;
        r.height = 4;
        r.width = 5;
        r.values.assign(20, 0);
        save_heatmap_pgm(r, tmp.file("z.pgm"));
        const Plane p = load_pgm(tmp.file("z.pgm"));
        CHECK(p.height == 4);
        CHECK(p.width == 5);
        for (float v : p.values) CHECK(v == 0.0f);
    }
    SUBCASE("binary values normalize to 0/255") {
        BitPlane b;
        b.height = 1;
        b.width = 4;
        b.bits = {0, 1, 1, 0};
        save_heatmap_pgm(b, tmp.file("b.pgm"));
        const Plane p = load_pgm(tmp.file("b.pgm"));
        CHECK(p.values[0] == 0.0f);
        CHECK(p.values[1] == 255.0f);
    }
    SUBCASE("plane export round-trips dimensions") {
        Plane m(32, 32);
        for (size_t i = 0; i < m.values.size(); ++i) m.values[i] = float(i % 7);
        save_heatmap_pgm(m, tmp.file("m.pgm"));
        const Plane p = load_pgm(tmp.file("m.pgm"));
        CHECK(p.height == 32);
        CHECK(p.width == 32);
    }
}

TEST_CASE("sparsity csv row") {
    SparsityReport rep;
    rep.l0 = 5;
    rep.density = 0.25;
    rep.max_amp = 7;
    rep.mean_amp_nonzero = 3.5;
    CHECK(sparsity_csv_row(rep) == "5,0.25,7,3.5");
}

TEST_CASE("psnr") {
    RasterImage a = RasterImage::filled(8, 8, 100);
    CHECK(std::isinf(psnr(a, a)));
    RasterImage b = a;
    for (auto& s : b.samples) s += 5;  // MSE = 25
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 25.0)).epsilon(1e-9));
}
