#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fsw/errors.hpp"
#include "fsw/residual.hpp"
#include "fsw/spectral.hpp"
#include "fsw/watermark.hpp"
#include "test_util.hpp"

using namespace fsw;

namespace {

EmbedConfig make_cfg(WatermarkAlgo algo, uint64_t seed = 42) {
    EmbedConfig cfg;
    cfg.algorithm = algo;
    cfg.seed = seed;
    return cfg;
}

Plane y_residual(const RasterImage& watermarked, const RasterImage& carrier) {
    const Plane yw = rgb_to_yuv_planes(watermarked).y;
    const Plane yc = rgb_to_yuv_planes(carrier).y;
    Plane r(yw.height, yw.width);
    for (size_t i = 0; i < r.values.size(); ++i) r.values[i] = yw.values[i] - yc.values[i];
    return r;
}

}  // namespace

TEST_CASE("payload parsing") {
    const Payload32 p = Payload32::from_string("10101010101010101010101010101010");
    CHECK(p.bits[0] == 1);
    CHECK(p.bits[1] == 0);
    CHECK(p.to_string() == "10101010101010101010101010101010");
    CHECK_THROWS_AS(Payload32::from_string("1010"), ConfigError);
    CHECK_THROWS_AS(Payload32::from_string("1010101010101010101010101010101x"), ConfigError);
}

TEST_CASE("embed config json round trip rejects unknown keys") {
    EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT, 7);
    cfg.alpha = 12.5;
    nlohmann::json j = cfg;
    EmbedConfig back = j.get<EmbedConfig>();
    CHECK(back.algorithm == WatermarkAlgo::DCT);
    CHECK(back.seed == 7);
    CHECK(back.alpha == 12.5);

    nlohmann::json bad = {{"algo", "dct"}, {"strength", 1.0}};
    CHECK_THROWS_AS(bad.get<EmbedConfig>(), ConfigError);
}

// ---------------------------------------------------------------------------
// LSB
// ---------------------------------------------------------------------------

TEST_CASE("lsb forces payload bits into the blue channel") {
    RasterImage zeros = RasterImage::filled(8, 8, 0);
    Payload32 ones;
    ones.bits.fill(1);
    const RasterImage out = embed_lsb(zeros, ones);
    for (size_t i = 0; i < out.pixel_count(); ++i) {
        CHECK(out.samples[i * 3 + 2] == 1);
        CHECK(out.samples[i * 3 + 0] == 0);
        CHECK(out.samples[i * 3 + 1] == 0);
    }
    CHECK(decode_lsb(out) == ones);
}

TEST_CASE("lsb never touches R or G and residual amplitude is 1") {
    DetRng rng(1);
    const RasterImage carrier = fswtest::random_rgb(rng, 64, 64);
    const Payload32 m = Payload32::random(rng);
    const RasterImage out = embed_lsb(carrier, m);
    for (size_t i = 0; i < carrier.pixel_count(); ++i) {
        CHECK(out.samples[i * 3 + 0] == carrier.samples[i * 3 + 0]);
        CHECK(out.samples[i * 3 + 1] == carrier.samples[i * 3 + 1]);
    }
    const SparsityReport rep = sparsity_stats(absolute_residual(carrier, out));
    CHECK(rep.max_amp <= 1);
}

TEST_CASE("lsb decode round-trips on 100 random carrier/payload pairs") {
    DetRng rng(2);
    for (int i = 0; i < 100; ++i) {
        const RasterImage carrier = fswtest::random_rgb(rng, 8, 8);
        const Payload32 m = Payload32::random(rng);
        CHECK(decode_lsb(embed_lsb(carrier, m)) == m);
    }
}

TEST_CASE("lsb on an image of zeros decodes to all-zero payload") {
    const RasterImage zeros = RasterImage::filled(8, 8, 0);
    CHECK(decode_lsb(zeros).to_string() == std::string(32, '0'));
}

TEST_CASE("lsb identity when bits already match") {
    DetRng rng(3);
    RasterImage carrier = fswtest::random_rgb(rng, 64, 64);
    for (size_t i = 0; i < carrier.pixel_count(); ++i) carrier.samples[i * 3 + 2] &= 0xFE;
    Payload32 zeros;
    const RasterImage out = embed(make_cfg(WatermarkAlgo::LSB), carrier, zeros);
    CHECK(out.samples == carrier.samples);
}

TEST_CASE("lsb density on random carriers is about one half") {
    DetRng rng(4);
    const RasterImage carrier = fswtest::random_rgb(rng, 128, 128);
    const Payload32 m = Payload32::random(rng);
    const double density = sparsity_stats(absolute_residual(carrier, embed_lsb(carrier, m))).density;
    CHECK(density == doctest::Approx(0.5).epsilon(0.1));
}

// ---------------------------------------------------------------------------
// Patchwork
// ---------------------------------------------------------------------------

TEST_CASE("patchwork with zero step is the identity") {
    DetRng rng(5);
    const RasterImage carrier = fswtest::random_rgb(rng, 96, 96);
    EmbedConfig cfg = make_cfg(WatermarkAlgo::Patchwork);
    cfg.step = 0;
    const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
    CHECK(out.samples == carrier.samples);
}

TEST_CASE("patchwork sparsity and magnitudes") {
    DetRng rng(6);
    const RasterImage carrier = fswtest::random_rgb(rng, 256, 256);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::Patchwork, 99);
    const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
    const ResidualMap r = absolute_residual(carrier, out);
    const SparsityReport rep = sparsity_stats(r);
    CHECK(rep.l0 <= 6400);
    CHECK(rep.l0 > 6000);  // only clamp losses may reduce the support
    CHECK(rep.max_amp <= 5);
    for (uint8_t v : r.values) {
        if (v > 0) {
            CHECK(v >= 1);
            CHECK(v <= 5);
        }
    }
    CHECK(rep.mean_amp_nonzero <= 5.0);
    CHECK(rep.density < 0.1);
    CHECK(binarize_extremum(r).popcount() == rep.l0);
}

TEST_CASE("patchwork magnitudes are exactly d where no clamping can occur") {
    DetRng rng(7);
    const RasterImage carrier = RasterImage::filled(256, 256, 128);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::Patchwork, 21);
    const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
    const ResidualMap r = absolute_residual(carrier, out);
    int64_t n5 = 0;
    for (uint8_t v : r.values) {
        if (v > 0) {
            CHECK(v == 5);
            ++n5;
        }
    }
    CHECK(n5 == 6400);
}

TEST_CASE("patchwork statistic on a flat carrier is exactly +-2d") {
    DetRng rng(8);
    const RasterImage carrier = RasterImage::filled(256, 256, 128);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::Patchwork, 1234);
    Payload32 alternating;
    for (int i = 0; i < 32; ++i) alternating.bits[i] = i % 2;
    const RasterImage out = embed(cfg, carrier, alternating);
    const auto stats = patchwork_statistic(out, cfg);
    for (int k = 0; k < 32; ++k) {
        CHECK(stats[k] == doctest::Approx(alternating.bits[k] ? 10.0 : -10.0).epsilon(1e-12));
    }
    const auto clean_stats = patchwork_statistic(carrier, cfg);
    for (double s : clean_stats) CHECK(s == 0.0);
}

TEST_CASE("patchwork statistic sign agreement on textured carriers") {
    DetRng rng(9);
    int worst_agree = 32;
    for (int trial = 0; trial < 20; ++trial) {
        const RasterImage carrier = fswtest::noise_carrier(rng, 256, 256);
        const EmbedConfig cfg = make_cfg(WatermarkAlgo::Patchwork, 5000 + trial);
        const Payload32 m = Payload32::random(rng);
        const auto stats = patchwork_statistic(embed(cfg, carrier, m), cfg);
        int agree = 0;
        for (int k = 0; k < 32; ++k) {
            const bool positive = stats[k] > 0.0;
            agree += positive == (m.bits[k] == 1);
        }
        worst_agree = std::min(worst_agree, agree);
    }
    CHECK(worst_agree >= 31);
}

TEST_CASE("patchwork capacity errors surface through embed") {
    DetRng rng(10);
    const RasterImage small = fswtest::random_rgb(rng, 16, 16);
    CHECK_THROWS_AS(embed(make_cfg(WatermarkAlgo::Patchwork), small, Payload32::random(rng)),
                    CapacityError);
    const RasterImage medium = fswtest::random_rgb(rng, 64, 64);  // 4096 < 6400 pixels
    CHECK_THROWS_AS(embed(make_cfg(WatermarkAlgo::Patchwork), medium, Payload32::random(rng)),
                    CapacityError);
}

// ---------------------------------------------------------------------------
// DCT
// ---------------------------------------------------------------------------

TEST_CASE("dct embedder at alpha 0 returns the carrier untouched") {
    DetRng rng(11);
    const RasterImage carrier = fswtest::random_rgb(rng, 64, 64);
    EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT);
    cfg.alpha = 0.0;
    CHECK(embed(cfg, carrier, Payload32::random(rng)).samples == carrier.samples);
}

TEST_CASE("dct spread pattern is reproducible and zero at DC") {
    DetRng rng(12);
    const Payload32 m = Payload32::random(rng);
    const Plane w1 = dct_spread_pattern(77, m, 64, 64);
    const Plane w2 = dct_spread_pattern(77, m, 64, 64);
    CHECK(w1.values == w2.values);
    CHECK(w1.values[0] == 0.0f);
}

TEST_CASE("dct embedding leaves the DC coefficient unchanged before quantization") {
    DetRng rng(13);
    const RasterImage carrier = fswtest::noise_carrier(rng, 64, 64);
    const Plane y = rgb_to_yuv_planes(carrier).y;
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT, 314);
    const Payload32 m = Payload32::random(rng);
    const Plane y2 = dct_embed_y(y, m, cfg);
    const Spectrum2D before = dct2(y);
    const Spectrum2D after = dct2(y2);
    CHECK(std::abs(after.at(0, 0) - before.at(0, 0)) < 1e-2);
}

TEST_CASE("dct residual matches the regenerated pattern within quantization tolerance") {
    const RasterImage carrier = RasterImage::filled(128, 128, 128);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT, 2718);
    DetRng rng(14);
    const Payload32 m = Payload32::random(rng);
    const RasterImage out = embed(cfg, carrier, m);

    const Plane w = dct_spread_pattern(cfg.seed, m, 128, 128);
    Spectrum2D expected_spec(128, 128);
    for (size_t i = 0; i < w.values.size(); ++i) {
        expected_spec.coeffs[i] = static_cast<float>(cfg.alpha * w.values[i]);
    }
    const Plane expected_spatial = idct2(expected_spec);
    const Plane measured = y_residual(out, carrier);

    double max_err = 0.0;
    for (size_t i = 0; i < measured.values.size(); ++i) {
        max_err = std::max(max_err, std::abs(double(measured.values[i]) - double(expected_spatial.values[i])));
    }
    CHECK(max_err <= 0.75);  // only the final clamp/round separates the two paths

    // in the spectral domain the gap is pure quantization noise
    const Spectrum2D measured_spec = dct2(measured);
    double rms = 0.0;
    for (size_t i = 0; i < measured_spec.coeffs.size(); ++i) {
        const double d = double(measured_spec.coeffs[i]) - double(expected_spec.coeffs[i]);
        rms += d * d;
    }
    rms = std::sqrt(rms / double(measured_spec.coeffs.size()));
    CHECK(rms < 0.5);
}

TEST_CASE("dct mean absolute pixel change stays small at alpha 15") {
    DetRng rng(15);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const RasterImage carrier = fswtest::random_rgb(rng, 64, 64);
        const EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT, 600 + trial);
        const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
        double sum = 0.0;
        for (size_t i = 0; i < carrier.samples.size(); ++i) {
            sum += std::abs(int(carrier.samples[i]) - int(out.samples[i]));
        }
        worst = std::max(worst, sum / double(carrier.samples.size()));
    }
    CHECK(worst <= 3.0);
}

TEST_CASE("dct residual is dense") {
    DetRng rng(16);
    const RasterImage carrier = fswtest::random_rgb(rng, 128, 128);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::DCT, 5150);
    const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
    CHECK(sparsity_stats(absolute_residual(carrier, out)).density >= 0.5);
}

// ---------------------------------------------------------------------------
// DWT
// ---------------------------------------------------------------------------

TEST_CASE("dwt embedder at alpha 0 returns the carrier untouched") {
    DetRng rng(17);
    const RasterImage carrier = fswtest::random_rgb(rng, 64, 64);
    EmbedConfig cfg = make_cfg(WatermarkAlgo::DWT);
    cfg.alpha = 0.0;
    CHECK(embed(cfg, carrier, Payload32::random(rng)).samples == carrier.samples);
}

TEST_CASE("dwt residual energy concentrates in the deepest HL sub-band") {
    DetRng rng(18);
    for (const bool flat : {true, false}) {
        const RasterImage carrier =
            flat ? RasterImage::filled(128, 128, 128) : fswtest::noise_carrier(rng, 128, 128);
        const EmbedConfig cfg = make_cfg(WatermarkAlgo::DWT, 8128);
        const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
        const Plane res = y_residual(out, carrier);
        const DwtPyramid pyr = haar_dwt2(res, cfg.dwt_levels);
        auto energy = [](const Plane& p) {
            double e = 0.0;
            for (float v : p.values) e += double(v) * double(v);
            return e;
        };
        const double hl2 = energy(pyr.levels[1].hl);
        double total = energy(pyr.deepest_ll());
        for (const auto& lvl : pyr.levels) {
            total += energy(lvl.hl) + energy(lvl.lh) + energy(lvl.hh);
        }
        CHECK(hl2 / total >= 0.99);
    }
}

TEST_CASE("dwt residual is spatially dense") {
    DetRng rng(19);
    const RasterImage carrier = fswtest::random_rgb(rng, 128, 128);
    const EmbedConfig cfg = make_cfg(WatermarkAlgo::DWT, 4242);
    const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
    CHECK(sparsity_stats(absolute_residual(carrier, out)).density >= 0.5);
}

// ---------------------------------------------------------------------------
// Cross-cutting invariants
// ---------------------------------------------------------------------------

TEST_CASE("embedders are deterministic") {
    DetRng rng(20);
    const RasterImage carrier = fswtest::random_rgb(rng, 96, 96);
    for (auto algo : {WatermarkAlgo::LSB, WatermarkAlgo::Patchwork, WatermarkAlgo::DCT, WatermarkAlgo::DWT}) {
        const EmbedConfig cfg = make_cfg(algo, 31337);
        Payload32 m = Payload32::from_string("11001010111100001111000011110000");
        const RasterImage a = embed(cfg, carrier, m);
        const RasterImage b = embed(cfg, carrier, m);
        CHECK(a.samples == b.samples);
    }
}

TEST_CASE("psnr stays above 30 dB for every embedder") {
    DetRng rng(21);
    for (auto algo : {WatermarkAlgo::LSB, WatermarkAlgo::Patchwork, WatermarkAlgo::DCT, WatermarkAlgo::DWT}) {
        for (int trial = 0; trial < 5; ++trial) {
            const RasterImage carrier = fswtest::noise_carrier(rng, 96, 96);
            const EmbedConfig cfg = make_cfg(algo, 7000 + trial);
            const RasterImage out = embed(cfg, carrier, Payload32::random(rng));
            CHECK(psnr(carrier, out) >= 30.0);
        }
    }
}

TEST_CASE("density ordering separates sparse and dense embedders") {
    DetRng rng(22);
    const RasterImage carrier = fswtest::random_rgb(rng, 256, 256);
    const Payload32 m = Payload32::random(rng);
    auto density_of = [&](WatermarkAlgo algo) {
        const RasterImage out = embed(make_cfg(algo, 555), carrier, m);
        return sparsity_stats(absolute_residual(carrier, out)).density;
    };
    const double pw = density_of(WatermarkAlgo::Patchwork);
    const double lsb = density_of(WatermarkAlgo::LSB);
    const double dct = density_of(WatermarkAlgo::DCT);
    const double dwt = density_of(WatermarkAlgo::DWT);
    CHECK(pw < 0.1);
    CHECK(lsb >= 0.4);
    CHECK(dct >= 0.4);
    CHECK(dwt >= 0.5);
    CHECK(lsb > 4.0 * pw);
    CHECK(dct > 4.0 * pw);
}

TEST_CASE("embed rejects non-RGB and undersized carriers") {
    DetRng rng(23);
    RasterImage yuv = fswtest::random_rgb(rng, 64, 64);
    yuv.space = ColorSpace::YUV;
    CHECK_THROWS_AS(embed(make_cfg(WatermarkAlgo::LSB), yuv, Payload32::random(rng)), SpaceError);
    const RasterImage tiny = fswtest::random_rgb(rng, 32, 32);
    CHECK_THROWS_AS(embed(make_cfg(WatermarkAlgo::DCT), tiny, Payload32::random(rng)), CapacityError);
}
