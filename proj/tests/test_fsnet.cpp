#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fsw/errors.hpp"
#include "fsw/fsnet.hpp"
#include "fsw/gradcheck.hpp"
#include "test_util.hpp"

using namespace fsw;
using ad::Tensor;

namespace {

FsnetConfig micro_config(uint64_t seed = 5) {
    FsnetConfig cfg;
    cfg.input_size = 16;
    cfg.c_stem = 4;
    cfg.stage_channels = {4, 8};
    cfg.dmsa_k = 4;
    cfg.dropout_p = 0.0;
    cfg.init_seed = seed;
    return cfg;
}

Tensor random_batch(DetRng& rng, int b, int s) {
    return Tensor::randn({b, 3, s, s}, rng, 0.25, false);
}

// toy two-class set: near-constant images vs high-frequency checkerboards
void toy_sample(DetRng& rng, int s, int label, std::vector<float>& out) {
    const float base = 0.3f + 0.4f * static_cast<float>(rng.uniform_f64());
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                float v = base;
                if (label == 1) v += ((x + y) % 2 == 0 ? 0.12f : -0.12f);
                v += 0.01f * static_cast<float>(rng.standard_normal());
                out.push_back(std::clamp(v, 0.0f, 1.0f));
            }
        }
    }
}

}  // namespace

TEST_CASE("config json round trip and validation") {
    FsnetConfig cfg = micro_config();
    nlohmann::json j = cfg;
    const FsnetConfig back = j.get<FsnetConfig>();
    CHECK(back.input_size == 16);
    CHECK(back.stage_channels == std::vector<int>{4, 8});

    nlohmann::json bad = {{"c_stern", 4}};
    CHECK_THROWS_AS(bad.get<FsnetConfig>(), ConfigError);

    FsnetConfig invalid = micro_config();
    invalid.input_size = 18;  // not divisible by 2^stages
    CHECK_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("aspm with all-ones mask reduces to x + x + maxpool(x)") {
    FsnetModel model(micro_config());
    DetRng rng(1);
    const Tensor x = random_batch(rng, 2, 16);
    const Tensor actual = model.aspm_forward(x);

    const Tensor fused = ad::add(ad::add(x, x), ad::maxpool2d(x, 3, 1, 1));
    const Tensor expected = ad::conv2d_3x3(fused, model.aspm().conv.w, model.aspm().conv.b);
    REQUIRE(actual.numel() == expected.numel());
    for (int64_t i = 0; i < actual.numel(); ++i) {
        CHECK(actual.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-4));
    }
}

TEST_CASE("aspm residual reproduces the input through the all-pass gate") {
    FsnetModel model(micro_config());
    DetRng rng(2);
    const Tensor x = random_batch(rng, 1, 16);
    // residual path only: dct -> gate -> idct
    const Tensor gate = ad::upsample_bilinear(model.aspm().mask, 16, 16);
    const Tensor r = ad::idct2(ad::mul_plane(ad::dct2(x), gate));
    double max_err = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        max_err = std::max(max_err, std::abs(double(r.data()[i]) - double(x.data()[i])));
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("aspm with all-zero mask passes the input straight to the conv") {
    FsnetModel model(micro_config());
    std::fill(model.aspm().mask.data_mut().begin(), model.aspm().mask.data_mut().end(), 0.0f);
    DetRng rng(3);
    const Tensor x = random_batch(rng, 1, 16);
    const Tensor actual = model.aspm_forward(x);
    const Tensor expected = ad::conv2d_3x3(x, model.aspm().conv.w, model.aspm().conv.b);
    for (int64_t i = 0; i < actual.numel(); ++i) {
        CHECK(actual.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-5));
    }
}

TEST_CASE("gradients reach the mask") {
    FsnetModel model(micro_config());
    DetRng rng(4);
    const Tensor x = random_batch(rng, 1, 16);
    ad::Tape tape;
    const Tensor loss = ad::sum(model.aspm_forward(x));
    tape.backward(loss);
    CHECK(model.aspm().mask.grad_norm() > 0.0);
}

TEST_CASE("frozen gate keeps the mask out of the parameter list") {
    FsnetConfig cfg = micro_config();
    cfg.learnable_gate = false;
    FsnetModel model(cfg);
    for (const auto& p : model.parameters()) CHECK(p.name != "aspm.mask");
    CHECK_FALSE(model.aspm().mask.requires_grad());
}

TEST_CASE("tri-stream pooling arithmetic") {
    // hand case from the branch descriptors: column [1,-2,3,0] over K=4
    Tensor s = Tensor::from_data({1, 1, 4}, {1, -2, 3, 0});
    const Tensor v_avg = ad::mean_last(s);
    const Tensor v_max = ad::max_last(s);
    const Tensor v_min = ad::neg(ad::max_last(ad::neg(s)));
    CHECK(v_avg.data()[0] == doctest::Approx(0.5f));
    CHECK(v_max.data()[0] == 3.0f);
    CHECK(v_min.data()[0] == -2.0f);

    SUBCASE("min identity is exact for random descriptors") {
        DetRng rng(5);
        Tensor r = Tensor::randn({3, 7, 16}, rng);
        const Tensor via_neg = ad::neg(ad::max_last(ad::neg(r)));
        for (int row = 0; row < 21; ++row) {
            float mn = r.data()[row * 16];
            for (int k = 1; k < 16; ++k) mn = std::min(mn, r.data()[row * 16 + k]);
            CHECK(via_neg.data()[row] == mn);
        }
    }
    SUBCASE("constant descriptors give MLP input 3c/K") {
        const float c = -1.75f;
        Tensor sc = Tensor::full({2, 3, 8}, c);
        const Tensor v = ad::scale(
            ad::add(ad::add(ad::mean_last(sc), ad::max_last(sc)), ad::neg(ad::max_last(ad::neg(sc)))),
            1.0 / 8.0);
        for (float x : v.data()) CHECK(x == doctest::Approx(3.0f * c / 8.0f));
    }
}

TEST_CASE("dmsa attention stays in (0,1) and preserves feature signs") {
    FsnetModel model(micro_config());
    DetRng rng(6);
    const Tensor f = Tensor::randn({2, 8, 4, 4}, rng);
    DmsaProbe probe;
    const Tensor out = model.dmsa_forward(f, &probe);
    REQUIRE(probe.v_total.size() == 16);
    for (float v : probe.v_total) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    REQUIRE(probe.branch_profile.size() == 8);
    for (float v : probe.branch_profile) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    for (int64_t i = 0; i < f.numel(); ++i) {
        const float a = f.data()[i], b = out.data()[i];
        CHECK(std::abs(b) <= std::abs(a));
        if (a != 0.0f) CHECK(std::signbit(a) == std::signbit(b));
    }
}

TEST_CASE("dmsa frequency set follows the zig-zag order and stays distinct") {
    FsnetModel model(micro_config());
    const auto& freqs = model.dmsa().freqs;
    REQUIRE(freqs.size() == 4);
    CHECK(freqs[0] == std::pair{0, 0});
    CHECK(freqs[1] == std::pair{0, 1});
    CHECK(freqs[2] == std::pair{1, 0});
    CHECK(freqs[3] == std::pair{2, 0});
}

TEST_CASE("dmsa variants run and keep the output shape") {
    DetRng rng(7);
    const Tensor f = Tensor::randn({2, 8, 4, 4}, rng);
    for (const bool spatial : {false, true}) {
        for (const bool tri : {false, true}) {
            FsnetConfig cfg = micro_config();
            cfg.dmsa_spatial_extrema = spatial;
            cfg.dmsa_tri_stream = tri;
            FsnetModel model(cfg);
            const Tensor out = model.dmsa_forward(f);
            CHECK(out.shape() == f.shape());
        }
    }
    FsnetConfig single = micro_config();
    single.dmsa_multi_branch = false;
    FsnetModel model(single);
    CHECK(model.dmsa().freqs.size() == 1);
    CHECK(model.dmsa_forward(f).shape() == f.shape());
}

TEST_CASE("backbone output spatial dims shrink by 2 per stage") {
    FsnetModel model(micro_config());
    DetRng rng(8);
    const Tensor stem = Tensor::randn({2, 4, 16, 16}, rng);
    const Tensor deep = model.backbone_forward(stem, false);
    CHECK(deep.shape() == std::vector<int>{2, 8, 4, 4});
}

TEST_CASE("backbone with zeroed parameters emits zeros") {
    FsnetModel model(micro_config());
    for (auto& p : model.parameters()) {
        if (p.name.rfind("stage", 0) == 0) {
            std::fill(p.tensor.data_mut().begin(), p.tensor.data_mut().end(), 0.0f);
        }
    }
    DetRng rng(9);
    const Tensor stem = Tensor::randn({2, 4, 16, 16}, rng);
    const Tensor deep = model.backbone_forward(stem, true);
    for (float v : deep.data()) CHECK(v == 0.0f);
}

TEST_CASE("forward produces [B,2] logits deterministically in eval mode") {
    FsnetModel model(micro_config());
    DetRng rng(10);
    const Tensor batch = random_batch(rng, 3, 16);
    const Tensor a = model.forward(batch, false);
    const Tensor b = model.forward(batch, false);
    REQUIRE(a.shape() == std::vector<int>{3, 2});
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

    SUBCASE("permuting the batch permutes the logits") {
        std::vector<float> permuted(batch.data().begin(), batch.data().end());
        const size_t stride = 3 * 16 * 16;
        std::rotate(permuted.begin(), permuted.begin() + stride, permuted.end());
        const Tensor rotated = Tensor::from_data({3, 3, 16, 16}, std::move(permuted));
        const Tensor c = model.forward(rotated, false);
        for (int row = 0; row < 3; ++row) {
            const int src = (row + 1) % 3;
            CHECK(c.data()[row * 2 + 0] == doctest::Approx(a.data()[src * 2 + 0]).epsilon(1e-5));
            CHECK(c.data()[row * 2 + 1] == doctest::Approx(a.data()[src * 2 + 1]).epsilon(1e-5));
        }
    }
    SUBCASE("indivisible spatial dims are rejected") {
        const Tensor bad = Tensor::zeros({1, 3, 18, 18});
        CHECK_THROWS_AS(model.forward(bad, false), ShapeError);
    }
}

TEST_CASE("gradients reach every parameter group after one backward") {
    FsnetModel model(micro_config());
    DetRng rng(11);
    const Tensor batch = random_batch(rng, 2, 16);
    ad::Tape tape;
    const Tensor loss = ad::cross_entropy_logits(model.forward(batch, true), {0, 1});
    tape.backward(loss);
    for (auto& p : model.parameters()) {
        INFO("parameter ", p.name);
        CHECK(p.tensor.grad_norm() > 0.0);
    }
}

TEST_CASE("initial loss sits near ln 2") {
    FsnetModel model(micro_config(123));
    DetRng rng(12);
    const Tensor batch = random_batch(rng, 8, 16);
    const Tensor loss = ad::cross_entropy_logits(model.forward(batch, false), {0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(0.3));
}

TEST_CASE("training separates constants from checkerboards") {
    FsnetModel model(micro_config(77));
    AdamWConfig ocfg;
    ocfg.lr = 1e-2;
    AdamW opt(ocfg);
    DetRng rng(13);

    const int batch_size = 16;
    std::vector<float> first_losses, last_losses;
    for (int step = 0; step < 50; ++step) {
        std::vector<float> data;
        std::vector<int> labels;
        data.reserve(batch_size * 3 * 16 * 16);
        for (int i = 0; i < batch_size; ++i) {
            const int label = i % 2;
            toy_sample(rng, 16, label, data);
            labels.push_back(label);
        }
        const Tensor batch = Tensor::from_data({batch_size, 3, 16, 16}, std::move(data));
        const float loss = model.train_step(opt, batch, labels);
        if (step < 3) first_losses.push_back(loss);
        if (step >= 47) last_losses.push_back(loss);
    }
    CHECK(first_losses.front() > 0.4);
    for (float l : last_losses) CHECK(l < 0.1);
}

TEST_CASE("training is deterministic per seed") {
    auto run = [] {
        FsnetModel model(micro_config(42));
        AdamW opt;
        DetRng rng(55);
        std::vector<float> losses;
        for (int step = 0; step < 5; ++step) {
            std::vector<float> data;
            std::vector<int> labels;
            for (int i = 0; i < 8; ++i) {
                toy_sample(rng, 16, i % 2, data);
                labels.push_back(i % 2);
            }
            losses.push_back(model.train_step(opt, Tensor::from_data({8, 3, 16, 16}, std::move(data)), labels));
        }
        std::vector<float> mask(model.aspm().mask.data().begin(), model.aspm().mask.data().end());
        return std::pair{losses, mask};
    };
    const auto [l1, m1] = run();
    const auto [l2, m2] = run();
    CHECK(l1 == l2);
    CHECK(m1 == m2);
}

TEST_CASE("predict basics") {
    FsnetModel model(micro_config());
    DetRng rng(14);
    const RasterImage img = fswtest::random_rgb(rng, 16, 16);
    const Prediction a = predict(model, img);
    const Prediction b = predict(model, img);
    CHECK(a.label == b.label);
    CHECK(a.prob_clean == b.prob_clean);
    CHECK(a.prob_clean + a.prob_watermarked == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK((a.label == 0 || a.label == 1));

    SUBCASE("odd-size input is resized to the model size first") {
        const RasterImage odd = fswtest::random_rgb(rng, 23, 31);
        const Prediction p = predict(model, odd);
        CHECK(p.prob_clean + p.prob_watermarked == doctest::Approx(1.0f).epsilon(1e-6));
    }
}

TEST_CASE("checkpoint round trip preserves the model bit for bit") {
    fswtest::TempDir tmp;
    FsnetModel model(micro_config(99));
    // train a little so running stats and weights move off init
    AdamW opt;
    DetRng rng(15);
    for (int step = 0; step < 3; ++step) {
        std::vector<float> data;
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i) {
            toy_sample(rng, 16, i % 2, data);
            labels.push_back(i % 2);
        }
        model.train_step(opt, Tensor::from_data({4, 3, 16, 16}, std::move(data)), labels);
    }
    model.save(tmp.file("model.ckpt"));
    FsnetModel loaded = FsnetModel::load(tmp.file("model.ckpt"));

    DetRng rng2(16);
    const RasterImage img = fswtest::random_rgb(rng2, 16, 16);
    const Prediction p1 = predict(model, img);
    const Prediction p2 = predict(loaded, img);
    CHECK(p1.label == p2.label);
    CHECK(p1.prob_clean == p2.prob_clean);

    loaded.save(tmp.file("model2.ckpt"));
    std::ifstream f1(tmp.file("model.ckpt"), std::ios::binary);
    std::ifstream f2(tmp.file("model2.ckpt"), std::ios::binary);
    const std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}
