#include "fsw/fsnet.hpp"

#include <algorithm>
#include <cmath>

#include "fsw/errors.hpp"
#include "fsw/spectral.hpp"

namespace fsw {

using ad::Tensor;

void FsnetConfig::validate() const {
    if (input_size < 8) throw ConfigError("input_size must be >= 8");
    if (stage_channels.empty()) throw ConfigError("at least one backbone stage is required");
    if (input_size % downsample_factor() != 0) {
        throw ConfigError("input_size must be divisible by 2^stages");
    }
    if (c_stem < 1 || blocks_per_stage < 1 || mask_grid < 2) throw ConfigError("bad architecture sizes");
    if (dmsa_basis < 1 || dmsa_k < 1 || dmsa_k > dmsa_basis * dmsa_basis) {
        throw ConfigError("dmsa_k must fit on the basis grid");
    }
    if (dmsa_reduction < 1) throw ConfigError("dmsa_reduction must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0,1)");
    for (int c : stage_channels) {
        if (c < 1) throw ConfigError("stage channel counts must be positive");
    }
}

void to_json(nlohmann::json& j, const FsnetConfig& cfg) {
    j = nlohmann::json{{"input_size", cfg.input_size},
                       {"c_stem", cfg.c_stem},
                       {"stage_channels", cfg.stage_channels},
                       {"blocks_per_stage", cfg.blocks_per_stage},
                       {"mask_grid", cfg.mask_grid},
                       {"dmsa_k", cfg.dmsa_k},
                       {"dmsa_reduction", cfg.dmsa_reduction},
                       {"dmsa_basis", cfg.dmsa_basis},
                       {"dropout_p", cfg.dropout_p},
                       {"learnable_gate", cfg.learnable_gate},
                       {"fusion_maxpool", cfg.fusion_maxpool},
                       {"dmsa_multi_branch", cfg.dmsa_multi_branch},
                       {"dmsa_tri_stream", cfg.dmsa_tri_stream},
                       {"aspm_residual_subtract", cfg.aspm_residual_subtract},
                       {"dmsa_spatial_extrema", cfg.dmsa_spatial_extrema},
                       {"init_seed", cfg.init_seed}};
}

void from_json(const nlohmann::json& j, FsnetConfig& cfg) {
    cfg = FsnetConfig{};
    nlohmann::json defaults = cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("unknown model config key: " + it.key());
    }
    cfg.input_size = j.value("input_size", cfg.input_size);
    cfg.c_stem = j.value("c_stem", cfg.c_stem);
    cfg.stage_channels = j.value("stage_channels", cfg.stage_channels);
    cfg.blocks_per_stage = j.value("blocks_per_stage", cfg.blocks_per_stage);
    cfg.mask_grid = j.value("mask_grid", cfg.mask_grid);
    cfg.dmsa_k = j.value("dmsa_k", cfg.dmsa_k);
    cfg.dmsa_reduction = j.value("dmsa_reduction", cfg.dmsa_reduction);
    cfg.dmsa_basis = j.value("dmsa_basis", cfg.dmsa_basis);
    cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
    cfg.learnable_gate = j.value("learnable_gate", cfg.learnable_gate);
    cfg.fusion_maxpool = j.value("fusion_maxpool", cfg.fusion_maxpool);
    cfg.dmsa_multi_branch = j.value("dmsa_multi_branch", cfg.dmsa_multi_branch);
    cfg.dmsa_tri_stream = j.value("dmsa_tri_stream", cfg.dmsa_tri_stream);
    cfg.aspm_residual_subtract = j.value("aspm_residual_subtract", cfg.aspm_residual_subtract);
    cfg.dmsa_spatial_extrema = j.value("dmsa_spatial_extrema", cfg.dmsa_spatial_extrema);
    cfg.init_seed = j.value("init_seed", cfg.init_seed);
    cfg.validate();
}

namespace {

// with_bias = false for layers feeding straight into batch norm, where a bias
// is a dead parameter (the standardization removes any constant shift)
ConvLayer make_conv(int c_out, int c_in, DetRng& rng, bool with_bias = true) {
    const double stddev = std::sqrt(2.0 / (c_in * 9.0));
    return {Tensor::randn({c_out, c_in, 3, 3}, rng, stddev, true),
            Tensor::zeros({c_out}, with_bias)};
}

LinearLayer make_linear(int in, int out, DetRng& rng, bool with_bias = true) {
    const double stddev = std::sqrt(2.0 / in);
    return {Tensor::randn({in, out}, rng, stddev, true), Tensor::zeros({out}, with_bias)};
}

BnLayer make_bn(int features) {
    BnLayer bn;
    bn.gamma = Tensor::full({features}, 1.0f, true);
    bn.beta = Tensor::zeros({features}, true);
    bn.state = ad::BatchNormState(features);
    return bn;
}

}  // namespace

namespace {

// Projects each 3x3 filter away from constant and linear-ramp patches, the
// residual-filter init customary for steganalysis stems: locally smooth
// content is rejected from the first layer onward while fine-grained
// perturbations pass at full strength. The filters stay learnable.
void residualize_filters(Tensor& w) {
    // orthonormal smooth basis over the 3x3 window: constant, x-ramp, y-ramp
    static const float basis[3][9] = {
        {1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3, 1.f / 3},
        {-0.40824829f, 0.f, 0.40824829f, -0.40824829f, 0.f, 0.40824829f, -0.40824829f, 0.f, 0.40824829f},
        {-0.40824829f, -0.40824829f, -0.40824829f, 0.f, 0.f, 0.f, 0.40824829f, 0.40824829f, 0.40824829f},
    };
    auto data = w.data_mut();
    for (size_t f = 0; f < data.size() / 9; ++f) {
        float* k = data.data() + f * 9;
        for (const auto& b : basis) {
            float dot = 0.0f;
            for (int i = 0; i < 9; ++i) dot += k[i] * b[i];
            for (int i = 0; i < 9; ++i) k[i] -= dot * b[i];
        }
    }
}

}  // namespace

FsnetModel::FsnetModel(FsnetConfig cfg)
    : cfg_(std::move(cfg)), dropout_rng_(DetRng::derive_seed(cfg_.init_seed, 0xD0)) {
    cfg_.validate();
    DetRng rng(cfg_.init_seed);

    // The gate starts all-pass; when frozen it stays a constant all-pass mask.
    aspm_.mask = Tensor::full({cfg_.mask_grid, cfg_.mask_grid}, 1.0f, cfg_.learnable_gate);
    aspm_.conv = make_conv(cfg_.c_stem, 3, rng);
    residualize_filters(aspm_.conv.w);

    int in_c = cfg_.c_stem;
    for (int c : cfg_.stage_channels) {
        Stage stage;
        stage.proj = make_conv(c, in_c, rng, /*with_bias=*/false);
        stage.bn = make_bn(c);
        for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
            ResBlock block;
            block.conv1 = make_conv(c, c, rng, /*with_bias=*/false);
            block.bn1 = make_bn(c);
            block.conv2 = make_conv(c, c, rng, /*with_bias=*/false);
            block.bn2 = make_bn(c);
            stage.blocks.push_back(std::move(block));
        }
        stages_.push_back(std::move(stage));
        in_c = c;
    }

    const int c_deep = cfg_.stage_channels.back();
    const auto zigzag = zigzag_order(cfg_.dmsa_basis, cfg_.dmsa_basis);
    if (cfg_.dmsa_multi_branch) {
        dmsa_.freqs.assign(zigzag.begin(), zigzag.begin() + cfg_.dmsa_k);
    } else {
        dmsa_.freqs = {{0, 0}};  // unified single frequency
    }
    const int hidden = std::max(1, c_deep / cfg_.dmsa_reduction);
    dmsa_.fc1 = make_linear(c_deep, hidden, rng);
    // Attention head init: small non-negative output weights on top of a
    // suppressed (-2) bias start every channel as a monotone band-energy
    // detector in the sigmoid's live region; descriptors are large enough
    // that a plain He init saturates the gate instead.
    dmsa_.fc2 = {Tensor::randn({hidden, c_deep}, rng, 0.01, true),
                 Tensor::full({c_deep}, -2.0f, true)};
    for (auto& w : dmsa_.fc2.w.data_mut()) w = std::abs(w);

    const int head_hidden = std::max(1, c_deep / 2);
    decoder_.fc1 = make_linear(c_deep, head_hidden, rng, /*with_bias=*/false);
    decoder_.bn = make_bn(head_hidden);
    // near-zero classifier init keeps the starting logits symmetric
    decoder_.fc2 = {Tensor::randn({head_hidden, 2}, rng, 0.01, true), Tensor::zeros({2}, true)};
}

std::vector<ParamRef> FsnetModel::parameters() {
    std::vector<ParamRef> params;
    auto push = [&params](const std::string& name, const Tensor& t, bool decay) {
        if (t.requires_grad()) params.push_back({name, t, decay});
    };
    push("aspm.mask", aspm_.mask, true);
    push("aspm.conv.w", aspm_.conv.w, true);
    push("aspm.conv.b", aspm_.conv.b, false);
    for (size_t s = 0; s < stages_.size(); ++s) {
        const std::string p = "stage" + std::to_string(s) + ".";
        push(p + "proj.w", stages_[s].proj.w, true);
        push(p + "proj.b", stages_[s].proj.b, false);
        push(p + "bn.gamma", stages_[s].bn.gamma, false);
        push(p + "bn.beta", stages_[s].bn.beta, false);
        for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
            const std::string q = p + "block" + std::to_string(b) + ".";
            ResBlock& blk = stages_[s].blocks[b];
            push(q + "conv1.w", blk.conv1.w, true);
            push(q + "conv1.b", blk.conv1.b, false);
            push(q + "bn1.gamma", blk.bn1.gamma, false);
            push(q + "bn1.beta", blk.bn1.beta, false);
            push(q + "conv2.w", blk.conv2.w, true);
            push(q + "conv2.b", blk.conv2.b, false);
            push(q + "bn2.gamma", blk.bn2.gamma, false);
            push(q + "bn2.beta", blk.bn2.beta, false);
        }
    }
    push("dmsa.fc1.w", dmsa_.fc1.w, true);
    push("dmsa.fc1.b", dmsa_.fc1.b, false);
    push("dmsa.fc2.w", dmsa_.fc2.w, true);
    push("dmsa.fc2.b", dmsa_.fc2.b, false);
    push("head.fc1.w", decoder_.fc1.w, true);
    push("head.fc1.b", decoder_.fc1.b, false);
    push("head.bn.gamma", decoder_.bn.gamma, false);
    push("head.bn.beta", decoder_.bn.beta, false);
    push("head.fc2.w", decoder_.fc2.w, true);
    push("head.fc2.b", decoder_.fc2.b, false);
    return params;
}

Tensor FsnetModel::aspm_forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("aspm_forward: expected [B,3,H,W]");
    const int h = x.dim(2), w = x.dim(3);
    if (h < 8 || w < 8) throw ShapeError("aspm_forward: spatial dims must be >= 8");

    const Tensor x_freq = ad::dct2(x);
    const Tensor gate = ad::upsample_bilinear(aspm_.mask, h, w);
    const Tensor gated = ad::mul_plane(x_freq, gate);
    Tensor residual = ad::idct2(gated);
    if (cfg_.aspm_residual_subtract) residual = ad::sub(x, residual);

    Tensor fused = ad::add(x, residual);
    if (cfg_.fusion_maxpool) {
        fused = ad::add(fused, ad::maxpool2d(residual, 3, 1, 1));
    }
    return ad::conv2d_3x3(fused, aspm_.conv.w, aspm_.conv.b);
}

Tensor FsnetModel::backbone_forward(const Tensor& x, bool train) {
    Tensor t = x;
    for (Stage& stage : stages_) {
        if (t.dim(2) % 2 != 0 || t.dim(3) % 2 != 0) {
            throw ShapeError("backbone stage input dims must be even");
        }
        // rectify at full resolution before decimating: weak high-frequency
        // content survives the pooling as channel energy
        t = ad::relu(ad::batchnorm(ad::conv2d_3x3(t, stage.proj.w, stage.proj.b), stage.bn.gamma,
                                   stage.bn.beta, stage.bn.state, train));
        t = ad::maxpool2d(t, 2, 2, 0);
        for (ResBlock& blk : stage.blocks) {
            Tensor h = ad::relu(ad::batchnorm(ad::conv2d_3x3(t, blk.conv1.w, blk.conv1.b),
                                              blk.bn1.gamma, blk.bn1.beta, blk.bn1.state, train));
            h = ad::batchnorm(ad::conv2d_3x3(h, blk.conv2.w, blk.conv2.b), blk.bn2.gamma,
                              blk.bn2.beta, blk.bn2.state, train);
            t = ad::relu(ad::add(h, t));
        }
    }
    return t;
}

Tensor FsnetModel::dmsa_basis_matrix(int h, int w) {
    const auto key = std::make_pair(h, w);
    {
        std::lock_guard lock(*dmsa_.cache_mu);
        auto it = dmsa_.basis_cache->find(key);
        if (it != dmsa_.basis_cache->end()) return it->second;
    }
    const int k = static_cast<int>(dmsa_.freqs.size());
    std::vector<float> data(static_cast<size_t>(h) * w * k);
    for (int i = 0; i < k; ++i) {
        const auto [u, v] = dmsa_.freqs[i];
        const Plane base = dct_basis(u, v, cfg_.dmsa_basis, cfg_.dmsa_basis);
        const Plane aligned = resize_bilinear(base, h, w);
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
            data[p * k + i] = aligned.values[p];
        }
    }
    Tensor basis = Tensor::from_data({h * w, k}, std::move(data), false);
    std::lock_guard lock(*dmsa_.cache_mu);
    dmsa_.basis_cache->emplace(key, basis);
    return basis;
}

Tensor FsnetModel::dmsa_forward(const Tensor& f, DmsaProbe* probe) {
    if (f.rank() != 4) throw ShapeError("dmsa_forward: expected [B,C,H,W]");
    const int batch = f.dim(0), channels = f.dim(1), h = f.dim(2), w = f.dim(3);
    if (channels != dmsa_.fc1.w.dim(0)) throw ShapeError("dmsa_forward: channel count disagrees with MLP");
    const int k = static_cast<int>(dmsa_.freqs.size());
    const double inv_k = 1.0 / static_cast<double>(k);

    Tensor v_in;
    Tensor spectral;  // [B,C,K] branch descriptors (projection path)
    if (!cfg_.dmsa_spatial_extrema) {
        const Tensor basis = dmsa_basis_matrix(h, w);
        const Tensor flat = ad::reshape(f, {batch * channels, h * w});
        spectral = ad::reshape(ad::matmul(flat, basis), {batch, channels, k});
        const Tensor v_avg = ad::mean_last(spectral);
        if (cfg_.dmsa_tri_stream) {
            const Tensor v_max = ad::max_last(spectral);
            const Tensor v_min = ad::neg(ad::max_last(ad::neg(spectral)));
            v_in = ad::scale(ad::add(ad::add(v_avg, v_max), v_min), inv_k);
        } else {
            // extremum streams removed: the average stream stands in for all three
            v_in = ad::scale(v_avg, 3.0 * inv_k);
        }
    } else {
        // alternate reading: extrema taken over spatial positions of the
        // basis-weighted maps as well as over branches
        Tensor v_avg, v_max, v_min;
        for (int i = 0; i < k; ++i) {
            const auto [u, v] = dmsa_.freqs[i];
            const Plane aligned = resize_bilinear(dct_basis(u, v, cfg_.dmsa_basis, cfg_.dmsa_basis), h, w);
            Tensor basis_plane = Tensor::from_data({h, w}, aligned.values, false);
            const Tensor weighted = ad::mul_plane(f, basis_plane);
            const Tensor avg_i = ad::avgpool_global(weighted);
            const Tensor max_i = ad::reshape(ad::adaptive_maxpool2d(weighted, 1, 1), {batch, channels});
            const Tensor min_i =
                ad::neg(ad::reshape(ad::adaptive_maxpool2d(ad::neg(weighted), 1, 1), {batch, channels}));
            if (i == 0) {
                v_avg = avg_i;
                v_max = max_i;
                v_min = min_i;
            } else {
                v_avg = ad::add(v_avg, avg_i);
                v_max = ad::maximum(v_max, max_i);
                v_min = ad::neg(ad::maximum(ad::neg(v_min), ad::neg(min_i)));
            }
        }
        v_avg = ad::scale(v_avg, inv_k);
        if (cfg_.dmsa_tri_stream) {
            v_in = ad::scale(ad::add(ad::add(v_avg, v_max), v_min), inv_k);
        } else {
            v_in = ad::scale(v_avg, 3.0 * inv_k);
        }
    }

    const Tensor hidden = ad::relu(ad::linear(v_in, dmsa_.fc1.w, dmsa_.fc1.b));
    const Tensor v_total = ad::sigmoid(ad::linear(hidden, dmsa_.fc2.w, dmsa_.fc2.b));

    if (probe != nullptr) {
        ad::NoTape pause;
        probe->batch = batch;
        probe->channels = channels;
        probe->k = k;
        probe->v_total.assign(v_total.data().begin(), v_total.data().end());
        probe->branch_profile.assign(static_cast<size_t>(batch) * k, 0.0f);
        if (spectral.defined()) {
            // what-if attention: branch i alone feeding all three streams
            for (int i = 0; i < k; ++i) {
                std::vector<float> si(static_cast<size_t>(batch) * channels);
                for (int b = 0; b < batch; ++b) {
                    for (int c = 0; c < channels; ++c) {
                        si[static_cast<size_t>(b) * channels + c] =
                            static_cast<float>(spectral.data()[(static_cast<size_t>(b) * channels + c) * k + i] *
                                               3.0 * inv_k);
                    }
                }
                Tensor s_in = Tensor::from_data({batch, channels}, std::move(si), false);
                const Tensor att =
                    ad::sigmoid(ad::linear(ad::relu(ad::linear(s_in, dmsa_.fc1.w, dmsa_.fc1.b)),
                                           dmsa_.fc2.w, dmsa_.fc2.b));
                for (int b = 0; b < batch; ++b) {
                    double acc = 0.0;
                    for (int c = 0; c < channels; ++c) acc += att.data()[static_cast<size_t>(b) * channels + c];
                    probe->branch_profile[static_cast<size_t>(b) * k + i] =
                        static_cast<float>(acc / channels);
                }
            }
        }
    }

    return ad::mul_channel(f, v_total);
}

Tensor FsnetModel::decoder_forward(const Tensor& z2d, bool train) {
    const Tensor z = ad::avgpool_global(z2d);
    Tensor h = ad::relu(ad::batchnorm(ad::linear(z, decoder_.fc1.w, decoder_.fc1.b),
                                      decoder_.bn.gamma, decoder_.bn.beta, decoder_.bn.state, train));
    if (train && cfg_.dropout_p > 0.0) {
        h = ad::dropout(h, cfg_.dropout_p, true, dropout_rng_);
    }
    return ad::linear(h, decoder_.fc2.w, decoder_.fc2.b);
}

Tensor FsnetModel::forward(const Tensor& batch, bool train, DmsaProbe* probe) {
    if (batch.rank() != 4) throw ShapeError("forward: expected [B,3,H,W]");
    if (batch.dim(2) % cfg_.downsample_factor() != 0 || batch.dim(3) % cfg_.downsample_factor() != 0) {
        throw ShapeError("forward: spatial dims must be divisible by 2^stages");
    }
    const Tensor stem = aspm_forward(batch);
    const Tensor deep = backbone_forward(stem, train);
    const Tensor attended = dmsa_forward(deep, probe);
    return decoder_forward(attended, train);
}

float FsnetModel::train_step(AdamW& opt, const Tensor& batch, const std::vector<int>& labels) {
    ad::Tape tape;
    const Tensor logits = forward(batch, /*train=*/true);
    const Tensor loss = ad::cross_entropy_logits(logits, labels);
    tape.backward(loss);
    auto params = parameters();
    opt.step(params);
    AdamW::zero_grad(params);
    return loss.item();
}

namespace {

void append_bn(std::vector<CheckpointEntry>& out, const std::string& prefix, const BnLayer& bn) {
    out.push_back({prefix + ".running_mean", {static_cast<int>(bn.state.running_mean.size())},
                   bn.state.running_mean});
    out.push_back({prefix + ".running_var", {static_cast<int>(bn.state.running_var.size())},
                   bn.state.running_var});
}

}  // namespace

std::vector<CheckpointEntry> FsnetModel::checkpoint_entries() const {
    std::vector<CheckpointEntry> out;
    auto self = const_cast<FsnetModel*>(this);
    for (const ParamRef& p : self->parameters()) {
        out.push_back({p.name, p.tensor.shape(),
                       std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
    }
    if (!cfg_.learnable_gate) {
        out.push_back({"aspm.mask", aspm_.mask.shape(),
                       std::vector<float>(aspm_.mask.data().begin(), aspm_.mask.data().end())});
    }
    for (size_t s = 0; s < stages_.size(); ++s) {
        const std::string p = "stage" + std::to_string(s) + ".";
        append_bn(out, p + "bn", stages_[s].bn);
        for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
            const std::string q = p + "block" + std::to_string(b) + ".";
            append_bn(out, q + "bn1", stages_[s].blocks[b].bn1);
            append_bn(out, q + "bn2", stages_[s].blocks[b].bn2);
        }
    }
    append_bn(out, "head.bn", decoder_.bn);
    return out;
}

void FsnetModel::save(const std::string& path) const {
    save_checkpoint(path, nlohmann::json(cfg_), checkpoint_entries());
}

FsnetModel FsnetModel::load(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    FsnetModel model(ckpt.hyper.get<FsnetConfig>());

    auto fill = [&ckpt](const std::string& name, std::span<float> dst) {
        const CheckpointEntry& e = ckpt.find(name);
        if (e.data.size() != dst.size()) throw FormatError("checkpoint entry '" + name + "' has wrong size");
        std::copy(e.data.begin(), e.data.end(), dst.begin());
    };
    for (ParamRef& p : model.parameters()) {
        fill(p.name, p.tensor.data_mut());
    }
    if (!model.cfg_.learnable_gate) fill("aspm.mask", model.aspm_.mask.data_mut());
    auto fill_bn = [&fill](const std::string& prefix, BnLayer& bn) {
        fill(prefix + ".running_mean", bn.state.running_mean);
        fill(prefix + ".running_var", bn.state.running_var);
    };
    for (size_t s = 0; s < model.stages_.size(); ++s) {
        const std::string p = "stage" + std::to_string(s) + ".";
        fill_bn(p + "bn", model.stages_[s].bn);
        for (size_t b = 0; b < model.stages_[s].blocks.size(); ++b) {
            const std::string q = p + "block" + std::to_string(b) + ".";
            fill_bn(q + "bn1", model.stages_[s].blocks[b].bn1);
            fill_bn(q + "bn2", model.stages_[s].blocks[b].bn2);
        }
    }
    fill_bn("head.bn", model.decoder_.bn);
    return model;
}

Tensor image_to_tensor(const RasterImage& img) {
    std::vector<float> data(static_cast<size_t>(3) * img.height * img.width);
    const size_t hw = img.pixel_count();
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < hw; ++i) {
            data[c * hw + i] = static_cast<float>(img.samples[i * 3 + c]) / 255.0f;
        }
    }
    return Tensor::from_data({3, img.height, img.width}, std::move(data), false);
}

Tensor images_to_batch(const std::vector<RasterImage>& images) {
    if (images.empty()) throw ShapeError("images_to_batch: empty batch");
    const int h = images[0].height, w = images[0].width;
    std::vector<float> data(images.size() * 3 * static_cast<size_t>(h) * w);
    const size_t hw = static_cast<size_t>(h) * w;
    for (size_t b = 0; b < images.size(); ++b) {
        if (images[b].height != h || images[b].width != w) {
            throw ShapeError("images_to_batch: all images must share dimensions");
        }
        for (int c = 0; c < 3; ++c) {
            for (size_t i = 0; i < hw; ++i) {
                data[(b * 3 + c) * hw + i] = static_cast<float>(images[b].samples[i * 3 + c]) / 255.0f;
            }
        }
    }
    return Tensor::from_data({static_cast<int>(images.size()), 3, h, w}, std::move(data), false);
}

Prediction predict(FsnetModel& model, const RasterImage& img) {
    std::vector<RasterImage> one{img};
    return predict_batch(model, one, 1)[0];
}

std::vector<Prediction> predict_batch(FsnetModel& model, const std::vector<RasterImage>& images,
                                      int batch_size, std::vector<DmsaProbe>* probes) {
    const int s = model.config().input_size;
    std::vector<Prediction> out;
    out.reserve(images.size());
    for (size_t start = 0; start < images.size(); start += batch_size) {
        const size_t end = std::min(images.size(), start + batch_size);
        std::vector<RasterImage> chunk;
        chunk.reserve(end - start);
        for (size_t i = start; i < end; ++i) chunk.push_back(resize_bilinear(images[i], s, s));
        const Tensor batch = images_to_batch(chunk);
        DmsaProbe probe;
        const Tensor logits = model.forward(batch, /*train=*/false, probes ? &probe : nullptr);
        const std::vector<float> probs = ad::softmax_rows(logits);
        for (size_t i = 0; i < chunk.size(); ++i) {
            Prediction p;
            p.prob_clean = probs[i * 2 + 0];
            p.prob_watermarked = probs[i * 2 + 1];
            p.label = logits.data()[i * 2 + 1] > logits.data()[i * 2 + 0] ? 1 : 0;
            out.push_back(p);
        }
        if (probes != nullptr) {
            for (size_t i = 0; i < chunk.size(); ++i) {
                DmsaProbe per;
                per.batch = 1;
                per.channels = probe.channels;
                per.k = probe.k;
                per.v_total.assign(probe.v_total.begin() + i * probe.channels,
                                   probe.v_total.begin() + (i + 1) * probe.channels);
                per.branch_profile.assign(probe.branch_profile.begin() + i * probe.k,
                                          probe.branch_profile.begin() + (i + 1) * probe.k);
                probes->push_back(std::move(per));
            }
        }
    }
    return out;
}

}  // namespace fsw
