#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "fsw/autodiff.hpp"
#include "fsw/checkpoint.hpp"
#include "fsw/image.hpp"
#include "fsw/optim.hpp"

#include "json.hpp"

namespace fsw {

struct FsnetConfig {
    int input_size = 64;
    int c_stem = 16;
    std::vector<int> stage_channels = {16, 32, 64};
    int blocks_per_stage = 1;
    int mask_grid = 32;   // learnable spectral gate resolution
    int dmsa_k = 16;      // frequency branches
    int dmsa_reduction = 4;
    int dmsa_basis = 8;   // reference grid the branch bases are generated on
    double dropout_p = 0.3;

    // component switches (feature removals for ablations) and the documented
    // alternate readings of the residual/pooling definitions
    bool learnable_gate = true;
    bool fusion_maxpool = true;
    bool dmsa_multi_branch = true;
    bool dmsa_tri_stream = true;
    bool aspm_residual_subtract = false;
    bool dmsa_spatial_extrema = false;

    uint64_t init_seed = 1;

    int downsample_factor() const { return 1 << static_cast<int>(stage_channels.size()); }
    void validate() const;
};

void to_json(nlohmann::json& j, const FsnetConfig& cfg);
void from_json(const nlohmann::json& j, FsnetConfig& cfg);

struct ConvLayer {
    ad::Tensor w, b;
};

struct LinearLayer {
    ad::Tensor w, b;
};

struct BnLayer {
    ad::Tensor gamma, beta;
    ad::BatchNormState state{1};
};

struct ResBlock {
    ConvLayer conv1, conv2;
    BnLayer bn1, bn2;
};

struct Stage {
    ConvLayer proj;
    BnLayer bn;
    std::vector<ResBlock> blocks;
};

struct AspmState {
    ad::Tensor mask;  // [grid, grid], all-pass (ones) at init
    ConvLayer conv;   // 3 -> c_stem fusion conv
};

struct DmsaState {
    std::vector<std::pair<int, int>> freqs;  // K distinct (u,v) pairs
    LinearLayer fc1, fc2;                    // C -> C/r -> C
    // interpolated basis matrices per feature size, shared across copies
    std::shared_ptr<std::mutex> cache_mu = std::make_shared<std::mutex>();
    std::shared_ptr<std::map<std::pair<int, int>, ad::Tensor>> basis_cache =
        std::make_shared<std::map<std::pair<int, int>, ad::Tensor>>();
};

struct DecoderState {
    LinearLayer fc1, fc2;
    BnLayer bn;
};

// Attention internals captured during a forward pass for inspection.
struct DmsaProbe {
    int batch = 0, channels = 0, k = 0;
    std::vector<float> v_total;         // [B, C] channel attention in (0,1)
    std::vector<float> branch_profile;  // [B, K] per-branch what-if attention, channel-averaged
};

struct Prediction {
    int label = 0;
    float prob_clean = 0.0f;
    float prob_watermarked = 0.0f;
};

class FsnetModel {
public:
    explicit FsnetModel(FsnetConfig cfg);

    const FsnetConfig& config() const { return cfg_; }
    const AspmState& aspm() const { return aspm_; }
    AspmState& aspm() { return aspm_; }
    const std::vector<Stage>& stages() const { return stages_; }
    const DmsaState& dmsa() const { return dmsa_; }
    const DecoderState& decoder() const { return decoder_; }

    // Learnable parameters in a stable order (the fixed mask is excluded when
    // the gate is frozen).
    std::vector<ParamRef> parameters();

    ad::Tensor aspm_forward(const ad::Tensor& x);  // [B,3,H,W] -> [B,c_stem,H,W]
    ad::Tensor backbone_forward(const ad::Tensor& x, bool train);
    ad::Tensor dmsa_forward(const ad::Tensor& f, DmsaProbe* probe = nullptr);
    ad::Tensor decoder_forward(const ad::Tensor& z2d, bool train);
    ad::Tensor forward(const ad::Tensor& batch, bool train, DmsaProbe* probe = nullptr);

    // forward (train) -> cross-entropy -> backward -> AdamW step -> zero
    // grads; returns the pre-step loss.
    float train_step(AdamW& opt, const ad::Tensor& batch, const std::vector<int>& labels);

    std::vector<CheckpointEntry> checkpoint_entries() const;
    void save(const std::string& path) const;
    static FsnetModel load(const std::string& path);

    DetRng& dropout_rng() { return dropout_rng_; }

private:
    ad::Tensor dmsa_basis_matrix(int h, int w);  // [h*w, K], constant

    FsnetConfig cfg_;
    AspmState aspm_;
    std::vector<Stage> stages_;
    DmsaState dmsa_;
    DecoderState decoder_;
    DetRng dropout_rng_;
};

// [3,H,W] float tensor normalized to [0,1]; planar from interleaved samples.
ad::Tensor image_to_tensor(const RasterImage& img);
ad::Tensor images_to_batch(const std::vector<RasterImage>& images);

// Resizes to the configured input size, normalizes, runs an eval-mode
// forward and takes the argmax with its softmax probabilities.
Prediction predict(FsnetModel& model, const RasterImage& img);
std::vector<Prediction> predict_batch(FsnetModel& model, const std::vector<RasterImage>& images,
                                      int batch_size = 64, std::vector<DmsaProbe>* probes = nullptr);

}  // namespace fsw
