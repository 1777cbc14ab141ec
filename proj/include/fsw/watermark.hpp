#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fsw/image.hpp"
#include "fsw/prng.hpp"

#include "json.hpp"

namespace fsw {

// The 32-bit embedded message.
struct Payload32 {
    std::array<uint8_t, 32> bits{};  // each 0 or 1

    static Payload32 from_string(const std::string& s);  // exactly 32 chars of '0'/'1'
    static Payload32 random(DetRng& rng);
    std::string to_string() const;
    bool operator==(const Payload32&) const = default;
};

enum class WatermarkAlgo { LSB, Patchwork, DCT, DWT };

WatermarkAlgo algo_from_string(const std::string& name);
const char* to_string(WatermarkAlgo algo);

struct EmbedConfig {
    WatermarkAlgo algorithm = WatermarkAlgo::DCT;
    uint64_t seed = 0;
    // Patchwork
    int pairs_per_bit = 100;
    int step = 5;  // luminance shift d
    // DCT / DWT
    double alpha = 15.0;
    int dwt_levels = 2;
    std::string dwt_subband = "HL";

    void validate() const;  // alpha >= 0, step >= 0, pairs_per_bit >= 1
};

void to_json(nlohmann::json& j, const EmbedConfig& cfg);
void from_json(const nlohmann::json& j, EmbedConfig& cfg);

// Dispatcher. Requires an RGB carrier of at least 64x64 (smaller carriers
// cannot hold the configured watermarks; reported as CapacityError).
// Deterministic: a pure function of (cfg, carrier, payload).
RasterImage embed(const EmbedConfig& cfg, const RasterImage& carrier, const Payload32& m);

// B-channel LSB replacement, payload tiled cyclically over all pixels in
// row-major order. R and G are never touched; per-pixel |delta B| <= 1.
RasterImage embed_lsb(const RasterImage& carrier, const Payload32& m);

// Verification oracle: reads the payload back from the first 32 pixels.
Payload32 decode_lsb(const RasterImage& img);

// Statistical pixel-pair embedding: per bit, pairs_per_bit pixel pairs get
// +step/-step B-channel shifts (bit 1: first pixel up, second down; bit 0
// reversed), clamped to [0,255]. All pairs of one embedding are drawn in a
// single distinct-coordinate sampling pass from DetRng(seed), so no pixel is
// shifted twice and residual magnitudes stay within [1, step].
RasterImage embed_patchwork(const RasterImage& carrier, const Payload32& m, const EmbedConfig& cfg);

// Detection oracle: per bit, mean(B over the bit's first pixels) minus
// mean(B over its second pixels), using the same seeded pairs. On a
// watermarked flat carrier this is +2*step for bit 1 and -2*step for bit 0.
std::vector<double> patchwork_statistic(const RasterImage& img, const EmbedConfig& cfg);

// Spread-spectrum composite pattern for the DCT embedder: 32 seeded standard
// normal patterns over all H x W coefficients, combined bipolarly
// (2*m_k - 1), averaged over the 32 patterns, and forced to 0 at the DC
// coefficient. Not yet scaled by alpha.
Plane dct_spread_pattern(uint64_t seed, const Payload32& m, int height, int width);

// Same construction sized for the deepest HL sub-band, normalized to unit
// per-coefficient variance (divided by sqrt(32)).
Plane dwt_spread_pattern(uint64_t seed, const Payload32& m, int height, int width);

// Float-plane embedding cores (no quantization); the RasterImage embedders
// wrap these with the YUV round trip. Exposed so spectra can be inspected
// before the final clamp/round.
Plane dct_embed_y(const Plane& y, const Payload32& m, const EmbedConfig& cfg);
Plane dwt_embed_y(const Plane& y, const Payload32& m, const EmbedConfig& cfg);

// Global 2D DCT spread-spectrum watermark on the Y channel; the DC
// coefficient is never modified.
RasterImage embed_dct(const RasterImage& carrier, const Payload32& m, const EmbedConfig& cfg);

// Two-level Haar watermark: the seeded pattern is added to the deepest HL
// sub-band of the Y channel with strength alpha.
RasterImage embed_dwt(const RasterImage& carrier, const Payload32& m, const EmbedConfig& cfg);

}  // namespace fsw
