#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace fsw {

struct PixelCoord {
    int y = 0;
    int x = 0;
    bool operator==(const PixelCoord&) const = default;
};

using PixelPair = std::pair<PixelCoord, PixelCoord>;

// Deterministic SplitMix64 stream. Identical seeds produce identical output
// sequences on every platform, which is what makes embedded watermarks,
// dataset shuffles and weight initialization reproducible bit-for-bit.
// A DetRng instance is single-consumer; give each concurrent task its own
// seeded instance.
class DetRng {
public:
    explicit DetRng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform_f64();

    // Standard normal via Box-Muller. The second value of each generated
    // pair is cached and returned by the next call.
    double standard_normal();

    // Uniform integer in [0, n). n must be >= 1.
    uint64_t next_below(uint64_t n);

    // Draws n_pairs pixel pairs on an H x W grid by rejection until all
    // 2*n_pairs coordinates of this call are distinct.
    // Throws CapacityError when 2*n_pairs > H*W.
    std::vector<PixelPair> sample_distinct_pixel_pairs(int height, int width, int n_pairs);

    // Derives an independent, deterministic child seed; used to give each
    // sample of a batch its own stream (seed, index) -> seed'.
    static uint64_t derive_seed(uint64_t seed, uint64_t index);

private:
    uint64_t state_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace fsw
