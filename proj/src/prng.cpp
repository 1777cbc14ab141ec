#include "fsw/prng.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "fsw/errors.hpp"

namespace fsw {

uint64_t DetRng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double DetRng::uniform_f64() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double DetRng::standard_normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform_f64();
    if (u1 == 0.0) u1 = 0x1.0p-53;  // keep log(u1) finite
    const double u2 = uniform_f64();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

uint64_t DetRng::next_below(uint64_t n) {
    return next_u64() % n;
}

std::vector<PixelPair> DetRng::sample_distinct_pixel_pairs(int height, int width, int n_pairs) {
    const uint64_t cells = static_cast<uint64_t>(height) * static_cast<uint64_t>(width);
    const uint64_t needed = 2ULL * static_cast<uint64_t>(n_pairs);
    if (needed > cells) {
        throw CapacityError("need " + std::to_string(needed) + " distinct pixels, image has " +
                            std::to_string(cells));
    }
    std::unordered_set<uint64_t> used;
    used.reserve(needed * 2);
    std::vector<PixelCoord> coords;
    coords.reserve(needed);
    while (coords.size() < needed) {
        const uint64_t idx = next_below(cells);
        if (used.insert(idx).second) {
            coords.push_back({static_cast<int>(idx / width), static_cast<int>(idx % width)});
        }
    }
    std::vector<PixelPair> pairs(n_pairs);
    for (int i = 0; i < n_pairs; ++i) pairs[i] = {coords[2 * i], coords[2 * i + 1]};
    return pairs;
}

uint64_t DetRng::derive_seed(uint64_t seed, uint64_t index) {
    DetRng mix(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    return mix.next_u64();
}

}  // namespace fsw
