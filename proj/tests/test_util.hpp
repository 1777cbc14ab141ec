#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>

#include "fsw/image.hpp"
#include "fsw/prng.hpp"

namespace fswtest {

inline fsw::RasterImage random_rgb(fsw::DetRng& rng, int h, int w) {
    fsw::RasterImage img = fsw::RasterImage::filled(h, w, 0);
    for (auto& s : img.samples) s = static_cast<uint8_t>(rng.next_u64() & 0xFF);
    return img;
}

// Mid-gray carrier with mild Gaussian texture, kept away from the clamp
// boundaries; the statistical embedder oracles assume no saturation.
inline fsw::RasterImage noise_carrier(fsw::DetRng& rng, int h, int w, double sigma = 16.0) {
    fsw::RasterImage img = fsw::RasterImage::filled(h, w, 128);
    for (size_t i = 0; i < img.pixel_count(); ++i) {
        const double v = 128.0 + sigma * rng.standard_normal();
        const uint8_t b = static_cast<uint8_t>(std::clamp(v, 30.0, 225.0));
        img.samples[i * 3 + 0] = b;
        img.samples[i * 3 + 1] = b;
        img.samples[i * 3 + 2] = b;
    }
    return img;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("fsw_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string dir() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

}  // namespace fswtest
