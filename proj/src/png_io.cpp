#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "fsw/errors.hpp"
#include "fsw/image.hpp"

// PNG container is handled here directly (chunk framing, filters); the
// DEFLATE layer is zlib's.

namespace fsw {

namespace {

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void write_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

void unfilter(std::vector<uint8_t>& raw, int height, int stride, int bpp) {
    // raw holds height rows of (1 filter byte + stride bytes); de-filtered in place.
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        const int filter = row[0];
        uint8_t* cur = row + 1;
        switch (filter) {
            case 0:
                break;
            case 1:
                for (int i = bpp; i < stride; ++i) cur[i] = uint8_t(cur[i] + cur[i - bpp]);
                break;
            case 2:
                for (int i = 0; i < stride; ++i) cur[i] = uint8_t(cur[i] + prev[i]);
                break;
            case 3:
                for (int i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    cur[i] = uint8_t(cur[i] + ((left + prev[i]) >> 1));
                }
                break;
            case 4:
                for (int i = 0; i < stride; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int upleft = i >= bpp ? prev[i - bpp] : 0;
                    cur[i] = uint8_t(cur[i] + paeth(left, prev[i], upleft));
                }
                break;
            default:
                throw FormatError("unknown PNG filter type " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, stride);
    }
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in, size_t expected_out) {
    std::vector<uint8_t> out(expected_out);
    uLongf out_len = out.size();
    const int rc = ::uncompress(out.data(), &out_len, in.data(), in.size());
    if (rc != Z_OK || out_len != expected_out) throw FormatError("PNG image data failed to decompress");
    return out;
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
    uLongf bound = compressBound(in.size());
    std::vector<uint8_t> out(bound);
    const int rc = ::compress2(out.data(), &bound, in.data(), in.size(), 6);
    if (rc != Z_OK) throw IoError("PNG image data failed to compress");
    out.resize(bound);
    return out;
}

}  // namespace

RasterImage load_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw IoError("file too short: " + path);
    if (std::memcmp(bytes.data(), kSignature, 8) != 0) throw FormatError("not a PNG file: " + path);

    uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    bool saw_ihdr = false, saw_iend = false;
    std::vector<uint8_t> idat;

    size_t pos = 8;
    while (pos < bytes.size()) {
        if (pos + 8 > bytes.size()) throw IoError("truncated PNG chunk header: " + path);
        const uint32_t len = read_be32(&bytes[pos]);
        char type[5] = {};
        std::memcpy(type, &bytes[pos + 4], 4);
        if (pos + 12 + static_cast<size_t>(len) > bytes.size()) throw IoError("truncated PNG chunk: " + path);
        const uint8_t* data = &bytes[pos + 8];
        const uint32_t stored_crc = read_be32(&bytes[pos + 8 + len]);
        uint32_t crc = ::crc32(0, &bytes[pos + 4], len + 4);
        if (crc != stored_crc) throw FormatError("PNG chunk CRC mismatch: " + path);

        if (std::strcmp(type, "IHDR") == 0) {
            if (len != 13) throw FormatError("bad IHDR length");
            width = read_be32(data);
            height = read_be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[10] != 0 || data[11] != 0) throw FormatError("unsupported PNG compression/filter method");
            if (data[12] != 0) throw FormatError("interlaced PNG not supported");
            saw_ihdr = true;
        } else if (std::strcmp(type, "IDAT") == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::strcmp(type, "IEND") == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) throw IoError("incomplete PNG stream: " + path);
    if (width == 0 || height == 0) throw FormatError("zero-sized PNG");
    if (bit_depth != 8) throw FormatError("only 8-bit PNGs are supported (got depth " + std::to_string(bit_depth) + ")");

    int src_channels = 0;
    switch (color_type) {
        case 0: src_channels = 1; break;
        case 2: src_channels = 3; break;
        case 4: src_channels = 2; break;
        case 6: src_channels = 4; break;
        case 3: throw FormatError("palette PNGs are not supported");
        default: throw FormatError("unsupported PNG color type " + std::to_string(color_type));
    }

    const int stride = static_cast<int>(width) * src_channels;
    const size_t raw_size = static_cast<size_t>(height) * (stride + 1);
    std::vector<uint8_t> raw = zlib_inflate(idat, raw_size);
    unfilter(raw, static_cast<int>(height), stride, src_channels);

    if (src_channels == 2 || src_channels == 4) {
        std::fprintf(stderr, "warning: %s has an alpha channel; stripping it\n", path.c_str());
    }

    RasterImage img;
    img.height = static_cast<int>(height);
    img.width = static_cast<int>(width);
    img.space = ColorSpace::RGB;
    img.samples.resize(static_cast<size_t>(height) * width * 3);
    for (uint32_t y = 0; y < height; ++y) {
        const uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        for (uint32_t x = 0; x < width; ++x) {
            const uint8_t* px = row + static_cast<size_t>(x) * src_channels;
            uint8_t r, g, b;
            if (src_channels <= 2) {
                r = g = b = px[0];
            } else {
                r = px[0];
                g = px[1];
                b = px[2];
            }
            uint8_t* dst = &img.samples[(static_cast<size_t>(y) * width + x) * 3];
            dst[0] = r;
            dst[1] = g;
            dst[2] = b;
        }
    }
    return img;
}

void save_png(const RasterImage& img, const std::string& path) {
    if (img.space != ColorSpace::RGB) throw SpaceError("save_png expects an RGB image");
    if (img.height < 1 || img.width < 1) throw ShapeError("save_png: empty image");
    if (img.samples.size() != img.pixel_count() * 3) throw ShapeError("save_png: sample buffer size mismatch");

    const int stride = img.width * 3;
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (stride + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: None
        const uint8_t* row = &img.samples[static_cast<size_t>(y) * stride];
        raw.insert(raw.end(), row, row + stride);
    }
    const std::vector<uint8_t> compressed = zlib_deflate(raw);

    std::vector<uint8_t> out;
    out.insert(out.end(), kSignature, kSignature + 8);

    auto emit_chunk = [&out](const char* type, const std::vector<uint8_t>& data) {
        write_be32(out, static_cast<uint32_t>(data.size()));
        const size_t type_pos = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), data.begin(), data.end());
        const uint32_t crc = ::crc32(0, &out[type_pos], static_cast<uInt>(4 + data.size()));
        write_be32(out, crc);
    };

    std::vector<uint8_t> ihdr;
    write_be32(ihdr, static_cast<uint32_t>(img.width));
    write_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    emit_chunk("IHDR", ihdr);
    emit_chunk("IDAT", compressed);
    emit_chunk("IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

}  // namespace fsw
