#include "fsw/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fsw/errors.hpp"

namespace fsw {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'W', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& hyper,
                     const std::vector<CheckpointEntry>& entries) {
    nlohmann::json params = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& e : entries) {
        int64_t n = 1;
        for (int d : e.shape) n *= d;
        if (n != static_cast<int64_t>(e.data.size())) {
            throw ShapeError("checkpoint entry '" + e.name + "' shape/data mismatch");
        }
        params.push_back({{"name", e.name}, {"dtype", "f32"}, {"shape", e.shape}, {"offset", offset}});
        offset += e.data.size() * sizeof(float);
    }
    const nlohmann::json header = {{"version", 1}, {"hyper", hyper}, {"params", params}};
    const std::string header_str = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(kMagic, 8);
    const uint32_t len = static_cast<uint32_t>(header_str.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& e : entries) {
        f.write(reinterpret_cast<const char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    }
    if (!f) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint file: " + path);
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string header_str(len, '\0');
    f.read(header_str.data(), len);
    if (!f) throw IoError("truncated checkpoint header: " + path);

    nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
    if (header.is_discarded() || header.value("version", 0) != 1) {
        throw FormatError("unsupported checkpoint header: " + path);
    }
    Checkpoint ckpt;
    ckpt.hyper = header.value("hyper", nlohmann::json::object());
    for (const auto& p : header.at("params")) {
        CheckpointEntry e;
        e.name = p.at("name").get<std::string>();
        e.shape = p.at("shape").get<std::vector<int>>();
        if (p.value("dtype", "f32") != "f32") throw FormatError("unsupported dtype in " + path);
        int64_t n = 1;
        for (int d : e.shape) n *= d;
        e.data.resize(static_cast<size_t>(n));
        ckpt.entries.push_back(std::move(e));
    }
    for (auto& e : ckpt.entries) {
        f.read(reinterpret_cast<char*>(e.data.data()),
               static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    }
    if (!f) throw IoError("truncated checkpoint blob: " + path);
    return ckpt;
}

const CheckpointEntry& Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw FormatError("checkpoint has no entry named '" + name + "'");
}

}  // namespace fsw
