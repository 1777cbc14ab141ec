#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace fsw {

// Flat binary parameter container:
//   bytes 0..7   magic "FSWCKPT1"
//   bytes 8..11  header length N (uint32, little-endian)
//   bytes 12..   header JSON (N bytes):
//                {"version":1, "hyper":{...},
//                 "params":[{"name":..,"dtype":"f32","shape":[..],"offset":..}, ...]}
//   then the blob: raw little-endian float32 data, offsets relative to blob
//   start, arrays stored in params[] order.
struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

void save_checkpoint(const std::string& path, const nlohmann::json& hyper,
                     const std::vector<CheckpointEntry>& entries);

struct Checkpoint {
    nlohmann::json hyper;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry& find(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace fsw
