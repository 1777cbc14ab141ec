#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fsw/image.hpp"
#include "fsw/watermark.hpp"

#include "json.hpp"

namespace fsw {

struct SampleRecord {
    std::string id;
    std::string path;       // file name relative to the manifest directory
    int label = 0;          // 1 iff algorithm != "clean"
    std::string algorithm;  // embedder tag, or "clean"
    std::string family;     // carrier family tag
    std::string pool;       // algorithm fold this record is reserved for
    uint64_t seed = 0;      // per-sample stream; regenerates carrier + payload
};

void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);

struct GenerationRecipe {
    int image_size = 64;
    uint64_t seed = 1;
    // synthetic families: gradient, checker, blobs, noise; "dir:<path>" draws
    // carriers from a directory of PNGs
    std::vector<std::string> families = {"gradient", "checker", "blobs"};
    std::map<std::string, int> algorithms;  // embedder tag -> positive count
    double alpha = 15.0;
    int step = 5;
    int pairs_per_bit = 100;
};

void to_json(nlohmann::json& j, const GenerationRecipe& r);
void from_json(const nlohmann::json& j, GenerationRecipe& r);

struct DatasetManifest {
    int version = 1;
    GenerationRecipe recipe;
    std::vector<SampleRecord> records;
    std::string root;  // directory holding the sample files; not serialized

    std::set<std::string> algorithm_tags() const;
    const SampleRecord& find(const std::string& id) const;
    std::string resolve(const SampleRecord& r) const;
};

// Synthetic carrier generator; a given (family, size, seed) triple always
// produces the same image.
RasterImage make_carrier(const std::string& family, int size, uint64_t seed);

// Reconstructs the carrier a record was built on (loads and resizes the
// source PNG for dir-backed records).
RasterImage carrier_for_record(const DatasetManifest& manifest, const SampleRecord& r);

// Emits clean and watermarked PNGs plus manifest.json into out_dir.
// Positives and negatives are balanced 1:1 per algorithm; every byte is
// a deterministic function of the recipe.
DatasetManifest generate_dataset(const GenerationRecipe& recipe, const std::string& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Regenerates each record's carrier and checks: positives differ from their
// carrier, negatives equal theirs. Throws Error on the first violation.
void check_dataset_sanity(const DatasetManifest& manifest);

EmbedConfig embed_config_for(const GenerationRecipe& recipe, const std::string& algo, uint64_t seed);

}  // namespace fsw
