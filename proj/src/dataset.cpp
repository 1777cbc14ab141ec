#include "fsw/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fsw/errors.hpp"
#include "fsw/prng.hpp"

namespace fsw {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const SampleRecord& r) {
    j = nlohmann::json{{"id", r.id},     {"path", r.path},     {"label", r.label},
                       {"algo", r.algorithm}, {"family", r.family}, {"pool", r.pool},
                       {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, SampleRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.label = j.at("label").get<int>();
    r.algorithm = j.at("algo").get<std::string>();
    r.family = j.at("family").get<std::string>();
    r.pool = j.at("pool").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
}

void to_json(nlohmann::json& j, const GenerationRecipe& r) {
    j = nlohmann::json{{"image_size", r.image_size}, {"seed", r.seed},   {"families", r.families},
                       {"algorithms", r.algorithms}, {"alpha", r.alpha}, {"d", r.step},
                       {"pairs_per_bit", r.pairs_per_bit}};
}

void from_json(const nlohmann::json& j, GenerationRecipe& r) {
    r = GenerationRecipe{};
    nlohmann::json defaults = r;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("unknown recipe key: " + it.key());
    }
    r.image_size = j.value("image_size", r.image_size);
    r.seed = j.value("seed", r.seed);
    r.families = j.value("families", r.families);
    if (j.contains("algorithms")) r.algorithms = j.at("algorithms").get<std::map<std::string, int>>();
    r.alpha = j.value("alpha", r.alpha);
    r.step = j.value("d", r.step);
    r.pairs_per_bit = j.value("pairs_per_bit", r.pairs_per_bit);
    if (r.image_size < 8) throw ConfigError("image_size must be >= 8");
    if (r.families.empty()) throw ConfigError("at least one carrier family is required");
    for (const auto& [algo, count] : r.algorithms) {
        (void)algo_from_string(algo);
        if (count < 1) throw ConfigError("per-algorithm counts must be >= 1");
    }
}

std::set<std::string> DatasetManifest::algorithm_tags() const {
    std::set<std::string> tags;
    for (const auto& r : records) {
        if (r.label == 1) tags.insert(r.algorithm);
    }
    return tags;
}

const SampleRecord& DatasetManifest::find(const std::string& id) const {
    for (const auto& r : records) {
        if (r.id == id) return r;
    }
    throw ConfigError("manifest has no record with id " + id);
}

std::string DatasetManifest::resolve(const SampleRecord& r) const {
    if (root.empty()) return r.path;
    return (fs::path(root) / r.path).string();
}

namespace {

RasterImage gradient_carrier(int size, DetRng& rng) {
    RasterImage img = RasterImage::filled(size, size, 0);
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = 40.0 + 175.0 * rng.uniform_f64();
        gx[c] = -80.0 + 160.0 * rng.uniform_f64();
        gy[c] = -80.0 + 160.0 * rng.uniform_f64();
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = base[c] + gx[c] * x / size + gy[c] * y / size;
                img.at(y, x, c) = clamp_round_u8(v);
            }
        }
    }
    return img;
}

RasterImage checker_carrier(int size, DetRng& rng) {
    static constexpr int kCells[] = {4, 8, 16};
    const int cell = kCells[rng.next_below(3)];
    const int phase_x = static_cast<int>(rng.next_below(cell));
    const int phase_y = static_cast<int>(rng.next_below(cell));
    uint8_t c1[3], c2[3];
    for (int c = 0; c < 3; ++c) {
        c1[c] = static_cast<uint8_t>(30 + rng.next_below(80));
        c2[c] = static_cast<uint8_t>(140 + rng.next_below(80));
    }
    RasterImage img = RasterImage::filled(size, size, 0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const bool odd = (((x + phase_x) / cell) + ((y + phase_y) / cell)) % 2 == 1;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = odd ? c2[c] : c1[c];
        }
    }
    return img;
}

RasterImage blobs_carrier(int size, DetRng& rng) {
    // two-octave value noise plus a per-channel tint
    const int grid1 = 5 + static_cast<int>(rng.next_below(4));
    Plane coarse(grid1, grid1);
    for (auto& v : coarse.values) v = static_cast<float>(40.0 + 175.0 * rng.uniform_f64());
    const int grid2 = grid1 * 2;
    Plane fine(grid2, grid2);
    for (auto& v : fine.values) v = static_cast<float>(-40.0 + 80.0 * rng.uniform_f64());
    double tint[3];
    for (int c = 0; c < 3; ++c) tint[c] = -25.0 + 50.0 * rng.uniform_f64();

    const Plane field1 = resize_bilinear(coarse, size, size);
    const Plane field2 = resize_bilinear(fine, size, size);
    RasterImage img = RasterImage::filled(size, size, 0);
    for (size_t i = 0; i < img.pixel_count(); ++i) {
        const double l = field1.values[i] + field2.values[i];
        for (int c = 0; c < 3; ++c) img.samples[i * 3 + c] = clamp_round_u8(l + tint[c]);
    }
    return img;
}

RasterImage noise_carrier(int size, DetRng& rng) {
    RasterImage img = RasterImage::filled(size, size, 0);
    for (auto& s : img.samples) s = static_cast<uint8_t>(rng.next_u64() & 0xFF);
    return img;
}

std::vector<std::string> list_pngs(const std::string& dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw IoError("carrier directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no PNGs in carrier directory " + dir);
    return files;
}

}  // namespace

RasterImage make_carrier(const std::string& family, int size, uint64_t seed) {
    DetRng rng(seed);
    if (family == "gradient") return gradient_carrier(size, rng);
    if (family == "checker") return checker_carrier(size, rng);
    if (family == "blobs") return blobs_carrier(size, rng);
    if (family == "noise") return noise_carrier(size, rng);
    if (family.rfind("file:", 0) == 0) {
        return resize_bilinear(load_png(family.substr(5)), size, size);
    }
    throw ConfigError("unknown carrier family: " + family);
}

RasterImage carrier_for_record(const DatasetManifest& manifest, const SampleRecord& r) {
    return make_carrier(r.family, manifest.recipe.image_size, DetRng::derive_seed(r.seed, 0));
}

EmbedConfig embed_config_for(const GenerationRecipe& recipe, const std::string& algo, uint64_t seed) {
    EmbedConfig cfg;
    cfg.algorithm = algo_from_string(algo);
    cfg.seed = seed;
    cfg.alpha = recipe.alpha;
    cfg.step = recipe.step;
    cfg.pairs_per_bit = recipe.pairs_per_bit;
    return cfg;
}

DatasetManifest generate_dataset(const GenerationRecipe& recipe, const std::string& out_dir) {
    if (recipe.algorithms.empty()) throw ConfigError("recipe names no algorithms");
    fs::create_directories(out_dir);

    // expand dir: families into concrete file-backed entries
    std::vector<std::string> families;
    for (const std::string& f : recipe.families) {
        if (f.rfind("dir:", 0) == 0) {
            for (const std::string& png : list_pngs(f.substr(4))) families.push_back("file:" + png);
        } else {
            (void)make_carrier(f, 8, 0);  // validates the tag
            families.push_back(f);
        }
    }

    DatasetManifest manifest;
    manifest.recipe = recipe;
    manifest.root = out_dir;

    uint64_t sample_index = 0;
    auto next_sample_seed = [&recipe, &sample_index] {
        return DetRng::derive_seed(recipe.seed, sample_index++);
    };

    for (const auto& [algo, count] : recipe.algorithms) {  // std::map: sorted, stable order
        for (int i = 0; i < count; ++i) {
            // positive: carrier + payload + embedding, all from the record seed
            SampleRecord pos;
            pos.seed = next_sample_seed();
            pos.id = algo + "_" + std::to_string(i);
            pos.path = pos.id + ".png";
            pos.label = 1;
            pos.algorithm = algo;
            pos.pool = algo;
            pos.family = families[DetRng::derive_seed(pos.seed, 2) % families.size()];
            const RasterImage carrier =
                make_carrier(pos.family, recipe.image_size, DetRng::derive_seed(pos.seed, 0));
            DetRng payload_rng(DetRng::derive_seed(pos.seed, 3));
            const Payload32 payload = Payload32::random(payload_rng);
            const EmbedConfig cfg = embed_config_for(recipe, algo, DetRng::derive_seed(pos.seed, 1));
            const RasterImage watermarked = embed(cfg, carrier, payload);
            save_png(watermarked, (fs::path(out_dir) / pos.path).string());
            manifest.records.push_back(std::move(pos));

            // matched negative reserved for this algorithm's pool
            SampleRecord neg;
            neg.seed = next_sample_seed();
            neg.id = "clean_" + algo + "_" + std::to_string(i);
            neg.path = neg.id + ".png";
            neg.label = 0;
            neg.algorithm = "clean";
            neg.pool = algo;
            neg.family = families[DetRng::derive_seed(neg.seed, 2) % families.size()];
            const RasterImage clean =
                make_carrier(neg.family, recipe.image_size, DetRng::derive_seed(neg.seed, 0));
            save_png(clean, (fs::path(out_dir) / neg.path).string());
            manifest.records.push_back(std::move(neg));
        }
    }

    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    nlohmann::json j = {{"version", manifest.version},
                        {"recipe", manifest.recipe},
                        {"records", manifest.records}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest " + path);
    f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw FormatError("manifest is not valid JSON: " + path);
    DatasetManifest manifest;
    manifest.version = j.value("version", 1);
    manifest.recipe = j.at("recipe").get<GenerationRecipe>();
    manifest.records = j.at("records").get<std::vector<SampleRecord>>();
    manifest.root = fs::path(path).parent_path().string();
    return manifest;
}

void check_dataset_sanity(const DatasetManifest& manifest) {
    for (const auto& r : manifest.records) {
        const RasterImage actual = load_png(manifest.resolve(r));
        const RasterImage carrier = carrier_for_record(manifest, r);
        const bool differs = actual.samples != carrier.samples;
        if (r.label == 1 && !differs) {
            throw Error("positive sample " + r.id + " is identical to its carrier");
        }
        if (r.label == 0 && differs) {
            throw Error("negative sample " + r.id + " differs from its carrier");
        }
    }
}

}  // namespace fsw
