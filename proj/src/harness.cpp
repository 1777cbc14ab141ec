#include "fsw/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "fsw/errors.hpp"
#include "fsw/residual.hpp"

namespace fsw {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const SplitPlan& p) {
    j = nlohmann::json{{"held_out", p.held_out}, {"train_ids", p.train_ids}, {"test_ids", p.test_ids}};
}

void from_json(const nlohmann::json& j, SplitPlan& p) {
    p.held_out = j.at("held_out").get<std::string>();
    p.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    p.test_ids = j.at("test_ids").get<std::vector<std::string>>();
}

void save_split(const SplitPlan& plan, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write split plan " + path);
    f << nlohmann::json(plan).dump(2) << "\n";
}

SplitPlan load_split(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open split plan " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw FormatError("split plan is not valid JSON: " + path);
    return j.get<SplitPlan>();
}

namespace {

uint64_t mix_tag(uint64_t seed, const std::string& tag) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return DetRng::derive_seed(seed, h);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, DetRng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.next_below(i)]);
    }
}

// negatives are drawn from the pool by seeded shuffle, then trimmed to the
// positive count so both folds stay exactly 1:1
std::vector<std::string> draw_negatives(std::vector<std::string> pool, size_t want, uint64_t seed,
                                        const std::string& tag) {
    if (pool.size() < want) {
        throw ConfigError("clean pool for '" + tag + "' has " + std::to_string(pool.size()) +
                          " samples, need " + std::to_string(want));
    }
    if (pool.size() > want) {
        DetRng rng(mix_tag(seed, tag));
        seeded_shuffle(pool, rng);
        pool.resize(want);
        std::sort(pool.begin(), pool.end());
    }
    return pool;
}

}  // namespace

SplitPlan make_loao_split(const DatasetManifest& manifest, const std::string& held_out) {
    const auto tags = manifest.algorithm_tags();
    if (!tags.contains(held_out)) throw UnknownAlgorithm(held_out);

    std::map<std::string, std::vector<std::string>> pos_by_pool, neg_by_pool;
    for (const auto& r : manifest.records) {
        (r.label == 1 ? pos_by_pool : neg_by_pool)[r.pool].push_back(r.id);
    }

    SplitPlan plan;
    plan.held_out = held_out;
    for (const auto& [pool, positives] : pos_by_pool) {
        const auto negatives =
            draw_negatives(neg_by_pool[pool], positives.size(), manifest.recipe.seed, pool);
        auto& ids = pool == held_out ? plan.test_ids : plan.train_ids;
        ids.insert(ids.end(), positives.begin(), positives.end());
        ids.insert(ids.end(), negatives.begin(), negatives.end());
    }
    return plan;
}

SplitPlan subsample_fraction(const DatasetManifest& manifest, const SplitPlan& plan, double fraction,
                             uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must be in (0,1]");
    if (fraction == 1.0) return plan;

    // strata keyed by (label, pool); order within a stratum follows the plan
    std::map<std::pair<int, std::string>, std::vector<std::string>> strata;
    for (const auto& id : plan.train_ids) {
        const SampleRecord& r = manifest.find(id);
        strata[{r.label, r.pool}].push_back(id);
    }
    SplitPlan reduced;
    reduced.held_out = plan.held_out;
    reduced.test_ids = plan.test_ids;
    size_t stratum_index = 0;
    for (auto& [key, ids] : strata) {
        const size_t keep = std::max<size_t>(1, static_cast<size_t>(fraction * ids.size()));
        std::vector<size_t> order(ids.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        DetRng rng(DetRng::derive_seed(seed, stratum_index++));
        seeded_shuffle(order, rng);
        order.resize(keep);
        std::sort(order.begin(), order.end());
        for (size_t i : order) reduced.train_ids.push_back(ids[i]);
    }
    return reduced;
}

DatasetManifest ablate_algorithms(const DatasetManifest& manifest, const std::set<std::string>& removed) {
    const auto tags = manifest.algorithm_tags();
    for (const auto& tag : removed) {
        if (!tags.contains(tag)) throw UnknownAlgorithm(tag);
    }
    DatasetManifest view = manifest;
    view.records.clear();
    bool any_positive = false;
    for (const auto& r : manifest.records) {
        if (removed.contains(r.pool)) continue;
        any_positive |= r.label == 1;
        view.records.push_back(r);
    }
    if (!any_positive) throw EmptyTrainSet("removing " + std::to_string(removed.size()) +
                                           " algorithms leaves no positives");
    return view;
}

EvalReport report_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
    EvalReport r;
    r.tp = tp;
    r.fp = fp;
    r.tn = tn;
    r.fn = fn;
    const int64_t total = tp + fp + tn + fn;
    r.accuracy = total > 0 ? double(tp + tn) / double(total) : 0.0;
    r.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json{{"tp", r.tp},           {"fp", r.fp},             {"tn", r.tn},
                       {"fn", r.fn},           {"accuracy", r.accuracy}, {"precision", r.precision},
                       {"recall", r.recall},   {"f1", r.f1}};
}

void TrainOptions::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch statistics)");
    if (optimizer.lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (crop_fraction < 0.0 || crop_fraction >= 1.0) throw ConfigError("crop_fraction must be in [0,1)");
    if (requantize_levels != 0 && requantize_levels < 2) throw ConfigError("requantize_levels must be 0 or >= 2");
}

void to_json(nlohmann::json& j, const TrainOptions& o) {
    j = nlohmann::json{{"epochs", o.epochs},
                       {"batch_size", o.batch_size},
                       {"seed", o.seed},
                       {"lr", o.optimizer.lr},
                       {"weight_decay", o.optimizer.weight_decay},
                       {"crop_fraction", o.crop_fraction},
                       {"requantize_levels", o.requantize_levels}};
}

void from_json(const nlohmann::json& j, TrainOptions& o) {
    o = TrainOptions{};
    nlohmann::json defaults = o;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!defaults.contains(it.key())) throw ConfigError("unknown train option: " + it.key());
    }
    o.epochs = j.value("epochs", o.epochs);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.seed = j.value("seed", o.seed);
    o.optimizer.lr = j.value("lr", o.optimizer.lr);
    o.optimizer.weight_decay = j.value("weight_decay", o.optimizer.weight_decay);
    o.crop_fraction = j.value("crop_fraction", o.crop_fraction);
    o.requantize_levels = j.value("requantize_levels", o.requantize_levels);
    o.validate();
}

namespace {

RasterImage augment_sample(const RasterImage& img, const TrainOptions& options, uint64_t seed) {
    RasterImage out = img;
    DetRng rng(seed);
    if (options.crop_fraction > 0.0) {
        const int side = std::max(8, static_cast<int>(std::lround(options.crop_fraction * img.height)));
        if (side < img.height) {
            const int oy = static_cast<int>(rng.next_below(img.height - side + 1));
            const int ox = static_cast<int>(rng.next_below(img.width - side + 1));
            RasterImage crop = RasterImage::filled(side, side, 0);
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    for (int c = 0; c < 3; ++c) crop.at(y, x, c) = out.at(oy + y, ox + x, c);
                }
            }
            out = resize_bilinear(crop, img.height, img.width);
        }
    }
    if (options.requantize_levels >= 2) {
        const double levels = options.requantize_levels - 1.0;
        for (auto& s : out.samples) {
            s = static_cast<uint8_t>(std::lround(std::lround(s * levels / 255.0) * 255.0 / levels));
        }
    }
    return out;
}

}  // namespace

FsnetModel run_training(const DatasetManifest& manifest, const SplitPlan& plan,
                        const FsnetConfig& model_cfg, const TrainOptions& options,
                        const std::string& out_dir, TrainResult* result) {
    options.validate();
    model_cfg.validate();
    if (plan.train_ids.empty()) throw EmptyTrainSet("split plan has no training ids");

    const int s = model_cfg.input_size;
    std::vector<RasterImage> images;
    std::vector<int> labels;
    images.reserve(plan.train_ids.size());
    for (const auto& id : plan.train_ids) {
        const SampleRecord& r = manifest.find(id);
        images.push_back(resize_bilinear(load_png(manifest.resolve(r)), s, s));
        labels.push_back(r.label);
    }

    FsnetModel model(model_cfg);
    AdamW opt(options.optimizer);
    const size_t n = images.size();
    const bool augmented = options.crop_fraction > 0.0 || options.requantize_levels >= 2;

    std::vector<double> losses;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        DetRng shuffle_rng(DetRng::derive_seed(options.seed, 1000 + epoch));
        seeded_shuffle(order, shuffle_rng);

        for (size_t start = 0; start < n; start += options.batch_size) {
            const size_t end = std::min(n, start + options.batch_size);
            std::vector<RasterImage> batch_images;
            std::vector<int> batch_labels;
            batch_images.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                const size_t idx = order[i];
                if (augmented) {
                    const uint64_t aug_seed =
                        DetRng::derive_seed(options.seed, 2000000ULL + uint64_t(epoch) * n + idx);
                    batch_images.push_back(augment_sample(images[idx], options, aug_seed));
                } else {
                    batch_images.push_back(images[idx]);
                }
                batch_labels.push_back(labels[idx]);
            }
            const float loss = model.train_step(opt, images_to_batch(batch_images), batch_labels);
            losses.push_back(loss);
        }
    }

    TrainResult local;
    local.losses = losses;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        local.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
        model.save(local.checkpoint_path);
        local.loss_curve_path = (fs::path(out_dir) / "loss_curve.csv").string();
        std::ofstream f(local.loss_curve_path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + local.loss_curve_path);
        f << "step,loss\n";
        for (size_t i = 0; i < losses.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, losses[i]);
            f << buf;
        }
    }
    if (result != nullptr) *result = std::move(local);
    return model;
}

EvalReport evaluate(FsnetModel& model, const DatasetManifest& manifest,
                    const std::vector<std::string>& ids, const std::string& csv_path) {
    if (ids.empty()) throw ConfigError("evaluation set is empty");
    std::vector<RasterImage> images;
    std::vector<const SampleRecord*> records;
    images.reserve(ids.size());
    for (const auto& id : ids) {
        const SampleRecord& r = manifest.find(id);
        records.push_back(&r);
        images.push_back(load_png(manifest.resolve(r)));
    }
    const std::vector<Prediction> preds = predict_batch(model, images);

    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::string csv = "id,label,pred,prob\n";
    for (size_t i = 0; i < ids.size(); ++i) {
        const int label = records[i]->label;
        const int pred = preds[i].label;
        if (label == 1 && pred == 1) ++tp;
        if (label == 0 && pred == 1) ++fp;
        if (label == 0 && pred == 0) ++tn;
        if (label == 1 && pred == 0) ++fn;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.9g\n", ids[i].c_str(), label, pred,
                      double(preds[i].prob_watermarked));
        csv += buf;
    }
    if (!csv_path.empty()) {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + csv_path);
        f << csv;
    }
    return report_from_counts(tp, fp, tn, fn);
}

GateStats export_gate_heatmap(const FsnetModel& model, const std::string& prefix) {
    const auto mask = model.aspm().mask;
    const int grid = mask.dim(0);
    Plane plane(grid, grid);
    std::copy(mask.data().begin(), mask.data().end(), plane.values.begin());
    save_heatmap_pgm(plane, prefix + ".pgm");

    std::ofstream f(prefix + ".csv", std::ios::trunc);
    if (!f) throw IoError("cannot write " + prefix + ".csv");
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.9g", double(plane.at(y, x)));
            f << buf << (x + 1 < grid ? "," : "\n");
        }
    }

    GateStats stats;
    const int half = grid / 2;
    double low = 0.0, rest = 0.0;
    int64_t low_n = 0, rest_n = 0;
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            if (y < half && x < half) {
                low += plane.at(y, x);
                ++low_n;
            } else {
                rest += plane.at(y, x);
                ++rest_n;
            }
        }
    }
    stats.low_freq_mean = low / low_n;
    stats.rest_mean = rest / rest_n;
    return stats;
}

std::vector<AttnRow> export_attention_profile(FsnetModel& model, const DatasetManifest& manifest,
                                              const std::vector<std::string>& ids,
                                              const std::string& csv_path) {
    if (ids.empty()) throw ConfigError("attention export needs at least one sample");
    std::vector<RasterImage> images;
    std::vector<int> labels;
    for (const auto& id : ids) {
        const SampleRecord& r = manifest.find(id);
        images.push_back(load_png(manifest.resolve(r)));
        labels.push_back(r.label);
    }
    std::vector<DmsaProbe> probes;
    (void)predict_batch(model, images, 64, &probes);

    std::vector<AttnRow> rows;
    for (size_t i = 0; i < ids.size(); ++i) {
        AttnRow row;
        row.id = ids[i];
        row.label = labels[i];
        row.branch_profile = probes[i].branch_profile;
        row.v_total = probes[i].v_total;
        row.max_v_total = *std::max_element(row.v_total.begin(), row.v_total.end());
        rows.push_back(std::move(row));
    }

    const int k = probes.front().k;
    const int channels = probes.front().channels;
    auto mean_row = [&](int label) {
        AttnRow m;
        m.id = label == 0 ? "mean_clean" : "mean_watermarked";
        m.label = label;
        m.branch_profile.assign(k, 0.0f);
        m.v_total.assign(channels, 0.0f);
        int64_t count = 0;
        for (const auto& row : rows) {
            if (row.label != label) continue;
            ++count;
            for (int i = 0; i < k; ++i) m.branch_profile[i] += row.branch_profile[i];
            for (int c = 0; c < channels; ++c) m.v_total[c] += row.v_total[c];
        }
        if (count > 0) {
            for (auto& v : m.branch_profile) v /= count;
            for (auto& v : m.v_total) v /= count;
            m.max_v_total = *std::max_element(m.v_total.begin(), m.v_total.end());
        }
        return m;
    };

    std::vector<AttnRow> all = rows;
    all.push_back(mean_row(0));
    all.push_back(mean_row(1));

    if (!csv_path.empty()) {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + csv_path);
        f << "id,label,max_v_total";
        for (int i = 0; i < k; ++i) f << ",branch" << i;
        for (int c = 0; c < channels; ++c) f << ",v" << c;
        f << "\n";
        for (const auto& row : all) {
            f << row.id << "," << row.label;
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.9g", double(row.max_v_total));
            f << buf;
            for (float v : row.branch_profile) {
                std::snprintf(buf, sizeof(buf), ",%.9g", double(v));
                f << buf;
            }
            for (float v : row.v_total) {
                std::snprintf(buf, sizeof(buf), ",%.9g", double(v));
                f << buf;
            }
            f << "\n";
        }
    }
    return all;
}

}  // namespace fsw
