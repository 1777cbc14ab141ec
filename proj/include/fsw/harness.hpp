#pragma once

#include <set>
#include <string>
#include <vector>

#include "fsw/dataset.hpp"
#include "fsw/fsnet.hpp"
#include "fsw/optim.hpp"

#include "json.hpp"

namespace fsw {

// Leave-one-algorithm-out split. Test positives come exclusively from the
// held-out algorithm; train positives exclude it entirely; negatives are the
// matched per-algorithm clean pools, so both sides stay balanced 1:1 and
// train/test negatives are disjoint.
struct SplitPlan {
    std::string held_out;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

void to_json(nlohmann::json& j, const SplitPlan& p);
void from_json(const nlohmann::json& j, SplitPlan& p);
void save_split(const SplitPlan& plan, const std::string& path);
SplitPlan load_split(const std::string& path);

SplitPlan make_loao_split(const DatasetManifest& manifest, const std::string& held_out);

// Stratified training-side subsample: per (label, pool) stratum, counts are
// rounded down with a floor of one sample. The test fold is untouched.
SplitPlan subsample_fraction(const DatasetManifest& manifest, const SplitPlan& plan,
                             double fraction, uint64_t seed);

// Manifest view with the given algorithms' positives and their matched clean
// pools removed. Throws EmptyTrainSet when nothing remains.
DatasetManifest ablate_algorithms(const DatasetManifest& manifest, const std::set<std::string>& removed);

struct EvalReport {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

EvalReport report_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn);
void to_json(nlohmann::json& j, const EvalReport& r);

struct TrainOptions {
    int epochs = 10;
    int batch_size = 32;
    uint64_t seed = 1;
    AdamWConfig optimizer;
    // augmentation hook; both default off
    double crop_fraction = 0.0;   // in (0,1): random crop of that side fraction, resized back
    int requantize_levels = 0;    // >= 2: pixel levels to keep

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);

struct TrainResult {
    std::vector<double> losses;  // one entry per optimization step
    std::string checkpoint_path;
    std::string loss_curve_path;
};

// Trains a fresh model on the plan's training fold. Images are resized to
// the model input size; shuffling, initialization, dropout and augmentation
// all derive from the seeds, so a rerun is byte-identical. When out_dir is
// nonempty the checkpoint and loss-curve CSV are written there.
FsnetModel run_training(const DatasetManifest& manifest, const SplitPlan& plan,
                        const FsnetConfig& model_cfg, const TrainOptions& options,
                        const std::string& out_dir, TrainResult* result = nullptr);

// Evaluates the model on the given record ids. When csv_path is nonempty a
// per-sample predictions CSV (id,label,pred,prob) is written.
EvalReport evaluate(FsnetModel& model, const DatasetManifest& manifest,
                    const std::vector<std::string>& ids, const std::string& csv_path = "");

struct GateStats {
    double low_freq_mean = 0.0;  // top-left quadrant of the mask grid
    double rest_mean = 0.0;
};

// Writes <prefix>.pgm and <prefix>.csv of the trained gate and returns the
// quadrant statistic.
GateStats export_gate_heatmap(const FsnetModel& model, const std::string& prefix);

struct AttnRow {
    std::string id;
    int label = 0;
    std::vector<float> branch_profile;  // K entries in (0,1)
    std::vector<float> v_total;         // C entries in (0,1)
    float max_v_total = 0.0f;
};

// Per-sample branch profiles and channel attention plus two summary rows
// (mean over clean, mean over watermarked), written as CSV.
std::vector<AttnRow> export_attention_profile(FsnetModel& model, const DatasetManifest& manifest,
                                              const std::vector<std::string>& ids,
                                              const std::string& csv_path);

}  // namespace fsw
