// freqshield: command-line workbench for invisible-watermark forensics.
// Exit codes: 0 ok, 2 bad arguments/config, 3 I/O, 4 capacity,
// 5 gradcheck failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fsw/dataset.hpp"
#include "fsw/errors.hpp"
#include "fsw/gradcheck.hpp"
#include "fsw/harness.hpp"
#include "fsw/residual.hpp"
#include "fsw/watermark.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "freqshield 0.1.0";

uint64_t parse_seed(const std::string& text) {
    try {
        return std::stoull(text, nullptr, 0);  // accepts decimal and 0x-hex
    } catch (const std::exception&) {
        throw fsw::ConfigError("cannot parse seed '" + text + "'");
    }
}

// --seed flag > FREQSHIELD_SEED > default
uint64_t resolve_seed(const std::string& flag_value, uint64_t fallback = 1) {
    if (!flag_value.empty()) return parse_seed(flag_value);
    if (const char* env = std::getenv("FREQSHIELD_SEED")) return parse_seed(env);
    return fallback;
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw fsw::IoError("cannot open " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw fsw::FormatError("not valid JSON: " + path);
    return j;
}

// A config file is either the section itself or a run-config document with
// top-level sections {embed, recipe, model, train}.
json load_section(const std::string& path, const std::string& key) {
    json doc = load_json_file(path);
    static const std::set<std::string> sections = {"embed", "recipe", "model", "train"};
    bool is_runconfig = false;
    for (const auto& s : sections) {
        if (doc.contains(s)) is_runconfig = true;
    }
    if (!is_runconfig) return doc;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!sections.contains(it.key())) {
            throw fsw::ConfigError("unknown run-config section: " + it.key());
        }
    }
    if (!doc.contains(key)) return json::object();
    return doc.at(key);
}

void write_run_meta(const std::string& path, const std::string& command, const json& config) {
    json meta = {{"command", command}, {"config", config}, {"version", kVersion}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw fsw::IoError("cannot write run metadata " + path);
    f << meta.dump(2) << "\n";
}

void emit(const json& j) {
    std::cout << j.dump() << "\n";
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double finite_or(double v, double fallback) {
    return std::isfinite(v) ? v : fallback;
}

// ---------------------------------------------------------------------------

int cmd_embed(const std::string& algo, const std::string& seed_text, const std::string& payload_text,
              const std::string& in_path, const std::string& out_path, const std::string& config_path,
              double alpha, int step, int pairs, const std::string& meta_path) {
    fsw::EmbedConfig cfg;
    if (!config_path.empty()) {
        cfg = load_section(config_path, "embed").get<fsw::EmbedConfig>();
    }
    if (!algo.empty()) cfg.algorithm = fsw::algo_from_string(algo);
    cfg.seed = resolve_seed(seed_text, cfg.seed);
    if (alpha >= 0.0) cfg.alpha = alpha;
    if (step >= 0) cfg.step = step;
    if (pairs > 0) cfg.pairs_per_bit = pairs;
    cfg.validate();

    fsw::Payload32 payload;
    if (payload_text.empty()) {
        fsw::DetRng rng(fsw::DetRng::derive_seed(cfg.seed, 7));
        payload = fsw::Payload32::random(rng);
    } else {
        payload = fsw::Payload32::from_string(payload_text);
    }

    const fsw::RasterImage carrier = fsw::load_png(in_path);
    const fsw::RasterImage watermarked = fsw::embed(cfg, carrier, payload);
    fsw::save_png(watermarked, out_path);

    const fsw::SparsityReport sparsity = fsw::sparsity_stats(fsw::absolute_residual(carrier, watermarked));
    json result = {{"out", out_path},
                   {"psnr", finite_or(fsw::psnr(carrier, watermarked), 999.0)},
                   {"residual_density", sparsity.density},
                   {"payload", payload.to_string()}};
    emit(result);

    json echo = cfg;
    echo["payload"] = payload.to_string();
    echo["in"] = in_path;
    echo["out"] = out_path;
    write_run_meta(meta_path.empty() ? out_path + ".run.json" : meta_path, "embed", echo);
    return 0;
}

int cmd_decode(const std::string& algo, const std::string& in_path, const std::string& seed_text,
               int pairs, int step, const std::string& meta_path) {
    const fsw::RasterImage img = fsw::load_png(in_path);
    json result;
    json echo = {{"algo", algo}, {"in", in_path}};
    if (algo == "lsb") {
        result = {{"algo", "lsb"}, {"payload", fsw::decode_lsb(img).to_string()}};
    } else if (algo == "patchwork") {
        fsw::EmbedConfig cfg;
        cfg.algorithm = fsw::WatermarkAlgo::Patchwork;
        cfg.seed = resolve_seed(seed_text);
        if (pairs > 0) cfg.pairs_per_bit = pairs;
        if (step >= 0) cfg.step = step;
        const auto stats = fsw::patchwork_statistic(img, cfg);
        std::string bits(32, '0');
        for (int i = 0; i < 32; ++i) bits[i] = stats[i] > 0.0 ? '1' : '0';
        result = {{"algo", "patchwork"}, {"seed", cfg.seed}, {"statistics", stats}, {"payload", bits}};
        echo["seed"] = cfg.seed;
    } else {
        throw fsw::UnknownAlgorithm("decode supports lsb and patchwork, got '" + algo + "'");
    }
    emit(result);
    write_run_meta(meta_path.empty() ? in_path + ".decode.run.json" : meta_path, "decode", echo);
    return 0;
}

int cmd_residual(const std::string& a_path, const std::string& b_path, const std::string& prefix,
                 const std::string& meta_path) {
    const fsw::RasterImage a = fsw::load_png(a_path);
    const fsw::RasterImage b = fsw::load_png(b_path);
    const fsw::ResidualMap residual = fsw::absolute_residual(a, b);
    fsw::save_heatmap_pgm(residual, prefix + "_residual.pgm");
    fsw::save_heatmap_pgm(fsw::binarize_extremum(residual), prefix + "_binary.pgm");

    const fsw::SparsityReport rep = fsw::sparsity_stats(residual);
    json result = {{"l0", rep.l0},
                   {"density", rep.density},
                   {"max_amp", rep.max_amp},
                   {"mean_amp_nonzero", rep.mean_amp_nonzero},
                   {"residual_pgm", prefix + "_residual.pgm"},
                   {"binary_pgm", prefix + "_binary.pgm"}};
    std::ofstream f(prefix + "_sparsity.json", std::ios::trunc);
    if (!f) throw fsw::IoError("cannot write " + prefix + "_sparsity.json");
    f << result.dump(2) << "\n";
    emit(result);
    write_run_meta(meta_path.empty() ? prefix + "_run.json" : meta_path, "residual",
                   json{{"a", a_path}, {"b", b_path}});
    return 0;
}

int cmd_gen(const std::string& recipe_path, const std::string& out_dir, const std::string& algos,
            int size, const std::string& seed_text, const std::string& families, double alpha,
            const std::string& meta_path) {
    fsw::GenerationRecipe recipe;
    if (!recipe_path.empty()) {
        recipe = load_section(recipe_path, "recipe").get<fsw::GenerationRecipe>();
    }
    if (!algos.empty()) {
        recipe.algorithms.clear();
        for (const std::string& entry : split_list(algos)) {
            const auto eq = entry.find('=');
            if (eq == std::string::npos) throw fsw::ConfigError("--algos expects tag=count pairs");
            recipe.algorithms[entry.substr(0, eq)] = std::stoi(entry.substr(eq + 1));
        }
    }
    if (size > 0) recipe.image_size = size;
    recipe.seed = resolve_seed(seed_text, recipe.seed);
    if (!families.empty()) recipe.families = split_list(families);
    if (alpha >= 0.0) recipe.alpha = alpha;

    const fsw::DatasetManifest manifest = fsw::generate_dataset(recipe, out_dir);
    int64_t positives = 0;
    for (const auto& r : manifest.records) positives += r.label;
    emit(json{{"out_dir", out_dir},
              {"manifest", (fs::path(out_dir) / "manifest.json").string()},
              {"records", manifest.records.size()},
              {"positives", positives}});
    write_run_meta(meta_path.empty() ? (fs::path(out_dir) / "run_meta.json").string() : meta_path,
                   "gen", json(recipe));
    return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& held_out, const std::string& out_path,
              const std::string& meta_path) {
    const fsw::DatasetManifest manifest = fsw::load_manifest(manifest_path);
    const fsw::SplitPlan plan = fsw::make_loao_split(manifest, held_out);
    fsw::save_split(plan, out_path);
    emit(json{{"held_out", plan.held_out},
              {"train", plan.train_ids.size()},
              {"test", plan.test_ids.size()},
              {"plan", out_path}});
    write_run_meta(meta_path.empty() ? out_path + ".run.json" : meta_path, "split",
                   json{{"manifest", manifest_path}, {"held_out", held_out}});
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& plan_path, const std::string& held_out,
              const std::string& model_config_path, const std::string& out_dir, int epochs, int batch,
              double lr, double wd, const std::string& seed_text, double fraction,
              const std::string& ablate, const std::string& meta_path) {
    fsw::DatasetManifest manifest = fsw::load_manifest(manifest_path);
    if (!ablate.empty()) {
        std::set<std::string> removed;
        for (const auto& tag : split_list(ablate)) removed.insert(tag);
        manifest = fsw::ablate_algorithms(manifest, removed);
    }

    fsw::SplitPlan plan;
    if (!plan_path.empty()) {
        plan = fsw::load_split(plan_path);
    } else if (!held_out.empty()) {
        plan = fsw::make_loao_split(manifest, held_out);
    } else {
        throw fsw::ConfigError("train needs --plan or --hold-out");
    }

    fsw::FsnetConfig model_cfg;
    if (!model_config_path.empty()) {
        model_cfg = load_section(model_config_path, "model").get<fsw::FsnetConfig>();
    }
    fsw::TrainOptions options;
    if (!model_config_path.empty()) {
        const json t = load_section(model_config_path, "train");
        if (!t.empty()) options = t.get<fsw::TrainOptions>();
    }
    if (epochs > 0) options.epochs = epochs;
    if (batch > 0) options.batch_size = batch;
    if (lr > 0.0) options.optimizer.lr = lr;
    if (wd >= 0.0) options.optimizer.weight_decay = wd;
    options.seed = resolve_seed(seed_text, options.seed);
    model_cfg.init_seed = fsw::DetRng::derive_seed(options.seed, 0x11);

    if (fraction > 0.0 && fraction < 1.0) {
        plan = fsw::subsample_fraction(manifest, plan, fraction, fsw::DetRng::derive_seed(options.seed, 0xF));
    }

    fsw::TrainResult result;
    fsw::run_training(manifest, plan, model_cfg, options, out_dir, &result);
    fsw::save_split(plan, (fs::path(out_dir) / "split.json").string());

    emit(json{{"checkpoint", result.checkpoint_path},
              {"loss_curve", result.loss_curve_path},
              {"steps", result.losses.size()},
              {"final_loss", result.losses.empty() ? 0.0 : result.losses.back()}});
    json echo = {{"manifest", manifest_path}, {"model", model_cfg}, {"train", options},
                 {"fraction", fraction},      {"ablate", ablate},   {"held_out", plan.held_out}};
    write_run_meta(meta_path.empty() ? (fs::path(out_dir) / "run_meta.json").string() : meta_path,
                   "train", echo);
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& ckpt_path, const std::string& plan_path,
             const std::string& use, const std::string& out_dir, const std::string& meta_path) {
    const fsw::DatasetManifest manifest = fsw::load_manifest(manifest_path);
    fsw::FsnetModel model = fsw::FsnetModel::load(ckpt_path);

    std::vector<std::string> ids;
    std::string held_out = "-";
    if (!plan_path.empty()) {
        const fsw::SplitPlan plan = fsw::load_split(plan_path);
        held_out = plan.held_out;
        ids = use == "train" ? plan.train_ids : plan.test_ids;
    } else {
        for (const auto& r : manifest.records) ids.push_back(r.id);
    }

    std::string csv_path;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        csv_path = (fs::path(out_dir) / "predictions.csv").string();
    }
    const fsw::EvalReport report = fsw::evaluate(model, manifest, ids, csv_path);
    json out = report;
    out["held_out"] = held_out;
    out["samples"] = ids.size();
    if (!out_dir.empty()) {
        std::ofstream f((fs::path(out_dir) / "report.json").string(), std::ios::trunc);
        f << out.dump(2) << "\n";
        write_run_meta(meta_path.empty() ? (fs::path(out_dir) / "run_meta.json").string() : meta_path,
                       "eval",
                       json{{"manifest", manifest_path}, {"ckpt", ckpt_path}, {"use", use}});
    } else if (!meta_path.empty()) {
        write_run_meta(meta_path, "eval",
                       json{{"manifest", manifest_path}, {"ckpt", ckpt_path}, {"use", use}});
    }
    emit(out);
    return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& prefix, const std::string& manifest_path,
                int sample_cap, const std::string& meta_path) {
    fsw::FsnetModel model = fsw::FsnetModel::load(ckpt_path);
    const fsw::GateStats stats = fsw::export_gate_heatmap(model, prefix + "_gate");
    json out = {{"gate_pgm", prefix + "_gate.pgm"},
                {"gate_csv", prefix + "_gate.csv"},
                {"low_freq_mean", stats.low_freq_mean},
                {"rest_mean", stats.rest_mean}};

    if (!manifest_path.empty()) {
        const fsw::DatasetManifest manifest = fsw::load_manifest(manifest_path);
        std::vector<std::string> ids;
        for (const auto& r : manifest.records) {
            if (sample_cap > 0 && static_cast<int>(ids.size()) >= sample_cap) break;
            ids.push_back(r.id);
        }
        fsw::export_attention_profile(model, manifest, ids, prefix + "_attention.csv");
        out["attention_csv"] = prefix + "_attention.csv";
        out["attention_samples"] = ids.size();
    }
    emit(out);
    write_run_meta(meta_path.empty() ? prefix + "_run.json" : meta_path, "inspect",
                   json{{"ckpt", ckpt_path}, {"manifest", manifest_path}});
    return 0;
}

int cmd_gradcheck(const std::string& seed_text, const std::string& meta_path) {
    const uint64_t seed = resolve_seed(seed_text, 17);
    const auto results = fsw::run_gradcheck_suite(seed);
    json checks = json::array();
    for (const auto& r : results) {
        checks.push_back({{"name", r.name},
                          {"max_rel_err", r.max_rel_err},
                          {"tolerance", r.tolerance},
                          {"pass", r.pass}});
    }
    const bool ok = fsw::gradcheck_all_passed(results);
    emit(json{{"seed", seed}, {"checks", checks}, {"all_passed", ok}});
    if (!meta_path.empty()) write_run_meta(meta_path, "gradcheck", json{{"seed", seed}});
    return ok ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"freqshield: frequency-domain watermark forensics workbench"};
    app.require_subcommand(1);
    std::string workdir;
    app.add_option("--workdir", workdir, "directory all relative paths resolve against");

    std::function<int()> action;

    // ---- embed ----
    auto* embed = app.add_subcommand("embed", "embed a 32-bit payload into a PNG");
    {
        static std::string algo, seed, payload, in, out, config, meta;
        static double alpha = -1.0;
        static int d = -1, pairs = -1;
        embed->add_option("--algo", algo, "lsb|patchwork|dct|dwt");
        embed->add_option("--seed", seed, "embedder seed (decimal or 0x-hex)");
        embed->add_option("--payload", payload, "32-character bit string (random from seed when absent)");
        embed->add_option("--in", in, "carrier PNG")->required();
        embed->add_option("--out", out, "output PNG")->required();
        embed->add_option("--config", config, "embed config JSON (flags override)");
        embed->add_option("--alpha", alpha, "spectral strength");
        embed->add_option("--d", d, "patchwork step");
        embed->add_option("--pairs", pairs, "patchwork pairs per bit");
        embed->add_option("--meta", meta, "run-metadata path");
        embed->callback([&] {
            action = [&] { return cmd_embed(algo, seed, payload, in, out, config, alpha, d, pairs, meta); };
        });
    }

    // ---- decode ----
    auto* decode = app.add_subcommand("decode", "read a payload or detection statistic back");
    {
        static std::string algo = "lsb", in, seed, meta;
        static int pairs = -1, d = -1;
        decode->add_option("--algo", algo, "lsb|patchwork");
        decode->add_option("--in", in, "watermarked PNG")->required();
        decode->add_option("--seed", seed, "patchwork seed");
        decode->add_option("--pairs", pairs, "patchwork pairs per bit");
        decode->add_option("--d", d, "patchwork step");
        decode->add_option("--meta", meta, "run-metadata path");
        decode->callback([&] { action = [&] { return cmd_decode(algo, in, seed, pairs, d, meta); }; });
    }

    // ---- residual ----
    auto* residual = app.add_subcommand("residual", "residual maps, binarization and sparsity stats");
    {
        static std::string a, b, prefix, meta;
        residual->add_option("--a", a, "first PNG")->required();
        residual->add_option("--b", b, "second PNG")->required();
        residual->add_option("--out-prefix", prefix, "output path prefix")->required();
        residual->add_option("--meta", meta, "run-metadata path");
        residual->callback([&] { action = [&] { return cmd_residual(a, b, prefix, meta); }; });
    }

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a labeled clean/watermarked dataset");
    {
        static std::string recipe, out, algos, seed, families, meta;
        static int size = -1;
        static double alpha = -1.0;
        gen->add_option("--recipe", recipe, "recipe JSON (flags override)");
        gen->add_option("--out", out, "output directory")->required();
        gen->add_option("--algos", algos, "tag=count list, e.g. dct=400,dwt=400");
        gen->add_option("--size", size, "square image size");
        gen->add_option("--seed", seed, "global dataset seed");
        gen->add_option("--families", families, "carrier families, e.g. gradient,checker,blobs");
        gen->add_option("--alpha", alpha, "embedder strength");
        gen->add_option("--meta", meta, "run-metadata path");
        gen->callback([&] {
            action = [&] { return cmd_gen(recipe, out, algos, size, seed, families, alpha, meta); };
        });
    }

    // ---- split ----
    auto* split = app.add_subcommand("split", "leave-one-algorithm-out split plan");
    {
        static std::string manifest, held_out, out, meta;
        split->add_option("--manifest", manifest, "manifest.json")->required();
        split->add_option("--hold-out", held_out, "algorithm tag to hold out")->required();
        split->add_option("--out", out, "plan JSON path")->required();
        split->add_option("--meta", meta, "run-metadata path");
        split->callback([&] { action = [&] { return cmd_split(manifest, held_out, out, meta); }; });
    }

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the detector on a split plan");
    {
        static std::string manifest, plan, held_out, model_config, out, seed, ablate, meta;
        static int epochs = -1, batch = -1;
        static double lr = -1.0, wd = -1.0, fraction = -1.0;
        train->add_option("--manifest", manifest, "manifest.json")->required();
        train->add_option("--plan", plan, "split plan JSON");
        train->add_option("--hold-out", held_out, "build the plan inline");
        train->add_option("--model-config", model_config, "model/train config JSON (flags override)");
        train->add_option("--out", out, "output directory")->required();
        train->add_option("--epochs", epochs, "training epochs");
        train->add_option("--batch", batch, "batch size");
        train->add_option("--lr", lr, "learning rate");
        train->add_option("--wd", wd, "weight decay");
        train->add_option("--seed", seed, "training seed");
        train->add_option("--fraction", fraction, "stratified training-data fraction");
        train->add_option("--ablate", ablate, "comma list of algorithm pools to remove");
        train->add_option("--meta", meta, "run-metadata path");
        train->callback([&] {
            action = [&] {
                return cmd_train(manifest, plan, held_out, model_config, out, epochs, batch, lr, wd,
                                 seed, fraction, ablate, meta);
            };
        });
    }

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and emit metrics");
    {
        static std::string manifest, ckpt, plan, use = "test", out, meta;
        eval->add_option("--manifest", manifest, "manifest.json")->required();
        eval->add_option("--ckpt", ckpt, "model checkpoint")->required();
        eval->add_option("--plan", plan, "split plan JSON (defaults to all records)");
        eval->add_option("--use", use, "test|train fold of the plan");
        eval->add_option("--out", out, "directory for report.json and predictions.csv");
        eval->add_option("--meta", meta, "run-metadata path");
        eval->callback([&] { action = [&] { return cmd_eval(manifest, ckpt, plan, use, out, meta); }; });
    }

    // ---- inspect ----
    auto* inspect = app.add_subcommand("inspect", "gate heatmap and attention profile exports");
    {
        static std::string ckpt, prefix, manifest, meta;
        static int cap = 0;
        inspect->add_option("--ckpt", ckpt, "model checkpoint")->required();
        inspect->add_option("--out-prefix", prefix, "output path prefix")->required();
        inspect->add_option("--manifest", manifest, "manifest for attention profiling");
        inspect->add_option("--samples", cap, "cap on profiled samples (0 = all)");
        inspect->add_option("--meta", meta, "run-metadata path");
        inspect->callback([&] { action = [&] { return cmd_inspect(ckpt, prefix, manifest, cap, meta); }; });
    }

    // ---- gradcheck ----
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    {
        static std::string seed, meta;
        gradcheck->add_option("--seed", seed, "suite seed");
        gradcheck->add_option("--meta", meta, "run-metadata path");
        gradcheck->callback([&] { action = [&] { return cmd_gradcheck(seed, meta); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!workdir.empty()) fs::current_path(workdir);
        return action();
    } catch (const fsw::CapacityError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const fsw::IoError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const fsw::FormatError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const fsw::Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
