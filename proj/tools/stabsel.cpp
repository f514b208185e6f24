// Batch front end: gen / parcellate / study / infer / report subcommands.
// Every command is a pure function of (config file, --seed); reruns write
// byte-identical artifacts except for the wall time in the run manifest.
#include <chrono>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabsel/ale.hpp"
#include "stabsel/errors.hpp"
#include "stabsel/inference.hpp"
#include "stabsel/parcellation.hpp"
#include "stabsel/rng.hpp"
#include "stabsel/sparse_logit.hpp"
#include "stabsel/stability.hpp"
#include "stabsel/synth.hpp"
#include "stabsel/transfer.hpp"
#include "stabsel/volume.hpp"

using nlohmann::json;
using namespace stabsel;

namespace {

constexpr const char* kVersion = "0.1.0";

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("STABSEL_LOG");
        if (!env) return 0;
        const std::string v(env);
        if (v == "debug") return 2;
        if (v == "info") return 1;
        return 0;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[stabsel] %s\n", msg.c_str());
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write file: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

const json& require(const json& j, const std::string& field) {
    if (!j.contains(field)) throw ArgumentError("config: missing required field '" + field + "'");
    return j.at(field);
}

template <class T>
T get_or(const json& j, const std::string& field, T fallback) {
    return j.contains(field) ? j.at(field).get<T>() : fallback;
}

struct RunContext {
    std::string command;
    std::string config_path; // empty for report
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts; // paths relative to out
    std::string config_bytes;
};

void finish_run(RunContext& ctx) {
    // validate that every artifact landed before declaring success
    for (const std::string& rel : ctx.artifacts)
        if (!std::filesystem::exists(std::filesystem::path(ctx.out) / rel))
            throw IoError("missing output artifact: " + rel);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
    json manifest = {{"command", ctx.command},
                     {"config_hash", fnv1a_hex(ctx.config_bytes)},
                     {"seed", ctx.seed},
                     {"jobs", ctx.jobs},
                     {"artifacts", ctx.artifacts},
                     {"version", kVersion},
                     {"wall_time_s", wall}};
    write_text((std::filesystem::path(ctx.out) / "run_manifest.json").string(), manifest.dump(2) + "\n");
    log_info(ctx.command + " done in " + std::to_string(wall) + " s");
}

json load_config(RunContext& ctx) {
    ctx.config_bytes = read_file(ctx.config_path);
    try {
        return json::parse(ctx.config_bytes);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: invalid JSON: ") + e.what());
    }
}

std::array<int, 3> int3(const json& j, const std::string& field) {
    const json& a = require(j, field);
    if (!a.is_array() || a.size() != 3) throw ArgumentError("config: '" + field + "' must have 3 entries");
    return {a[0].get<int>(), a[1].get<int>(), a[2].get<int>()};
}

std::array<double, 3> double3_or(const json& j, const std::string& field, std::array<double, 3> fallback) {
    if (!j.contains(field)) return fallback;
    const json& a = j.at(field);
    if (!a.is_array() || a.size() != 3) throw ArgumentError("config: '" + field + "' must have 3 entries");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

// ---------------------------------------------------------------- gen ----

ScannerModel scanner_from(const json& base, const json& entry) {
    auto pick = [&](const std::string& field, double fallback) {
        if (entry.contains(field)) return entry.at(field).get<double>();
        return get_or(base, field, fallback);
    };
    ScannerModel scanner;
    scanner.gain = pick("gain", 1.0);
    scanner.offset = pick("offset", 0.0);
    scanner.noise_sigma = pick("noise_sigma", 1.0);
    scanner.smooth_fwhm_mm = pick("smooth_fwhm_mm", 0.0);
    return scanner;
}

void cmd_gen(RunContext& ctx) {
    const json cfg = load_config(ctx);
    const auto dims = int3(cfg, "dims");
    const int n_per_class = require(cfg, "n_per_class").get<int>();
    const double effect_size = require(cfg, "effect_size").get<double>();
    const int n_active = require(cfg, "n_active_parcels").get<int>();
    const auto voxel = double3_or(cfg, "voxel_size_mm", {3.0, 3.0, 3.0});

    const std::string mask_kind = get_or<std::string>(cfg, "mask", "full");
    std::vector<std::uint8_t> mask;
    if (mask_kind == "full") {
        mask = full_mask(dims);
    } else if (mask_kind == "ellipsoid") {
        const auto axes = double3_or(cfg, "ellipsoid_axes",
                                     {0.45 * dims[0], 0.45 * dims[1], 0.45 * dims[2]});
        mask = ellipsoid_mask(dims, axes);
    } else {
        throw ArgumentError("config: mask must be 'full' or 'ellipsoid'");
    }
    const SpacePtr space = build_space(dims, voxel, mask);

    json block_j = cfg.contains("parcel_block") ? cfg.at("parcel_block") : json::array({3, 3, 3});
    const std::array<int, 3> block{block_j[0].get<int>(), block_j[1].get<int>(), block_j[2].get<int>()};
    const Parcellation parc = grid_parcellation(*space, block);

    Rng root(ctx.seed);
    const GroundTruth base_truth =
        make_ground_truth(*space, parc, n_active, effect_size, root.derive(1).next_u64());

    json entries = cfg.contains("datasets") ? cfg.at("datasets") : json::array({json::object()});
    if (!entries.is_array() || entries.empty()) throw ArgumentError("config: 'datasets' must be a nonempty array");

    std::size_t idx = 0;
    for (const json& entry : entries) {
        const std::string name = get_or<std::string>(entry, "name", "dataset");
        GroundTruth truth = base_truth;
        if (entry.contains("shared_fraction"))
            truth = derive_target(base_truth, entry.at("shared_fraction").get<double>(),
                                  get_or(entry, "effect_size", effect_size),
                                  root.derive(2000 + idx).next_u64());
        else if (entry.contains("effect_size"))
            truth.effect_size = entry.at("effect_size").get<double>();

        const int n_pc = get_or(entry, "n_per_class", n_per_class);
        const Dataset ds = sample_dataset(space, truth, scanner_from(cfg, entry), n_pc,
                                          root.derive(100 + idx).next_u64());
        const std::string dir = (std::filesystem::path(ctx.out) / name).string();
        write_dataset(ds, dir);
        json truth_j = {{"support", truth.support},
                        {"active_parcels", truth.active_parcels},
                        {"n_parcels", truth.n_parcels},
                        {"effect_size", truth.effect_size}};
        write_text(dir + "/truth.json", truth_j.dump(2) + "\n");
        ctx.artifacts.push_back(name + "/dataset.json");
        ctx.artifacts.push_back(name + "/truth.json");
        log_info("gen: wrote " + name + " (" + std::to_string(ds.n()) + " samples, p=" +
                 std::to_string(ds.p()) + ")");
        ++idx;
    }
    finish_run(ctx);
}

// --------------------------------------------------------- parcellate ----

void cmd_parcellate(RunContext& ctx) {
    const json cfg = load_config(ctx);
    const json& paths = require(cfg, "datasets");
    const int K = require(cfg, "K").get<int>();
    if (!paths.is_array() || paths.empty()) throw ArgumentError("config: 'datasets' must be a nonempty array");

    std::vector<Dataset> loaded;
    for (const json& p : paths) loaded.push_back(read_dataset(p.get<std::string>()));
    for (std::size_t i = 1; i < loaded.size(); ++i)
        if (!loaded[i].space->same_grid(*loaded[0].space))
            throw ShapeError("parcellate: datasets live on different grids");

    std::vector<const Matrix*> parts;
    for (const Dataset& d : loaded) parts.push_back(&d.X);
    const Matrix stacked = vstack(parts);
    log_info("parcellate: clustering p=" + std::to_string(stacked.cols) + " voxels to K=" + std::to_string(K));

    const ParcellationTree tree = build_tree(stacked, adjacency(*loaded[0].space));
    const Parcellation parc = cut(tree, K);
    save_parcellation(parc, tree, loaded[0].space,
                      (std::filesystem::path(ctx.out) / "parcellation.vol").string(),
                      (std::filesystem::path(ctx.out) / "parcellation.json").string());
    ctx.artifacts.push_back("parcellation.vol");
    ctx.artifacts.push_back("parcellation.json");
    finish_run(ctx);
}

// -------------------------------------------------------------- study ----

FeatureSpace feature_space_from(const json& j) {
    FeatureSpace space;
    space.kind = space_kind_from_string(require(j, "kind").get<std::string>());
    space.K = get_or(j, "K", 100);
    if (j.contains("ale")) {
        const json& a = j.at("ale");
        space.ale.fwhm_mm = get_or(a, "fwhm_mm", 10.0);
        space.ale.peak_threshold = get_or(a, "peak_threshold", 3.0);
        space.ale.min_peak_separation_mm = get_or(a, "min_peak_separation_mm", 0.0);
    }
    return space;
}

void cmd_study(RunContext& ctx) {
    const json cfg = load_config(ctx);
    const json& ds_obj = require(cfg, "datasets");
    if (!ds_obj.is_object() || ds_obj.empty()) throw ArgumentError("config: 'datasets' must map ids to paths");

    std::map<std::string, Dataset> datasets;
    StudyConfig sc;
    for (const auto& [id, path] : ds_obj.items()) {
        datasets[id] = read_dataset(path.get<std::string>());
        sc.dataset_ids.push_back(id);
    }
    for (const json& pair : require(cfg, "pairs")) {
        if (!pair.is_array() || pair.size() != 2) throw ArgumentError("config: each pair needs 2 dataset ids");
        sc.transfer_pairs.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
    }
    for (const json& s : require(cfg, "spaces")) sc.spaces.push_back(feature_space_from(s));
    sc.meta_reference_ids = get_or(cfg, "meta_reference_ids", std::vector<std::string>{});
    sc.cv_folds = get_or(cfg, "cv_folds", 6);
    sc.seed = ctx.seed;
    sc.jobs = ctx.jobs;

    const StudyReport report = run_study(datasets, sc);
    write_text((std::filesystem::path(ctx.out) / "table1.csv").string(), report.to_csv());
    write_text((std::filesystem::path(ctx.out) / "fig1_summary.json").string(), report.summary.dump(2) + "\n");
    ctx.artifacts.push_back("table1.csv");
    ctx.artifacts.push_back("fig1_summary.json");
    finish_run(ctx);
}

// -------------------------------------------------------------- infer ----

std::string count_rate_cell(int count, std::size_t tested) {
    if (tested == 0) return "0 (NA)";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%d (%.2f%%)", count,
                  100.0 * static_cast<double>(count) / static_cast<double>(tested));
    return buf;
}

void write_qq_csv(const std::string& path, const InferenceReport& report) {
    std::ostringstream os;
    os << "expected_neglog10,observed_neglog10\n";
    char buf[64];
    for (const auto& [e, o] : report.qq) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", e, o);
        os << buf;
    }
    write_text(path, os.str());
}

void cmd_infer(RunContext& ctx) {
    const json cfg = load_config(ctx);
    const Dataset reference = read_dataset(require(cfg, "reference").get<std::string>());
    const Dataset target = read_dataset(require(cfg, "target").get<std::string>());
    if (!reference.space->same_grid(*target.space))
        throw ShapeError("infer: reference and target grids differ");

    const double tau = get_or(cfg, "tau", 0.01);
    const double q = get_or(cfg, "q", 0.05);
    const std::vector<int> cohorts = get_or(cfg, "cohort_sizes", std::vector<int>{10, 20, 40});
    const std::string sel_space = get_or<std::string>(cfg, "space", "parcels");

    StabilityConfig scfg;
    if (cfg.contains("stability")) {
        const json& s = cfg.at("stability");
        scfg.m = get_or(s, "m", scfg.m);
        scfg.subsample_fraction = get_or(s, "subsample_fraction", scfg.subsample_fraction);
        scfg.alpha_weakness = get_or(s, "alpha_weakness", scfg.alpha_weakness);
        scfg.max_iter = get_or(s, "max_iter", scfg.max_iter);
        scfg.tol = get_or(s, "tol", scfg.tol);
        if (s.contains("fixed_lambda")) scfg.fixed_lambda = s.at("fixed_lambda").get<double>();
    }
    scfg.tau = tau;
    scfg.seed = ctx.seed;
    scfg.jobs = ctx.jobs;

    // frozen selection learned on the reference experiment only
    std::vector<double> voxel_freq;
    if (sel_space == "parcels") {
        const int K = require(cfg, "K").get<int>();
        log_info("infer: building K=" + std::to_string(K) + " reference parcellation");
        const ParcellationTree tree = build_tree(reference.X, adjacency(*reference.space));
        const Parcellation parc = cut(tree, K);
        const Matrix feats = transform(parc, reference.X);
        const SelectionProfile profile = run_stability(feats, reference.y, scfg);
        voxel_freq = inverse_transform(parc, profile.frequencies);
    } else if (sel_space == "raw") {
        const SelectionProfile profile = run_stability(reference.X, reference.y, scfg);
        voxel_freq = profile.frequencies;
    } else {
        throw ArgumentError("config: space must be 'parcels' or 'raw'");
    }

    ContrastImage freq_map;
    freq_map.space = target.space;
    freq_map.values = voxel_freq;
    write_volume(freq_map, (std::filesystem::path(ctx.out) / "stability_map.vol").string());
    ctx.artifacts.push_back("stability_map.vol");

    std::vector<std::int32_t> selection;
    for (std::size_t j = 0; j < voxel_freq.size(); ++j)
        if (voxel_freq[j] >= tau) selection.push_back(static_cast<std::int32_t>(j));
    log_info("infer: selection keeps " + std::to_string(selection.size()) + " voxels");

    // matched-size ANOVA baseline, also learned on the reference only
    const std::vector<std::int32_t> anova_sel =
        selection.empty() ? std::vector<std::int32_t>{}
                          : anova_screen(reference.X, reference.y, selection.size());

    const std::size_t nh = target.n() / 2;
    for (std::size_t s = 0; s < nh; ++s)
        if (target.y[s] != 1 || target.y[nh + s] != -1)
            throw ArgumentError("infer: target labels are not in paired block order");

    std::ostringstream table;
    table << "n_star,all_fwer,all_fdr,selection_fwer,selection_fdr,anova_fwer,anova_fdr\n";
    for (int n_star : cohorts) {
        if (n_star < 2) throw ArgumentError("infer: cohort sizes must be >= 2");
        if (static_cast<std::size_t>(n_star) > nh)
            throw ArgumentError("infer: cohort size exceeds target subjects per class");
        Matrix diffs(static_cast<std::size_t>(n_star), target.p());
        for (std::size_t s = 0; s < static_cast<std::size_t>(n_star); ++s)
            for (std::size_t j = 0; j < target.p(); ++j)
                diffs(s, j) = target.X(s, j) - target.X(nh + s, j);

        const ScreenedAnalysis screened = screened_inference(diffs, selection, q);
        const InferenceReport anova_rep = screened_inference(diffs, anova_sel, q).selection;

        table << n_star << ','
              << count_rate_cell(screened.all.n_detect_fwer, screened.all.tested_indices.size()) << ','
              << count_rate_cell(screened.all.n_detect_fdr, screened.all.tested_indices.size()) << ','
              << count_rate_cell(screened.selection.n_detect_fwer, selection.size()) << ','
              << count_rate_cell(screened.selection.n_detect_fdr, selection.size()) << ','
              << count_rate_cell(anova_rep.n_detect_fwer, anova_sel.size()) << ','
              << count_rate_cell(anova_rep.n_detect_fdr, anova_sel.size()) << '\n';

        const std::string prefix = "qq_n" + std::to_string(n_star) + "_";
        write_qq_csv((std::filesystem::path(ctx.out) / (prefix + "all.csv")).string(), screened.all);
        write_qq_csv((std::filesystem::path(ctx.out) / (prefix + "selection.csv")).string(),
                     screened.selection);
        write_qq_csv((std::filesystem::path(ctx.out) / (prefix + "anova.csv")).string(), anova_rep);
        ctx.artifacts.push_back(prefix + "all.csv");
        ctx.artifacts.push_back(prefix + "selection.csv");
        ctx.artifacts.push_back(prefix + "anova.csv");
    }
    write_text((std::filesystem::path(ctx.out) / "table2.csv").string(), table.str());
    ctx.artifacts.push_back("table2.csv");
    finish_run(ctx);
}

// ------------------------------------------------------------- report ----

int cmd_report(const std::string& dir) {
    const std::string path = (std::filesystem::path(dir) / "run_manifest.json").string();
    const json manifest = json::parse(read_file(path));
    std::printf("command:     %s\n", manifest.at("command").get<std::string>().c_str());
    std::printf("version:     %s\n", manifest.at("version").get<std::string>().c_str());
    std::printf("seed:        %" PRIu64 "\n", manifest.at("seed").get<std::uint64_t>());
    std::printf("config_hash: %s\n", manifest.at("config_hash").get<std::string>().c_str());
    std::printf("wall_time_s: %.3f\n", manifest.at("wall_time_s").get<double>());
    bool ok = true;
    for (const json& a : manifest.at("artifacts")) {
        const std::filesystem::path p = std::filesystem::path(dir) / a.get<std::string>();
        const bool exists = std::filesystem::exists(p);
        std::printf("artifact:    %s [%s]\n", a.get<std::string>().c_str(), exists ? "ok" : "MISSING");
        ok = ok && exists;
    }
    if (!ok) throw IoError("report: one or more artifacts missing");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"transfer-learning meta-analysis pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed, "master seed (default 0)");
        sub->add_option("--jobs", jobs, "worker count (default 1)")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* gen = app.add_subcommand("gen", "generate synthetic datasets");
    CLI::App* parcellate = app.add_subcommand("parcellate", "build a Ward parcellation");
    CLI::App* study = app.add_subcommand("study", "inline/transfer accuracy study");
    CLI::App* infer = app.add_subcommand("infer", "screened group inference");
    CLI::App* report = app.add_subcommand("report", "summarize a finished run");
    for (CLI::App* sub : {gen, parcellate, study, infer}) add_common(sub, true);
    report->add_option("--out", out_dir, "run directory to summarize")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) return cmd_report(out_dir);

        std::filesystem::create_directories(out_dir);
        RunContext ctx;
        ctx.config_path = config_path;
        ctx.seed = seed;
        ctx.jobs = jobs;
        ctx.out = out_dir;
        if (gen->parsed()) {
            ctx.command = "gen";
            cmd_gen(ctx);
        } else if (parcellate->parsed()) {
            ctx.command = "parcellate";
            cmd_parcellate(ctx);
        } else if (study->parsed()) {
            ctx.command = "study";
            cmd_study(ctx);
        } else if (infer->parsed()) {
            ctx.command = "infer";
            cmd_infer(ctx);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
