#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "setmix/corrupt.hpp"
#include "setmix/io.hpp"
#include "setmix/metrics.hpp"
#include "setmix/model.hpp"
#include "setmix/synth.hpp"
#include "setmix/train.hpp"
#include "setmix/verify.hpp"

namespace setmix::cli {

namespace fs = std::filesystem;

// Exit codes: 0 success, 2 usage error, 3 data error, 4 verification failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitVerify = 4;

inline std::string git_describe() {
    FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
    if (pipe == nullptr) return "unknown";
    char buf[128] = {0};
    std::string out;
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
    ::pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

inline void write_run_manifest(const fs::path& path, json fields) {
    fields["git_describe"] = git_describe();
    atomic_write_file(path, fields.dump(2) + "\n");
}

// gen-data/train write into <out>/train and <out>/test; eval and corrupt
// accept either the parent directory or a split directory directly.
inline fs::path resolve_split(const fs::path& dir, const char* split) {
    if (fs::exists(dir / split / "index.csv")) return dir / split;
    if (fs::exists(dir / "index.csv")) return dir;
    throw IoError("no index.csv under " + dir.string() + " (or its " + split + "/ split)");
}

inline int cmd_gen_data(const std::string& families_csv, std::size_t train_per_class,
                        std::size_t test_per_class, std::uint64_t seed, const fs::path& out,
                        std::size_t points, double jitter, bool no_scale, bool no_rotate) {
    std::vector<ShapeFamily> families;
    if (families_csv == "all") {
        families = all_shape_families();
    } else {
        std::size_t pos = 0;
        while (pos <= families_csv.size()) {
            std::size_t end = families_csv.find(',', pos);
            if (end == std::string::npos) end = families_csv.size();
            if (end > pos) families.push_back(shape_family_from(families_csv.substr(pos, end - pos)));
            pos = end + 1;
        }
    }
    if (families.empty()) throw Error("gen-data: no families given");

    DatasetOptions opt;
    opt.points = points;
    opt.jitter = jitter;
    opt.random_scale = !no_scale;
    opt.random_rotation = !no_rotate;
    const Dataset ds = make_dataset(families, train_per_class, test_per_class, seed, opt);
    save_dataset_split(out / "train", ds.train);
    save_dataset_split(out / "test", ds.test);

    json manifest{{"schema", "setmix-dataset-1"},
                  {"seed", seed},
                  {"points", points},
                  {"jitter", jitter},
                  {"random_scale", opt.random_scale},
                  {"random_rotation", opt.random_rotation},
                  {"train_per_class", train_per_class},
                  {"test_per_class", test_per_class},
                  {"train_hash", dataset_hash(out / "train")},
                  {"test_hash", dataset_hash(out / "test")}};
    json fam = json::array();
    for (ShapeFamily f : families) fam.push_back(to_string(f));
    manifest["families"] = fam;
    write_run_manifest(out / "manifest.json", manifest);
    std::printf("%s\n", (out / "manifest.json").string().c_str());
    return kExitOk;
}

inline int cmd_corrupt(const fs::path& in, const std::string& kinds_csv,
                       const std::string& severities_csv, std::uint64_t seed,
                       const fs::path& out) {
    std::vector<CorruptionKind> kinds;
    if (kinds_csv == "all") {
        kinds = all_corruption_kinds();
    } else {
        std::size_t pos = 0;
        while (pos <= kinds_csv.size()) {
            std::size_t end = kinds_csv.find(',', pos);
            if (end == std::string::npos) end = kinds_csv.size();
            if (end > pos) kinds.push_back(corruption_kind_from(kinds_csv.substr(pos, end - pos)));
            pos = end + 1;
        }
    }
    std::vector<int> severities;
    if (severities_csv == "all") {
        severities = {1, 2, 3, 4, 5};
    } else {
        std::size_t pos = 0;
        while (pos <= severities_csv.size()) {
            std::size_t end = severities_csv.find(',', pos);
            if (end == std::string::npos) end = severities_csv.size();
            if (end > pos) {
                const int s = std::stoi(severities_csv.substr(pos, end - pos));
                if (s < 1 || s > 5) throw Error("corrupt: severity must be 1..5");
                severities.push_back(s);
            }
            pos = end + 1;
        }
    }
    if (kinds.empty() || severities.empty()) throw Error("corrupt: empty kind/severity list");

    const fs::path split = resolve_split(in, "test");
    const std::vector<DatasetEntry> index = read_index(split);
    json manifest = json::array();
    for (CorruptionKind kind : kinds) {
        for (int sev : severities) {
            const fs::path cell_dir =
                out / (std::string(to_string(kind)) + "_s" + std::to_string(sev));
            fs::create_directories(cell_dir);
            for (std::size_t ci = 0; ci < index.size(); ++ci) {
                CorruptionSpec spec;
                spec.kind = kind;
                spec.severity = sev;
                spec.seed = hash_seed(seed, hash_name(to_string(kind)),
                                      static_cast<std::uint64_t>(sev), ci);
                const PointCloud cloud = load_point_cloud(split / index[ci].path);
                const fs::path out_path = cell_dir / index[ci].path;
                save_point_cloud(out_path, corrupt(cloud, spec));
                manifest.push_back(json{{"cloud_id", ci},
                                        {"kind", to_string(kind)},
                                        {"severity", sev},
                                        {"seed", spec.seed},
                                        {"output_path", fs::relative(out_path, out).string()}});
            }
        }
    }
    atomic_write_file(out / "corrupt_manifest.json", manifest.dump(2) + "\n");
    std::printf("%s\n", (out / "corrupt_manifest.json").string().c_str());
    return kExitOk;
}

inline int cmd_train(const fs::path& data, const std::string& config_file, std::size_t epochs,
                     std::uint64_t seed, const fs::path& out_ckpt, std::size_t batch_size,
                     double lr, bool verbose) {
    const fs::path split = resolve_split(data, "train");
    const std::vector<PointCloud> clouds = load_dataset_split(split);
    if (clouds.empty()) throw IoError("train: empty dataset");

    ModelConfig cfg;
    if (!config_file.empty()) {
        cfg = model_config_from_json(json::parse(read_file(config_file)));
    } else {
        int max_label = 0;
        for (const auto& c : clouds) max_label = std::max(max_label, c.label);
        cfg = desk_config(static_cast<std::size_t>(max_label) + 1);
    }

    SetMixerModel model = SetMixerModel::init(cfg, seed);
    TrainOptions opt;
    opt.epochs = epochs;
    opt.batch_size = batch_size;
    opt.lr = lr;
    opt.seed = seed;
    opt.verbose = verbose;
    const TrainResult result = train_model(model, clouds, opt);

    save_checkpoint(out_ckpt, model, result.optimizer);
    const fs::path log_path = out_ckpt.string() + ".train_log.csv";
    atomic_write_file(log_path, epoch_log_csv(result.log));
    const fs::path manifest_path = out_ckpt.string() + ".manifest.json";
    write_run_manifest(manifest_path,
                       json{{"schema", "setmix-run-1"},
                            {"command", "train"},
                            {"config_hash", config_hash(cfg)},
                            {"dataset_hash", dataset_hash(split)},
                            {"seed", seed},
                            {"hyperparameters",
                             json{{"epochs", epochs},
                                  {"batch_size", batch_size},
                                  {"lr", lr},
                                  {"lr_decay", opt.lr_decay},
                                  {"decay_every", opt.decay_every},
                                  {"beta1", opt.beta1},
                                  {"beta2", opt.beta2},
                                  {"epsilon", opt.epsilon}}},
                            {"wall_seconds", result.wall_seconds},
                            {"metrics_paths", json::array({log_path.string()})}});
    if (!result.log.empty())
        std::printf("trained %zu epochs: loss %.4f acc %.4f\n", epochs, result.log.back().loss,
                    result.log.back().accuracy);
    std::printf("%s\n", out_ckpt.string().c_str());
    return kExitOk;
}

inline int cmd_eval(const fs::path& ckpt_path, const fs::path& data,
                    const std::string& corrupt_manifest, const fs::path& out,
                    double bm_clean, double bm_noise, const std::string& config_file) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    if (!config_file.empty()) {
        const ModelConfig requested = model_config_from_json(json::parse(read_file(config_file)));
        if (config_hash(requested) != ckpt.config_hash)
            throw ChecksumMismatchError("eval: checkpoint config hash " + ckpt.config_hash +
                                        " != requested config " + config_hash(requested));
    }
    const fs::path split = resolve_split(data, "test");
    const std::vector<PointCloud> clean = load_dataset_split(split);

    std::vector<CorruptedSet> cells;
    if (!corrupt_manifest.empty()) {
        const fs::path manifest_path(corrupt_manifest);
        const fs::path base = manifest_path.parent_path();
        const json manifest = json::parse(read_file(manifest_path));
        std::map<std::pair<std::string, int>, CorruptedSet> by_cell;
        for (const auto& entry : manifest) {
            const std::string kind = entry.at("kind");
            const int sev = entry.at("severity");
            auto& cell = by_cell[{kind, sev}];
            cell.kind = corruption_kind_from(kind);
            cell.severity = sev;
            const std::size_t cloud_id = entry.at("cloud_id");
            if (cell.clouds.size() != cloud_id)
                throw IoError("eval: corruption manifest out of order for " + kind);
            cell.clouds.push_back(
                load_point_cloud(base / std::string(entry.at("output_path"))));
        }
        for (auto& [key, cell] : by_cell) cells.push_back(std::move(cell));
    }

    const Classifier classify = model_classifier(ckpt.model);
    const MetricsReport report = benchmark(classify, clean, cells, {bm_clean, bm_noise});

    const fs::path manifest_path = out.string() + ".manifest.json";
    json rj = to_json(report);
    rj["manifest"] = manifest_path.string();
    atomic_write_file(out, rj.dump(2) + "\n");
    write_run_manifest(manifest_path, json{{"schema", "setmix-run-1"},
                                           {"command", "eval"},
                                           {"config_hash", ckpt.config_hash},
                                           {"dataset_hash", dataset_hash(split)},
                                           {"metrics_paths", json::array({out.string()})}});
    std::fputs(render_table(report, ckpt_path.filename().string()).c_str(), stdout);
    return kExitOk;
}

inline int cmd_gradcheck(const std::string& config_file, std::size_t trials, std::uint64_t seed) {
    ModelConfig cfg = config_file.empty()
                          ? desk_config()
                          : model_config_from_json(json::parse(read_file(config_file)));
    SetMixerModel model = SetMixerModel::init(cfg, seed);
    ModelGradcheckOptions opt;
    opt.trials = trials;
    opt.seed = seed;
    const GradcheckReport report = model_gradcheck(model, opt);
    std::printf("gradcheck: %zu coordinates + %zu probes, %zu kink-adjacent skipped\n",
                report.coords_checked, report.probes_checked, report.coords_skipped);
    std::printf("max relative error %.3e (param %s[%zu]: analytic %.9e vs fd %.9e)\n",
                report.max_rel_err, report.worst.param.c_str(), report.worst.index,
                report.worst.analytic, report.worst.fd);
    if (!report.pass(opt.tolerance)) {
        std::fprintf(stderr, "gradcheck FAILED (tolerance %.1e)\n", opt.tolerance);
        return kExitVerify;
    }
    std::printf("gradcheck passed (tolerance %.1e)\n", opt.tolerance);
    return kExitOk;
}

inline int cmd_feature_diff(const fs::path& ckpt_path, const fs::path& clean_file,
                            const fs::path& corrupted_file, std::size_t level,
                            const fs::path& out) {
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    const PointCloud clean = load_point_cloud(clean_file);
    const PointCloud corrupted = load_point_cloud(corrupted_file);
    const auto rows = feature_diff(ckpt.model, clean, corrupted, level);
    atomic_write_file(out, feature_diff_csv(rows));
    std::printf("%s\n", out.string().c_str());
    return kExitOk;
}

inline int run(int argc, const char* const* argv) {
    CLI::App app{"Set-Mixer: noise-robust point-set aggregation at desk scale"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic shape dataset");
    std::string families = "all";
    std::size_t train_per_class = 200, test_per_class = 50, points = 512;
    std::uint64_t gen_seed = 7;
    std::string gen_out;
    double jitter = 0.02;
    bool no_scale = false, no_rotate = false;
    gen->add_option("--families", families, "comma list or 'all'");
    gen->add_option("--train-per-class", train_per_class);
    gen->add_option("--test-per-class", test_per_class);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--points", points);
    gen->add_option("--jitter", jitter);
    gen->add_flag("--no-scale", no_scale, "disable random anisotropic scaling");
    gen->add_flag("--no-rotate", no_rotate, "disable random z rotation");

    // corrupt
    auto* cor = app.add_subcommand("corrupt", "write corrupted copies of a test split");
    std::string cor_in, cor_kinds = "all", cor_sev = "all", cor_out;
    std::uint64_t cor_seed = 7;
    cor->add_option("--in", cor_in, "dataset dir (or test split dir)")
        ->required()
        ->check(CLI::ExistingDirectory);
    cor->add_option("--kinds", cor_kinds, "comma list or 'all'");
    cor->add_option("--severities", cor_sev, "comma list or 'all'");
    cor->add_option("--seed", cor_seed);
    cor->add_option("--out", cor_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a clean dataset");
    std::string tr_data, tr_config, tr_out;
    std::size_t tr_epochs = 30, tr_batch = 16;
    std::uint64_t tr_seed = 1;
    double tr_lr = 1e-3;
    bool tr_verbose = false;
    tr->add_option("--data", tr_data)->required()->check(CLI::ExistingDirectory);
    tr->add_option("--config", tr_config)->check(CLI::ExistingFile);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--batch", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_flag("--verbose", tr_verbose);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint; writes a metrics report");
    std::string ev_ckpt, ev_data, ev_manifest, ev_out = "report.json", ev_config;
    double bm_clean = 0.070, bm_noise = 0.215;
    ev->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", ev_data)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--corrupt-manifest", ev_manifest)->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out);
    ev->add_option("--bm-clean", bm_clean, "baseline clean error (fraction)");
    ev->add_option("--bm-noise", bm_noise, "baseline noise error (fraction)");
    ev->add_option("--config", ev_config, "verify checkpoint against this config")
        ->check(CLI::ExistingFile);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_config;
    std::size_t gc_trials = 5;
    std::uint64_t gc_seed = 0xC0FFEEull;
    gc->add_option("--config", gc_config)->check(CLI::ExistingFile);
    gc->add_option("--trials", gc_trials);
    gc->add_option("--seed", gc_seed);

    // feature-diff
    auto* fd = app.add_subcommand("feature-diff", "per-set feature change magnitudes (CSV)");
    std::string fd_ckpt, fd_clean, fd_corrupted, fd_out;
    std::size_t fd_level = 2;
    fd->add_option("--ckpt", fd_ckpt)->required()->check(CLI::ExistingFile);
    fd->add_option("--clean", fd_clean)->required()->check(CLI::ExistingFile);
    fd->add_option("--corrupted", fd_corrupted)->required()->check(CLI::ExistingFile);
    fd->add_option("--level", fd_level);
    fd->add_option("--out", fd_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints help/usage message
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(families, train_per_class, test_per_class, gen_seed, gen_out,
                                points, jitter, no_scale, no_rotate);
        if (cor->parsed()) return cmd_corrupt(cor_in, cor_kinds, cor_sev, cor_seed, cor_out);
        if (tr->parsed())
            return cmd_train(tr_data, tr_config, tr_epochs, tr_seed, tr_out, tr_batch, tr_lr,
                             tr_verbose);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_data, ev_manifest, ev_out, bm_clean, bm_noise, ev_config);
        if (gc->parsed()) return cmd_gradcheck(gc_config, gc_trials, gc_seed);
        if (fd->parsed()) return cmd_feature_diff(fd_ckpt, fd_clean, fd_corrupted, fd_level, fd_out);
    } catch (const ChecksumMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitVerify;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace setmix::cli
