#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "c2f/data.hpp"
#include "c2f/gradsuite.hpp"
#include "c2f/metrics.hpp"
#include "c2f/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 1 check failure, 2 usage, 3 missing file, 4 bad config,
// 5 malformed data or invalid values.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitConfig = 4;
constexpr int kExitData = 5;

struct Options {
    std::string config, data, out, model, pred;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool per_layer = false;
    bool no_test_augment = false;
};

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw c2f::FormatError(path.string() + ": cannot open file");
    std::uint64_t h = 14695981039346656037ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(chunk[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

void require_exists(const std::string& what, const fs::path& p) {
    if (!fs::exists(p))
        throw std::system_error(std::make_error_code(std::errc::no_such_file_or_directory),
                                what + " '" + p.string() + "'");
}

std::map<std::string, std::string> resolve_settings(const Options& opt,
                                                    const std::string& seed_key) {
    std::map<std::string, std::string> kv;
    if (!opt.config.empty()) {
        require_exists("config file", opt.config);
        kv = c2f::parse_kv_file(opt.config);
    }
    for (const auto& s : opt.sets)
        for (const auto& [k, v] : c2f::parse_kv_line(s)) kv[k] = v;  // overrides shadow the file
    if (opt.seed_given) kv[seed_key] = std::to_string(opt.seed);
    if (opt.no_test_augment) kv["train.test_augment"] = "false";
    return kv;
}

void write_text_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    out << body;
    if (!out) throw c2f::FormatError(p.string() + ": write failed");
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::map<std::string, std::string>& settings,
                    const std::map<std::string, std::string>& inputs,
                    const std::vector<fs::path>& artifacts) {
    json m;
    m["command"] = command;
    m["settings"] = settings;
    m["inputs"] = inputs;
    json arts = json::object();
    for (const auto& p : artifacts) {
        char hex[32];
        std::snprintf(hex, sizeof hex, "0x%016" PRIx64, fnv1a_file(p));
        json entry;
        entry["fnv1a64"] = hex;
        entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(p));
        arts[fs::relative(p, out_dir).generic_string()] = entry;
    }
    m["artifacts"] = arts;
    write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

std::string report_text(const c2f::EvalReport& rep) {
    std::string s;
    s += "videos " + std::to_string(rep.videos.size()) + "\n";
    s += "mof " + fmt(rep.mof) + "\n";
    s += "edit " + fmt(rep.edit) + "\n";
    s += "f1_10 " + fmt(rep.f1_10) + "\n";
    s += "f1_25 " + fmt(rep.f1_25) + "\n";
    s += "f1_50 " + fmt(rep.f1_50) + "\n";
    s += "wrong_count " + std::to_string(rep.wrong_count) + "\n";
    s += "wrong_entropy_mean " + fmt(rep.wrong_entropy_mean) + "\n";
    s += "per_video\n";
    for (const auto& v : rep.videos)
        s += v.id + " " + fmt(v.mof) + " " + fmt(v.edit) + " " + fmt(v.f1_10) + " " +
             fmt(v.f1_25) + " " + fmt(v.f1_50) + "\n";
    return s;
}

std::string calibration_text(const std::vector<c2f::CalibrationBin>& bins) {
    std::string s = "# lo hi count accuracy mean_confidence\n";
    for (const auto& b : bins)
        s += fmt(b.lo) + " " + fmt(b.hi) + " " + std::to_string(b.count) + " " + fmt(b.accuracy) +
             " " + fmt(b.mean_confidence) + "\n";
    s += "# diff series: midpoint accuracy-midpoint\n";
    for (const auto& [mid, diff] : c2f::calibration_diff_series(bins))
        s += fmt(mid) + " " + fmt(diff) + "\n";
    double ece = 0.0;
    long long total = 0;
    for (const auto& b : bins) total += b.count;
    for (const auto& b : bins)
        if (b.count > 0 && total > 0)
            ece += static_cast<double>(b.count) / static_cast<double>(total) *
                   std::abs(b.accuracy - b.mean_confidence);
    s += "ece " + fmt(ece) + "\n";
    return s;
}

int cmd_synth(const Options& opt) {
    const auto kv = resolve_settings(opt, "synth.seed");
    c2f::ModelConfig mc;
    c2f::TrainConfig tc;
    c2f::SyntheticSpec sp;
    c2f::apply_settings(kv, mc, tc, sp);
    // Rebuild subsets and means in case class/activity counts changed.
    c2f::SyntheticSpec base =
        c2f::default_synthetic_spec(sp.num_videos, sp.num_classes, sp.num_activities, sp.d, sp.seed);
    base.t_min = sp.t_min;
    base.t_max = sp.t_max;
    base.actions_min = sp.actions_min;
    base.actions_max = sp.actions_max;
    base.noise_scale = sp.noise_scale;

    const auto records = c2f::make_synthetic(base);
    c2f::ClassMapping mapping;
    for (int c = 0; c < base.num_classes; ++c) {
        mapping.names.push_back("action" + std::to_string(c));
        mapping.index[mapping.names.back()] = c;
    }
    fs::create_directories(opt.out);
    c2f::write_dataset(opt.out, records, mapping);

    std::vector<fs::path> artifacts = {fs::path(opt.out) / "mapping.txt",
                                       fs::path(opt.out) / "activities.txt"};
    for (const auto& r : records) {
        artifacts.push_back(fs::path(opt.out) / "features" / (r.id + ".bin"));
        artifacts.push_back(fs::path(opt.out) / "labels" / (r.id + ".txt"));
    }
    write_manifest(opt.out, "synth", kv, {}, artifacts);
    std::printf("wrote %zu videos to %s\n", records.size(), opt.out.c_str());
    return kExitOk;
}

// Dataset + configs shared by train/eval/predict.
struct LoadedRun {
    c2f::Dataset ds;
    c2f::ModelConfig mc;
    c2f::TrainConfig tc;
    std::map<std::string, std::string> kv;
};

LoadedRun load_run(const Options& opt) {
    LoadedRun run;
    run.kv = resolve_settings(opt, "train.seed");
    require_exists("dataset directory", opt.data);
    c2f::SyntheticSpec sp;
    c2f::apply_settings(run.kv, run.mc, run.tc, sp);
    run.ds = c2f::load_dataset(opt.data);
    run.mc.d_in = run.ds.videos.front().features.cols;
    run.mc.num_classes = run.ds.mapping.size();
    run.mc.num_activities = run.ds.num_activities;
    return run;
}

int cmd_train(const Options& opt) {
    LoadedRun run = load_run(opt);
    run.mc.validate();
    run.tc.validate();
    fs::create_directories(opt.out);

    c2f::ModelParams params(run.mc, run.tc.seed);
    std::string loss_log = "# epoch total ce tr al skipped\n";
    std::vector<fs::path> artifacts;
    std::string metrics_log = "# epoch mof edit f1_10 f1_25 f1_50\n";

    c2f::AdamState adam(params.parameters());
    std::mt19937_64 rng(run.tc.seed + 0x9e3779b97f4a7c15ULL);
    for (int e = 0; e < run.tc.epochs; ++e) {
        const auto stats = c2f::train_epoch(params, run.ds.videos, run.tc, adam, rng);
        loss_log += std::to_string(e) + " " + fmt(stats.total) + " " + fmt(stats.ce) + " " +
                    fmt(stats.tr) + " " + fmt(stats.al) + " " +
                    std::to_string(stats.skipped_steps) + "\n";
        const bool interim = run.tc.eval_every > 0 && (e + 1) % run.tc.eval_every == 0;
        if (interim && e + 1 < run.tc.epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_%04d.bin", e + 1);
            const fs::path ckpt = fs::path(opt.out) / name;
            c2f::save_checkpoint(ckpt.string(), params);
            artifacts.push_back(ckpt);
            const auto rep = c2f::evaluate(params, run.ds.videos, run.tc, run.tc.ensemble());
            metrics_log += std::to_string(e + 1) + " " + fmt(rep.mof) + " " + fmt(rep.edit) +
                           " " + fmt(rep.f1_10) + " " + fmt(rep.f1_25) + " " + fmt(rep.f1_50) +
                           "\n";
        }
    }

    const fs::path final_ckpt = fs::path(opt.out) / "checkpoint.bin";
    c2f::save_checkpoint(final_ckpt.string(), params);
    artifacts.push_back(final_ckpt);
    const fs::path log_path = fs::path(opt.out) / "loss_log.txt";
    write_text_file(log_path, loss_log);
    artifacts.push_back(log_path);
    if (run.tc.eval_every > 0) {
        const fs::path mpath = fs::path(opt.out) / "metrics_log.txt";
        write_text_file(mpath, metrics_log);
        artifacts.push_back(mpath);
    }
    write_manifest(opt.out, "train", run.kv, {{"data", opt.data}}, artifacts);
    std::printf("trained %d epochs on %zu videos; checkpoint at %s\n", run.tc.epochs,
                run.ds.videos.size(), final_ckpt.string().c_str());
    return kExitOk;
}

int cmd_eval(const Options& opt) {
    LoadedRun run = load_run(opt);
    require_exists("checkpoint", opt.model);
    c2f::ModelParams params = c2f::load_checkpoint(opt.model);
    run.tc.validate();
    fs::create_directories(opt.out);
    std::vector<fs::path> artifacts;

    const auto rep = c2f::evaluate(params, run.ds.videos, run.tc, run.tc.ensemble());
    const fs::path report_path = fs::path(opt.out) / "report.txt";
    write_text_file(report_path, report_text(rep));
    artifacts.push_back(report_path);

    const fs::path calib_path = fs::path(opt.out) / "calibration.txt";
    write_text_file(calib_path, calibration_text(rep.calibration));
    artifacts.push_back(calib_path);

    std::string entropy = "# entropy (nats) of each wrongly predicted frame, pooled\n";
    for (double h : rep.wrong_entropies) entropy += fmt(h) + "\n";
    const fs::path entropy_path = fs::path(opt.out) / "entropy.txt";
    write_text_file(entropy_path, entropy);
    artifacts.push_back(entropy_path);

    fs::create_directories(fs::path(opt.out) / "segments");
    for (const auto& v : rep.videos) {
        std::string seg = "# start end label\n";
        for (const auto& s : c2f::to_segments(v.prediction.labels))
            seg += std::to_string(s.start) + " " + std::to_string(s.end) + " " +
                   run.ds.mapping.names[static_cast<size_t>(s.label)] + "\n";
        const fs::path p = fs::path(opt.out) / "segments" / (v.id + ".txt");
        write_text_file(p, seg);
        artifacts.push_back(p);
    }

    if (opt.per_layer) {
        const auto layers = c2f::evaluate_per_layer(params, run.ds.videos, run.tc);
        std::string t = "# layer mof edit f1_10 f1_25 f1_50\n";
        for (size_t i = 0; i < layers.size(); ++i)
            t += std::to_string(i + 1) + " " + fmt(layers[i].mof) + " " + fmt(layers[i].edit) +
                 " " + fmt(layers[i].f1_10) + " " + fmt(layers[i].f1_25) + " " +
                 fmt(layers[i].f1_50) + "\n";
        const fs::path p = fs::path(opt.out) / "per_layer.txt";
        write_text_file(p, t);
        artifacts.push_back(p);
    }

    write_manifest(opt.out, "eval", run.kv, {{"data", opt.data}, {"model", opt.model}}, artifacts);
    std::printf("mof %.2f edit %.2f f1@10 %.2f f1@25 %.2f f1@50 %.2f (%zu videos)\n", rep.mof,
                rep.edit, rep.f1_10, rep.f1_25, rep.f1_50, rep.videos.size());
    return kExitOk;
}

int cmd_predict(const Options& opt) {
    LoadedRun run = load_run(opt);
    require_exists("checkpoint", opt.model);
    c2f::ModelParams params = c2f::load_checkpoint(opt.model);
    run.tc.validate();
    fs::create_directories(fs::path(opt.out) / "predictions");
    std::vector<fs::path> artifacts;

    for (const auto& v : run.ds.videos) {
        const c2f::Matrix p = c2f::infer_probs(params, v.features, run.tc, run.tc.ensemble());
        const auto pred = c2f::predict_labels(p);
        std::string body;
        for (size_t t = 0; t < pred.labels.size(); ++t)
            body += std::to_string(t) + " " +
                    run.ds.mapping.names[static_cast<size_t>(pred.labels[t])] + " " +
                    fmt(pred.confidence[t]) + "\n";
        const fs::path path = fs::path(opt.out) / "predictions" / (v.id + ".txt");
        write_text_file(path, body);
        artifacts.push_back(path);
    }
    write_manifest(opt.out, "predict", run.kv, {{"data", opt.data}, {"model", opt.model}},
                   artifacts);
    std::printf("wrote predictions for %zu videos\n", run.ds.videos.size());
    return kExitOk;
}

int cmd_calibrate(const Options& opt) {
    const auto kv = resolve_settings(opt, "train.seed");
    require_exists("dataset directory", opt.data);
    require_exists("prediction directory", opt.pred);
    c2f::ModelConfig mc;
    c2f::TrainConfig tc;
    c2f::SyntheticSpec sp;
    c2f::apply_settings(kv, mc, tc, sp);
    tc.validate();
    const c2f::Dataset ds = c2f::load_dataset(opt.data);

    std::vector<double> confidences;
    std::vector<bool> correct;
    for (const auto& v : ds.videos) {
        const fs::path p = fs::path(opt.pred) / (v.id + ".txt");
        require_exists("prediction dump", p);
        std::ifstream in(p);
        std::string line;
        int lineno = 0;
        size_t frame = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            std::string idx_tok, name;
            double conf = 0.0;
            if (!(ss >> idx_tok >> name >> conf))
                throw c2f::FormatError(p.string() + ":" + std::to_string(lineno) +
                                       ": expected 'frame label confidence'");
            const auto it = ds.mapping.index.find(name);
            if (it == ds.mapping.index.end())
                throw c2f::FormatError(p.string() + ":" + std::to_string(lineno) +
                                       ": unknown action '" + name + "'");
            const int label = it->second;
            if (frame >= v.frame_labels.size())
                throw c2f::FormatError(p.string() + ": more frames than the video has");
            confidences.push_back(conf);
            correct.push_back(label == v.frame_labels[frame]);
            ++frame;
        }
        if (frame != v.frame_labels.size())
            throw c2f::FormatError(p.string() + ": expected " +
                                   std::to_string(v.frame_labels.size()) + " frames, got " +
                                   std::to_string(frame));
    }
    const auto bins = c2f::calibration_curve(confidences, correct, tc.calibration_bins);
    fs::create_directories(opt.out);
    const fs::path out_path = fs::path(opt.out) / "calibration.txt";
    write_text_file(out_path, calibration_text(bins));
    write_manifest(opt.out, "calibrate", kv, {{"data", opt.data}, {"pred", opt.pred}},
                   {out_path});
    std::printf("calibration over %zu frames written to %s\n", confidences.size(),
                out_path.string().c_str());
    return kExitOk;
}

int cmd_gradcheck(const Options& opt) {
    const auto res = c2f::run_gradient_suite(100, 3, opt.seed_given ? opt.seed : 0);
    for (const auto& op : res.ops)
        std::printf("%-18s trials %-4d rerolls %-2d max_rel %.3e %s\n", op.name.c_str(), op.trials,
                    op.rerolls, op.max_rel_err, op.ok ? "ok" : "FAIL");
    std::printf("max relative error: %.6e over %d trials\n", res.max_rel_err, res.total_trials);
    return res.ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-to-fine temporal convolutional network for action segmentation"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* cmd, bool needs_data, bool needs_model, bool needs_pred) {
        cmd->add_option("--config", opt.config, "key = value settings file");
        cmd->add_option("--set", opt.sets, "override one setting, e.g. --set train.epochs=5");
        cmd->add_option("--seed", opt.seed, "seed overriding the config file");
        if (needs_data) cmd->add_option("--data", opt.data, "dataset directory")->required();
        if (needs_model) cmd->add_option("--model", opt.model, "checkpoint file")->required();
        if (needs_pred)
            cmd->add_option("--pred", opt.pred, "directory of prediction dumps")->required();
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, false, false, false);
    synth->add_option("--out", opt.out, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, true, false, false);
    train->add_option("--out", opt.out, "output directory")->required();
    train->add_flag("--no-test-augment", opt.no_test_augment,
                    "single-window inference during interim evaluations");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, true, true, false);
    eval->add_option("--out", opt.out, "output directory")->required();
    eval->add_flag("--per-layer", opt.per_layer, "score each decoder layer separately");
    eval->add_flag("--no-test-augment", opt.no_test_augment, "single-window inference at w0");

    auto* predict = app.add_subcommand("predict", "dump per-frame predictions");
    add_common(predict, true, true, false);
    predict->add_option("--out", opt.out, "output directory")->required();
    predict->add_flag("--no-test-augment", opt.no_test_augment, "single-window inference at w0");

    auto* calibrate = app.add_subcommand("calibrate", "recompute calibration from a dump");
    add_common(calibrate, true, false, true);
    calibrate->add_option("--out", opt.out, "output directory")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seed", opt.seed, "suite seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    for (auto* sub : {synth, train, eval, predict, calibrate, gradcheck})
        if (sub->parsed() && sub->count("--seed") > 0) opt.seed_given = true;

    try {
        if (synth->parsed()) return cmd_synth(opt);
        if (train->parsed()) return cmd_train(opt);
        if (eval->parsed()) return cmd_eval(opt);
        if (predict->parsed()) return cmd_predict(opt);
        if (calibrate->parsed()) return cmd_calibrate(opt);
        if (gradcheck->parsed()) return cmd_gradcheck(opt);
    } catch (const std::system_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMissingFile;
    } catch (const c2f::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const c2f::FormatError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const c2f::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitData;
    } catch (const c2f::ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}
