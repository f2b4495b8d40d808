#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "c2f/data.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path = fs::temp_directory_path() / ("c2f_cli_" + std::to_string(rng()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string cli_path() {
    if (const char* env = std::getenv("C2F_CLI")) return env;
    // The test binary sits next to the c2f executable in the build tree.
    return (fs::read_symlink("/proc/self/exe").parent_path() / "c2f").string();
}

struct RunResult {
    int code;
    std::string out;
};

RunResult run(const std::string& args) {
    static std::mt19937_64 rng(std::random_device{}());
    const fs::path cap = fs::temp_directory_path() / ("c2f_out_" + std::to_string(rng()));
    const std::string cmd = cli_path() + " " + args + " >" + cap.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(cap);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    fs::remove(cap);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

void write_tiny_config(const std::string& path, int epochs = 2) {
    std::ofstream out(path);
    out << "model.enc_widths = 8,8,8,4,4,4,4\n"
        << "model.dec_width = 4\n"
        << "model.tpp_windows = 2,3\n"
        << "model.mlp_hidden = 8\n"
        << "train.learning_rate = 0.002\n"
        << "train.batch_size = 4\n"
        << "train.epochs = " << epochs << "\n"
        << "train.w0 = 2\n"
        << "train.seed = 7\n"
        << "synth.num_videos = 5\n"
        << "synth.num_classes = 4\n"
        << "synth.num_activities = 2\n"
        << "synth.d = 8\n"
        << "synth.t_min = 40\n"
        << "synth.t_max = 56\n"
        << "synth.seed = 5\n";
}

// One synth + short train shared across the read-only CLI cases below.
struct Workspace {
    TempDir dir;
    std::string cfg, data, train_out;
    Workspace() {
        cfg = dir.file("tiny.cfg");
        write_tiny_config(cfg);
        data = dir.file("data");
        train_out = dir.file("run");
        REQUIRE(run("synth --config " + cfg + " --out " + data).code == 0);
        REQUIRE(run("train --config " + cfg + " --data " + data + " --out " + train_out).code == 0);
    }
    std::string checkpoint() const { return train_out + "/checkpoint.bin"; }
};

Workspace& shared_workspace() {
    static Workspace ws;
    return ws;
}

}  // namespace

TEST_CASE("cli: synth writes a loadable dataset and manifest") {
    auto& ws = shared_workspace();
    const c2f::Dataset ds = c2f::load_dataset(ws.data);
    CHECK(ds.videos.size() == 5);
    CHECK(ds.mapping.size() == 4);
    CHECK(ds.num_activities == 2);
    CHECK(ds.mapping.names[0] == "action0");

    const std::string manifest = slurp(ws.data + "/manifest.json");
    CHECK(manifest.find("\"command\": \"synth\"") != std::string::npos);
    CHECK(manifest.find("fnv1a64") != std::string::npos);
    CHECK(manifest.find("mapping.txt") != std::string::npos);

    SUBCASE("identical settings reproduce the dataset bit for bit") {
        TempDir other;
        REQUIRE(run("synth --config " + ws.cfg + " --out " + other.file("d")).code == 0);
        for (const auto& v : ds.videos)
            CHECK(slurp(other.file("d") + "/features/" + v.id + ".bin") ==
                  slurp(ws.data + "/features/" + v.id + ".bin"));
        CHECK(slurp(other.file("d") + "/manifest.json") == slurp(ws.data + "/manifest.json"));
    }
}

TEST_CASE("cli: train logs every epoch and reruns bit-identically") {
    auto& ws = shared_workspace();
    const std::string log = slurp(ws.train_out + "/loss_log.txt");
    CHECK(count_lines(log) == 3);  // header + 2 epochs
    CHECK(log.rfind("# epoch total ce tr al skipped\n", 0) == 0);

    TempDir other;
    REQUIRE(run("train --config " + ws.cfg + " --data " + ws.data + " --out " + other.file("r"))
                .code == 0);
    CHECK(slurp(other.file("r") + "/loss_log.txt") == log);
    CHECK(slurp(other.file("r") + "/checkpoint.bin") == slurp(ws.checkpoint()));
    CHECK(slurp(other.file("r") + "/manifest.json") == slurp(ws.train_out + "/manifest.json"));
}

TEST_CASE("cli: train honors --set overrides and --seed shadowing") {
    auto& ws = shared_workspace();
    TempDir out;
    REQUIRE(run("train --config " + ws.cfg + " --data " + ws.data + " --out " + out.file("a") +
                " --set train.epochs=1")
                .code == 0);
    CHECK(count_lines(slurp(out.file("a") + "/loss_log.txt")) == 2);

    REQUIRE(run("train --config " + ws.cfg + " --data " + ws.data + " --out " + out.file("b") +
                " --set train.epochs=1 --seed 99")
                .code == 0);
    const std::string manifest = slurp(out.file("b") + "/manifest.json");
    CHECK(manifest.find("\"train.seed\": \"99\"") != std::string::npos);
    // A different seed initializes different parameters.
    CHECK(slurp(out.file("a") + "/checkpoint.bin") != slurp(out.file("b") + "/checkpoint.bin"));
}

TEST_CASE("cli: train with eval_every emits interim checkpoints and a metrics log") {
    auto& ws = shared_workspace();
    TempDir out;
    REQUIRE(run("train --config " + ws.cfg + " --data " + ws.data + " --out " + out.file("r") +
                " --set train.epochs=3 --set train.eval_every=1")
                .code == 0);
    CHECK(fs::exists(out.file("r") + "/checkpoint_0001.bin"));
    CHECK(fs::exists(out.file("r") + "/checkpoint_0002.bin"));
    CHECK_FALSE(fs::exists(out.file("r") + "/checkpoint_0003.bin"));  // final epoch -> checkpoint.bin
    const std::string metrics = slurp(out.file("r") + "/metrics_log.txt");
    CHECK(count_lines(metrics) == 3);  // header + epochs 1, 2
    CHECK(metrics.rfind("# epoch mof edit f1_10 f1_25 f1_50\n", 0) == 0);
}

TEST_CASE("cli: eval writes report, calibration, entropy and segment dumps") {
    auto& ws = shared_workspace();
    TempDir out;
    const auto r = run("eval --config " + ws.cfg + " --data " + ws.data + " --model " +
                       ws.checkpoint() + " --out " + out.file("e") + " --per-layer");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("mof") != std::string::npos);

    const std::string report = slurp(out.file("e") + "/report.txt");
    CHECK(report.rfind("videos 5\n", 0) == 0);
    for (const char* key : {"mof ", "edit ", "f1_10 ", "f1_25 ", "f1_50 ", "wrong_count ",
                            "wrong_entropy_mean ", "per_video"})
        CHECK(report.find(key) != std::string::npos);

    const std::string calib = slurp(out.file("e") + "/calibration.txt");
    CHECK(calib.find("ece ") != std::string::npos);

    // Entropy series has one line per wrongly predicted frame.
    std::istringstream rs(report);
    std::string word;
    long long wrong_count = -1;
    while (rs >> word)
        if (word == "wrong_count") rs >> wrong_count;
    REQUIRE(wrong_count >= 0);
    CHECK(count_lines(slurp(out.file("e") + "/entropy.txt")) == wrong_count + 1);  // + header

    const std::string per_layer = slurp(out.file("e") + "/per_layer.txt");
    CHECK(count_lines(per_layer) == 7);  // header + six decoder layers

    const c2f::Dataset ds = c2f::load_dataset(ws.data);
    for (const auto& v : ds.videos) {
        const std::string seg = slurp(out.file("e") + "/segments/" + v.id + ".txt");
        // Segment dumps cover the whole video: last line ends at T.
        std::istringstream ss(seg);
        std::string line, last;
        while (std::getline(ss, line))
            if (!line.empty() && line[0] != '#') last = line;
        std::istringstream ls(last);
        long long start = 0, end = 0;
        std::string name;
        REQUIRE((ls >> start >> end >> name));
        CHECK(end == v.features.rows);
        CHECK(ds.mapping.index.count(name) == 1);
    }
}

TEST_CASE("cli: predict dumps per-frame lines and calibrate reproduces eval bitwise") {
    auto& ws = shared_workspace();
    TempDir out;
    REQUIRE(run("predict --config " + ws.cfg + " --data " + ws.data + " --model " +
                ws.checkpoint() + " --out " + out.file("p"))
                .code == 0);
    const c2f::Dataset ds = c2f::load_dataset(ws.data);
    for (const auto& v : ds.videos) {
        const std::string dump = slurp(out.file("p") + "/predictions/" + v.id + ".txt");
        CHECK(count_lines(dump) == v.features.rows);
        std::istringstream ss(dump);
        long long frame = 0;
        std::string name;
        double conf = 0.0;
        REQUIRE((ss >> frame >> name >> conf));
        CHECK(frame == 0);
        CHECK(ds.mapping.index.count(name) == 1);
        CHECK(conf > 0.0);
        CHECK(conf <= 1.0);
    }

    REQUIRE(run("eval --config " + ws.cfg + " --data " + ws.data + " --model " + ws.checkpoint() +
                " --out " + out.file("e"))
                .code == 0);
    REQUIRE(run("calibrate --config " + ws.cfg + " --data " + ws.data + " --pred " +
                out.file("p") + "/predictions --out " + out.file("c"))
                .code == 0);
    // Dumps round-trip confidences exactly, so the recomputed curve matches.
    CHECK(slurp(out.file("c") + "/calibration.txt") == slurp(out.file("e") + "/calibration.txt"));
}

TEST_CASE("cli: --no-test-augment switches to single-window inference") {
    auto& ws = shared_workspace();
    TempDir out;
    REQUIRE(run("eval --config " + ws.cfg + " --data " + ws.data + " --model " + ws.checkpoint() +
                " --out " + out.file("plain") + " --no-test-augment")
                .code == 0);
    REQUIRE(run("eval --config " + ws.cfg + " --data " + ws.data + " --model " + ws.checkpoint() +
                " --out " + out.file("aug"))
                .code == 0);
    const std::string manifest = slurp(out.file("plain") + "/manifest.json");
    CHECK(manifest.find("\"train.test_augment\": \"false\"") != std::string::npos);
    CHECK(slurp(out.file("plain") + "/report.txt") != slurp(out.file("aug") + "/report.txt"));
}

TEST_CASE("cli: distinct exit codes per failure class") {
    auto& ws = shared_workspace();
    TempDir out;

    SUBCASE("success is 0") {
        CHECK(run("synth --config " + ws.cfg + " --out " + out.file("d")).code == 0);
    }
    SUBCASE("usage errors are 2") {
        CHECK(run("train --bogus-flag").code == 2);
        CHECK(run("").code == 2);               // missing subcommand
        CHECK(run("notacommand").code == 2);
        CHECK(run("train --data d").code == 2);  // missing required --out
    }
    SUBCASE("missing files are 3") {
        CHECK(run("train --config " + out.file("nope.cfg") + " --data " + ws.data + " --out " +
                  out.file("r"))
                  .code == 3);
        CHECK(run("train --config " + ws.cfg + " --data " + out.file("nodata") + " --out " +
                  out.file("r"))
                  .code == 3);
        CHECK(run("eval --config " + ws.cfg + " --data " + ws.data + " --model " +
                  out.file("no.bin") + " --out " + out.file("r"))
                  .code == 3);
    }
    SUBCASE("config errors are 4") {
        std::ofstream(out.file("unk.cfg")) << "bogus.key = 1\n";
        const auto r = run("train --config " + out.file("unk.cfg") + " --data " + ws.data +
                           " --out " + out.file("r"));
        CHECK(r.code == 4);
        CHECK(r.out.find("unknown key 'bogus.key'") != std::string::npos);
        CHECK(run("train --config " + ws.cfg + " --set train.w0=1 --data " + ws.data + " --out " +
                  out.file("r2"))
                  .code == 4);
    }
    SUBCASE("malformed data is 5") {
        std::ofstream(out.file("dup.cfg")) << "train.epochs = 1\ntrain.epochs = 2\n";
        const auto r = run("train --config " + out.file("dup.cfg") + " --data " + ws.data +
                           " --out " + out.file("r"));
        CHECK(r.code == 5);
        CHECK(r.out.find("duplicate key") != std::string::npos);

        fs::create_directories(out.file("bad/features"));
        fs::create_directories(out.file("bad/labels"));
        std::ofstream(out.file("bad/features/v.bin"), std::ios::binary) << "XXXX";
        std::ofstream(out.file("bad/labels/v.txt")) << "action0\n";
        fs::copy_file(ws.data + "/mapping.txt", out.file("bad/mapping.txt"));
        std::ofstream(out.file("bad/activities.txt")) << "v 0\n";
        CHECK(run("train --config " + ws.cfg + " --data " + out.file("bad") + " --out " +
                  out.file("r3"))
                  .code == 5);
    }
    SUBCASE("help is 0") {
        const auto r = run("--help");
        CHECK(r.code == 0);
        CHECK(r.out.find("synth") != std::string::npos);
        CHECK(r.out.find("gradcheck") != std::string::npos);
    }
}

TEST_CASE("cli: gradcheck reports a max relative error below 1e-4 and exits 0") {
    const auto r = run("gradcheck --seed 3");
    CHECK(r.code == 0);
    const std::string needle = "max relative error: ";
    const auto pos = r.out.find(needle);
    REQUIRE(pos != std::string::npos);
    const double max_rel = std::strtod(r.out.c_str() + pos + needle.size(), nullptr);
    CHECK(max_rel < 1e-4);
    CHECK(r.out.find("joint_e2e") != std::string::npos);
    CHECK(r.out.find("recognition_e2e") != std::string::npos);
}
