#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "h3gnn/checkpoint.hpp"
#include "h3gnn/encoder.hpp"
#include "h3gnn/config.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace h3gnn;

namespace {

#ifndef H3GNN_CLI_PATH
#error "H3GNN_CLI_PATH must point at the built binary"
#endif

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("h3gnn_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(H3GNN_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    if (output) *output = out;
    return WEXITSTATUS(status);
}

const std::string kTinyModel =
    " --set model.token_dim=16 --set model.heads=2 --set model.wgcn_hidden=8"
    " --set train.warmup_epochs=2 --set train.epochs=6 --set probe.epochs=40"
    " --set eval.val_size=40";

}  // namespace

TEST_CASE("usage errors exit 2, integrity failures exit 3") {
    TempDir tmp;
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("train --dataset synth") == 2);  // --out is required
    std::string out;
    CHECK(run("train --dataset cornell --out " + (tmp.path / "x").string() +
                  " --data-dir " + (tmp.path / "none").string(),
              &out) == 3);
    CHECK(out.find("prepare") != std::string::npos);  // points at the fix
    CHECK(run("train --dataset synth --out " + (tmp.path / "y").string() +
              " --set no.such=1") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("prepare validates, reports, and is idempotent") {
    TempDir tmp;
    test_support::write_texas_shaped_dataset(tmp.path / "texas");
    std::string out1, out2;
    CHECK(run("prepare texas --data-dir " + tmp.path.string(), &out1) == 0);
    CHECK(out1.find("nodes: 183 expected=183  OK") != std::string::npos);
    CHECK(run("prepare texas --data-dir " + tmp.path.string(), &out2) == 0);
    CHECK(fs::exists(tmp.path / "texas" / "manifest.txt"));
    auto m1 = KeyValue::parse_file((tmp.path / "texas" / "manifest.txt").string());
    CHECK(m1.get_int("nodes") == 183);

    // corrupt a file: prepare fails with a named check and exit 3
    std::ofstream(tmp.path / "texas" / "nodes.txt", std::ios::app)
        << "183\t0\t0\n";  // node count now off
    std::string out3;
    CHECK(run("prepare texas --data-dir " + tmp.path.string(), &out3) == 3);
    CHECK(out3.find("nodes") != std::string::npos);
}

TEST_CASE("train writes checkpoint, log, and a reproducible config snapshot") {
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();
    CHECK(run("train --dataset synth --out " + out + " --seeds 3" + kTinyModel) == 0);
    CHECK(fs::exists(out + "/ckpt_seed3.bin"));
    CHECK(fs::exists(out + "/train_seed3.jsonl"));
    CHECK(fs::exists(out + "/resolved.conf"));

    // the snapshot alone reproduces the run (timing fields aside)
    const std::string out2 = (tmp.path / "run2").string();
    CHECK(run("train --config " + out + "/resolved.conf --out " + out2 + " --seeds 3") == 0);
    auto read_losses = [](const std::string& path) {
        std::ifstream in(path);
        std::vector<std::pair<double, int>> out;
        std::string line;
        while (std::getline(in, line)) {
            const auto j = nlohmann::json::parse(line);
            out.emplace_back(j["loss"].get<double>(), j["masked"].get<int>());
        }
        return out;
    };
    auto la = read_losses(out + "/train_seed3.jsonl");
    auto lb = read_losses(out2 + "/train_seed3.jsonl");
    CHECK(!la.empty());
    CHECK(la == lb);

    // checkpoints carry the encoder config and both parameter sets
    TensorArchive ar = TensorArchive::load(out + "/ckpt_seed3.bin");
    CHECK(ar.has("student.linear_w"));
    CHECK(ar.has("teacher.linear_w"));
    CHECK(ar.has("mask_features"));
    EncoderConfig ecfg = encoder_config_from_archive(ar);
    CHECK(ecfg.token_dim == 16);
}

TEST_CASE("eval consumes checkpoints and emits metrics") {
    TempDir tmp;
    const std::string out = (tmp.path / "run").string();
    REQUIRE(run("train --dataset synth --out " + out + " --seeds 0" + kTinyModel) == 0);
    std::string text;
    CHECK(run("eval --dataset synth --out " + out + " --seeds 0 --set eval.protocol=both" +
                  kTinyModel,
              &text) == 0);
    CHECK(text.find("probe") != std::string::npos);
    CHECK(text.find("cluster") != std::string::npos);
    CHECK(fs::exists(out + "/metrics.jsonl"));

    // raw-feature evaluation needs no checkpoint
    const std::string rawout = (tmp.path / "raw").string();
    CHECK(run("eval --dataset synth --raw --out " + rawout + kTinyModel) == 0);

    // missing checkpoint is an integrity failure
    const std::string empty = (tmp.path / "empty").string();
    CHECK(run("eval --dataset synth --out " + empty + " --seeds 9" + kTinyModel) == 3);
}

TEST_CASE("ablate ratio mode emits rows sorted by r descending") {
    TempDir tmp;
    const std::string out = (tmp.path / "abl").string();
    std::string text;
    CHECK(run("ablate --dataset synth --mode ratio --out " + out + kTinyModel, &text) == 0);
    const auto p1 = text.find("r=1.0");
    const auto p05 = text.find("r=0.5");
    const auto p0 = text.find("r=0.0");
    CHECK(p1 != std::string::npos);
    CHECK(p05 != std::string::npos);
    CHECK(p0 != std::string::npos);
    CHECK(p1 < p05);
    CHECK(p05 < p0);
    CHECK(fs::exists(out + "/report.txt"));
}

TEST_CASE("compare-ed is deterministic for identical seeds") {
    TempDir tmp;
    const std::string o1 = (tmp.path / "c1").string(), o2 = (tmp.path / "c2").string();
    const std::string args = "compare-ed --dataset synth --seeds 0,1" + kTinyModel;
    CHECK(run(args + " --out " + o1) == 0);
    CHECK(run(args + " --out " + o2) == 0);
    std::ifstream a(o1 + "/compare.jsonl"), b(o2 + "/compare.jsonl");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
}

TEST_CASE("bench reports epoch timing and epoch counts deterministically") {
    TempDir tmp;
    std::string t1, t2;
    const std::string args =
        "bench --dataset synth --set bench.eval_every=3" + kTinyModel;
    CHECK(run(args + " --out " + (tmp.path / "b1").string(), &t1) == 0);
    CHECK(run(args + " --out " + (tmp.path / "b2").string(), &t2) == 0);
    std::ifstream j1((tmp.path / "b1" / "bench.json").string());
    REQUIRE(j1.good());
    std::stringstream s1;
    s1 << j1.rdbuf();
    CHECK(s1.str().find("\"epochs\": 6") != std::string::npos);
    CHECK(s1.str().find("s_per_epoch") != std::string::npos);
    CHECK(s1.str().find("seconds_to_best") != std::string::npos);

    std::ifstream j2((tmp.path / "b2" / "bench.json").string());
    std::stringstream s2;
    s2 << j2.rdbuf();
    // identical seeds: identical epoch counts and best epoch
    auto field = [](const std::string& s, const std::string& key) {
        const auto pos = s.find(key);
        return s.substr(pos, s.find_first_of(",}", pos) - pos);
    };
    CHECK(field(s1.str(), "\"epochs\"") == field(s2.str(), "\"epochs\""));
    CHECK(field(s1.str(), "\"best_val_epoch\"") == field(s2.str(), "\"best_val_epoch\""));
}
