// h3gnn: self-supervised graph representation learning CLI.
//
// Subcommands: prepare, train, eval, ablate, compare-ed, bench. Every run
// writes a resolved-config snapshot so it can be reproduced from the output
// directory alone. Exit codes: 0 success, 1 runtime failure, 2 usage error,
// 3 integrity/validation failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "h3gnn/checkpoint.hpp"
#include "h3gnn/config.hpp"
#include "h3gnn/data.hpp"
#include "h3gnn/eval.hpp"
#include "h3gnn/ssl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace h3gnn;

namespace {

// ---------------------------------------------------------------- config ---

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "run.command", "run.dataset", "run.seeds", "run.data_dir",
        "model.token_dim", "model.heads", "model.wgcn_hidden",
        "model.dropout_filters", "model.dropout_attention", "model.fuse",
        "train.lr", "train.weight_decay", "train.epochs", "train.alpha",
        "train.mask_ratio", "train.exploit_ratio", "train.warmup_epochs",
        "train.strategy", "train.seed",
        "probe.lr", "probe.weight_decay", "probe.epochs",
        "eval.protocol", "eval.embed_source", "eval.kmeans_restarts",
        "eval.kmeans_normalize", "eval.val_size",
        "data.row_normalize",
        "synth.nodes", "synth.classes", "synth.intra_p", "synth.inter_p",
        "synth.feature_noise", "synth.feature_dim", "synth.seed",
        "bench.eval_every",
        "compare.threshold",
    };
    return keys;
}

KeyValue default_config() {
    return KeyValue::parse_string(R"(
[model]
token_dim = 128
heads = 4
wgcn_hidden = 64
dropout_filters = 0.3
dropout_attention = 0.3
fuse = attention

[train]
lr = 0.005
weight_decay = 0.0005
epochs = 200
alpha = 0.99
mask_ratio = 0.5
exploit_ratio = 0.5
warmup_epochs = 20
strategy = prob
seed = 0

[probe]
lr = 0.01
weight_decay = 0.0005
epochs = 300

[eval]
protocol = probe
embed_source = teacher
kmeans_restarts = 10
kmeans_normalize = false
val_size = 500

[data]
row_normalize = false

[synth]
nodes = 200
classes = 4
intra_p = 0.05
inter_p = 0.05
feature_noise = 0.5
feature_dim = 16
seed = 0

[bench]
eval_every = 10

[compare]
threshold = 0.1
)",
                                  "<defaults>");
}

void reject_unknown_keys(const KeyValue& kv, const std::string& origin) {
    for (const auto& [k, v] : kv.items())
        if (!known_keys().count(k))
            throw ArgumentError(origin + ": unknown config key '" + k + "'");
}

struct RunSpec {
    std::string command;
    std::string dataset;
    std::string data_dir = "data";
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string out_dir;
    std::vector<std::uint64_t> seeds = {0};
    KeyValue resolved;
};

std::string config_search(const std::string& dataset) {
    std::vector<std::string> candidates;
    if (const char* env = std::getenv("H3GNN_CONFIG_DIR"))
        candidates.push_back(std::string(env) + "/" + dataset + ".conf");
    candidates.push_back("configs/" + dataset + ".conf");
    for (const auto& c : candidates)
        if (fs::exists(c)) return c;
    return "";
}

void resolve_config(RunSpec& spec) {
    KeyValue cfg = default_config();
    std::string path = spec.config_path;
    if (path.empty() && !spec.dataset.empty()) path = config_search(spec.dataset);
    if (!path.empty()) {
        KeyValue file_cfg = KeyValue::parse_file(path);
        reject_unknown_keys(file_cfg, path);
        cfg.merge(file_cfg);
    }
    KeyValue cli;
    for (const auto& ov : spec.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ArgumentError("--set expects key=value, got '" + ov + "'");
        cli.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    reject_unknown_keys(cli, "--set");
    cfg.merge(cli);

    if (spec.dataset.empty() && cfg.has("run.dataset")) spec.dataset = cfg.get("run.dataset");
    if (spec.dataset.empty()) throw ArgumentError("no dataset given (--dataset or run.dataset)");
    cfg.set("run.command", spec.command);
    cfg.set("run.dataset", spec.dataset);
    std::string seed_list;
    for (auto s : spec.seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
    cfg.set("run.seeds", seed_list);
    cfg.set("run.data_dir", spec.data_dir);
    spec.resolved = cfg;
}

TrainConfig train_config_from(const KeyValue& cfg) {
    TrainConfig t;
    t.encoder.token_dim = cfg.get_int("model.token_dim");
    t.encoder.heads = cfg.get_int("model.heads");
    t.encoder.wgcn_hidden = cfg.get_int("model.wgcn_hidden");
    t.encoder.dropout_filters = cfg.get_double("model.dropout_filters");
    t.encoder.dropout_attention = cfg.get_double("model.dropout_attention");
    const std::string fuse = cfg.get("model.fuse");
    if (fuse == "attention")
        t.encoder.fuse = EncoderConfig::Fuse::attention;
    else if (fuse == "mlp")
        t.encoder.fuse = EncoderConfig::Fuse::mlp;
    else
        throw ArgumentError("model.fuse must be attention or mlp, got '" + fuse + "'");
    t.learning_rate = cfg.get_double("train.lr");
    t.weight_decay = cfg.get_double("train.weight_decay");
    t.epochs = cfg.get_int("train.epochs");
    t.momentum_alpha = cfg.get_double("train.alpha");
    t.mask_ratio = cfg.get_double("train.mask_ratio");
    t.exploit_ratio = cfg.get_double("train.exploit_ratio");
    t.warmup_epochs = cfg.get_int("train.warmup_epochs");
    t.strategy = mask_strategy_from_string(cfg.get("train.strategy"));
    t.seed = std::uint64_t(cfg.get_int64("train.seed"));
    return t;
}

ProbeConfig probe_config_from(const KeyValue& cfg) {
    ProbeConfig p;
    p.learning_rate = cfg.get_double("probe.lr");
    p.weight_decay = cfg.get_double("probe.weight_decay");
    p.epochs = cfg.get_int("probe.epochs");
    return p;
}

// ------------------------------------------------------------- datasets ----

Graph load_graph(const RunSpec& spec) {
    const KeyValue& cfg = spec.resolved;
    if (spec.dataset == "synth") {
        return synth_graph(cfg.get_int("synth.nodes"), cfg.get_int("synth.classes"),
                           cfg.get_double("synth.intra_p"), cfg.get_double("synth.inter_p"),
                           cfg.get_double("synth.feature_noise"),
                           std::uint64_t(cfg.get_int64("synth.seed")),
                           cfg.get_int("synth.feature_dim"));
    }
    const std::string dir = spec.data_dir + "/" + spec.dataset;
    if (!fs::exists(dir + "/manifest.txt"))
        throw IntegrityError("dataset '" + spec.dataset + "' is not prepared (no " + dir +
                             "/manifest.txt); run: h3gnn prepare " + spec.dataset);
    return load_dataset(spec.dataset, dir, cfg.get_bool("data.row_normalize")).graph;
}

std::vector<SplitMasks> splits_for(const Graph& g, const RunSpec& spec) {
    if (!g.splits().empty()) return g.splits();  // the ten provided splits
    const int val_size = spec.resolved.get_int("eval.val_size");
    std::vector<SplitMasks> splits;
    for (int s = 0; s < 10; ++s) splits.push_back(make_split_per_class20(g, s, val_size));
    return splits;
}

void ensure_outdir(RunSpec& spec) {
    if (spec.out_dir.empty()) throw ArgumentError("--out is required");
    fs::create_directories(spec.out_dir);
    spec.resolved.write_file(spec.out_dir + "/resolved.conf");
}

void print_grid_warnings(const TrainConfig& cfg) {
    for (const auto& w : cfg.grid_warnings()) std::cerr << "warning: " << w << "\n";
}

void write_train_log(const std::string& path, const std::vector<EpochRecord>& log) {
    std::ofstream out(path);
    for (const auto& rec : log) {
        json j = {{"epoch", rec.epoch},
                  {"loss", rec.loss},
                  {"masked", rec.masked},
                  {"ms", rec.millis}};
        out << j.dump() << "\n";
    }
}

std::string ckpt_path(const RunSpec& spec, std::uint64_t seed) {
    return spec.out_dir + "/ckpt_seed" + std::to_string(seed) + ".bin";
}

void save_ts_checkpoint(const std::string& path, const TrainResult& res,
                        const EncoderConfig& ecfg) {
    TensorArchive ar;
    archive_encoder_config(ar, ecfg);
    ar.put("meta.kind", Tensor::full(1, 1, 0.0));  // 0 = teacher-student
    archive_params(ar, "student", res.model.student);
    archive_params(ar, "teacher", res.model.teacher);
    ar.put("mask_features", res.mask.mask_features);
    // optimizer state, in parameter order (student tensors then mask token)
    std::vector<std::string> opt_names;
    for (const auto& [name, t] : res.model.student.named()) opt_names.push_back(name);
    opt_names.push_back("mask_features");
    if (res.optimizer.first_moments.size() == opt_names.size()) {
        for (std::size_t i = 0; i < opt_names.size(); ++i) {
            ar.put("opt.m." + opt_names[i], res.optimizer.first_moments[i]);
            ar.put("opt.v." + opt_names[i], res.optimizer.second_moments[i]);
        }
        ar.put("opt.step", Tensor::full(1, 1, double(res.optimizer.step_count)));
    }
    ar.save(path);
}

void save_ed_checkpoint(const std::string& path, const EncoderDecoderResult& res,
                        const EncoderConfig& ecfg) {
    TensorArchive ar;
    archive_encoder_config(ar, ecfg);
    ar.put("meta.kind", Tensor::full(1, 1, 1.0));  // 1 = encoder-decoder
    archive_params(ar, "student", res.encoder);
    for (const auto& [name, t] : const_cast<EncoderDecoderResult&>(res).decoder.named())
        ar.put("decoder." + name, t);
    ar.put("mask_features", res.mask.mask_features);
    ar.save(path);
}

EncoderParams load_embedder(const std::string& path, const std::string& source) {
    TensorArchive ar = TensorArchive::load(path);
    EncoderConfig ecfg = encoder_config_from_archive(ar);
    const bool is_ed = ar.get("meta.kind").data()[0] > 0.5;
    std::string prefix = source;
    if (is_ed || !ar.has(source + ".linear_w")) prefix = "student";
    return params_from_archive(ar, prefix, ecfg);
}

// --------------------------------------------------------------- prepare ---

int cmd_prepare(const std::string& dataset, const std::string& data_dir) {
    const DatasetExpectation* exp = find_dataset(dataset);
    if (!exp) throw ArgumentError("unknown dataset: " + dataset);
    const std::string dir = data_dir + "/" + dataset;
    LoadedDataset ds = exp->family == "planetoid" ? load_planetoid(dir) : load_webkb(dir);

    auto report = [&](const char* field, long long got, long long want) {
        std::cout << "  " << field << ": " << got << " expected=" << want
                  << (got == want ? "  OK" : "  MISMATCH") << "\n";
    };
    std::cout << "prepare " << dataset << " (" << dir << ")\n";
    report("nodes", ds.stats.nodes, exp->nodes);
    report("features", ds.stats.feature_dim, exp->feature_dim);
    report("classes", ds.stats.classes, exp->classes);
    std::printf("  homophily: %.4f expected=%.2f +- 0.03  %s\n", ds.stats.homophily,
                exp->homophily,
                std::fabs(ds.stats.homophily - exp->homophily) <= 0.03 ? "OK" : "MISMATCH");
    std::cout << "  edges: raw_lines=" << ds.stats.raw_edge_lines
              << " undirected=" << ds.stats.undirected_edges
              << " published=" << exp->edges_reported
              << " self_loops_dropped=" << ds.stats.self_loops_dropped << "\n";
    if (exp->provided_splits)
        std::cout << "  splits: " << ds.stats.splits << " expected=10"
                  << (ds.stats.splits == 10 ? "  OK" : "  MISMATCH") << "\n";

    validate_dataset(dataset, ds);  // throws IntegrityError on any failure
    KeyValue manifest = build_manifest(dataset, dir, ds);
    manifest.write_file(dir + "/manifest.txt");
    std::cout << "  manifest written: " << dir << "/manifest.txt\n";
    return 0;
}

// ----------------------------------------------------------------- train ---

int cmd_train(RunSpec& spec, int jobs) {
    ensure_outdir(spec);
    Graph g = load_graph(spec);
    TrainConfig base = train_config_from(spec.resolved);
    print_grid_warnings(base);

    std::vector<std::string> lines(spec.seeds.size());
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&](std::size_t idx) {
        try {
            const std::uint64_t seed = spec.seeds[idx];
            TrainConfig cfg = base;
            cfg.seed = seed;
            TrainResult res = train(g, cfg);
            EncoderConfig ecfg = cfg.encoder;
            ecfg.input_dim = g.feature_dim();
            save_ts_checkpoint(ckpt_path(spec, seed), res, ecfg);
            write_train_log(spec.out_dir + "/train_seed" + std::to_string(seed) + ".jsonl",
                            res.log);
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "seed %llu: %d epochs, final loss %.6g, %.2f s (%.4f s/epoch)",
                          (unsigned long long)seed, int(res.log.size()), res.log.back().loss,
                          res.total_seconds,
                          res.total_seconds / std::max<std::size_t>(1, res.log.size()));
            lines[idx] = buf;
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < spec.seeds.size(); ++i) worker(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const int count = std::min<int>(jobs, int(spec.seeds.size()));
        for (int t = 0; t < count; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < spec.seeds.size(); i = next++) worker(i);
            });
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    for (const auto& line : lines) std::cout << line << "\n";
    return 0;
}

// ------------------------------------------------------------------ eval ---

Metrics pooled_probe(const Graph& g, const std::vector<EncoderParams>& models,
                     const std::vector<SplitMasks>& splits, const ProbeConfig& pc) {
    Metrics pooled;
    pooled.protocol = "probe";
    for (const auto& m : models) {
        Metrics one = evaluate_run(g, m, Protocol::probe, splits, pc);
        pooled.per_split.insert(pooled.per_split.end(), one.per_split.begin(),
                                one.per_split.end());
        pooled.per_split_val.insert(pooled.per_split_val.end(), one.per_split_val.begin(),
                                    one.per_split_val.end());
        pooled.seeds.insert(pooled.seeds.end(), one.seeds.begin(), one.seeds.end());
        pooled.wall_seconds += one.wall_seconds;
    }
    pooled.mean = mean_of(pooled.per_split);
    pooled.stddev = population_std(pooled.per_split);
    return pooled;
}

void emit_metrics(const RunSpec& spec, const std::string& tag, const Metrics& m,
                  std::ofstream& jsonl) {
    json j = {{"tag", tag},        {"protocol", m.protocol},
              {"mean", m.mean},    {"std", m.stddev},
              {"runs", m.per_split}, {"wall_s", m.wall_seconds}};
    if (!m.per_split_val.empty()) j["val_mean"] = mean_of(m.per_split_val);
    jsonl << j.dump() << "\n";
    std::printf("%-28s %-8s mean=%.4f std=%.4f (n=%d)\n", tag.c_str(), m.protocol.c_str(),
                m.mean, m.stddev, int(m.per_split.size()));
}

int cmd_eval(RunSpec& spec, bool raw_features) {
    ensure_outdir(spec);
    Graph g = load_graph(spec);
    auto splits = splits_for(g, spec);
    ProbeConfig pc = probe_config_from(spec.resolved);
    const std::string protocol = spec.resolved.get("eval.protocol");
    if (protocol != "probe" && protocol != "cluster" && protocol != "both")
        throw ArgumentError("eval.protocol must be probe, cluster or both");

    std::ofstream jsonl(spec.out_dir + "/metrics.jsonl");
    if (raw_features) {
        ClusterConfig cc;
        cc.restarts = spec.resolved.get_int("eval.kmeans_restarts");
        cc.normalize = spec.resolved.get_bool("eval.kmeans_normalize");
        if (protocol == "probe" || protocol == "both")
            emit_metrics(spec, "raw-features", evaluate_raw(g, Protocol::probe, splits, pc),
                         jsonl);
        if (protocol == "cluster" || protocol == "both")
            emit_metrics(spec, "raw-features",
                         evaluate_raw(g, Protocol::cluster, splits, pc, cc), jsonl);
        return 0;
    }

    const std::string source = spec.resolved.get("eval.embed_source");
    if (source != "teacher" && source != "student")
        throw ArgumentError("eval.embed_source must be teacher or student");
    std::vector<EncoderParams> models;
    for (auto seed : spec.seeds) {
        const std::string path = ckpt_path(spec, seed);
        if (!fs::exists(path))
            throw IntegrityError("checkpoint not found: " + path + "; run h3gnn train first");
        models.push_back(load_embedder(path, source));
    }
    ClusterConfig cc;
    cc.restarts = spec.resolved.get_int("eval.kmeans_restarts");
    cc.normalize = spec.resolved.get_bool("eval.kmeans_normalize");
    if (protocol == "probe" || protocol == "both")
        emit_metrics(spec, spec.dataset, pooled_probe(g, models, splits, pc), jsonl);
    if (protocol == "cluster" || protocol == "both") {
        Metrics pooled;
        pooled.protocol = "cluster";
        for (const auto& m : models) {
            Metrics one = evaluate_run(g, m, Protocol::cluster, splits, pc, cc);
            pooled.per_split.insert(pooled.per_split.end(), one.per_split.begin(),
                                    one.per_split.end());
            pooled.wall_seconds += one.wall_seconds;
        }
        pooled.mean = mean_of(pooled.per_split);
        pooled.stddev = population_std(pooled.per_split);
        emit_metrics(spec, spec.dataset, pooled, jsonl);
    }
    return 0;
}

// ---------------------------------------------------------------- ablate ---

struct VariantResult {
    std::string name;
    double mean = 0.0;
    double stddev = 0.0;
};

VariantResult run_variant(const std::string& name, const Graph& g, const TrainConfig& base,
                          const std::vector<SplitMasks>& splits, const ProbeConfig& pc,
                          const std::vector<std::uint64_t>& seeds, bool encoder_decoder) {
    std::vector<double> accs;
    for (auto seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        EncoderParams embedder;
        if (encoder_decoder) {
            auto res = train_encoder_decoder(g, cfg);
            embedder = std::move(res.encoder);
        } else {
            auto res = train(g, cfg);
            embedder = std::move(res.model.teacher);
        }
        Metrics m = evaluate_run(g, embedder, Protocol::probe, splits, pc);
        accs.insert(accs.end(), m.per_split.begin(), m.per_split.end());
    }
    VariantResult out;
    out.name = name;
    out.mean = mean_of(accs);
    out.stddev = population_std(accs);
    return out;
}

int cmd_ablate(RunSpec& spec, const std::string& mode) {
    ensure_outdir(spec);
    Graph g = load_graph(spec);
    auto splits = splits_for(g, spec);
    TrainConfig base = train_config_from(spec.resolved);
    ProbeConfig pc = probe_config_from(spec.resolved);
    std::ofstream jsonl(spec.out_dir + "/ablate.jsonl");
    std::ofstream report(spec.out_dir + "/report.txt");

    auto emit = [&](const VariantResult& v, const std::string& extra) {
        json j = {{"variant", v.name}, {"mean", v.mean}, {"std", v.stddev}};
        if (!extra.empty()) j["detail"] = extra;
        jsonl << j.dump() << "\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-26s %.4f +- %.4f", v.name.c_str(), v.mean,
                      v.stddev);
        report << line << "\n";
        std::cout << line << "\n";
    };

    if (mode == "components") {
        TrainConfig full = base;
        VariantResult a = run_variant("full", g, full, splits, pc, spec.seeds, false);

        TrainConfig no_dyn = base;
        no_dyn.strategy = MaskStrategy::random;  // dynamic masking off
        VariantResult b = run_variant("no-dynmask", g, no_dyn, splits, pc, spec.seeds, false);

        TrainConfig ed = no_dyn;  // teacher-student off as well
        VariantResult c = run_variant("no-ts-dynmask", g, ed, splits, pc, spec.seeds, true);

        TrainConfig ed_mlp = ed;  // attention fusion off on top
        ed_mlp.encoder.fuse = EncoderConfig::Fuse::mlp;
        VariantResult d =
            run_variant("no-ts-dynmask-attn", g, ed_mlp, splits, pc, spec.seeds, true);

        for (const auto& v : {a, b, c, d}) emit(v, "");
    } else if (mode == "ratio") {
        // rows sorted by r descending
        for (double r : {1.0, 0.8, 0.5, 0.2, 0.0}) {
            TrainConfig cfg = base;
            cfg.exploit_ratio = r;
            VariantResult v = run_variant("r=" + std::to_string(r).substr(0, 3), g, cfg,
                                          splits, pc, spec.seeds, false);
            emit(v, "");
        }
    } else {
        throw ArgumentError("--mode must be components or ratio");
    }
    return 0;
}

// ------------------------------------------------------------ compare-ed ---

int cmd_compare_ed(RunSpec& spec) {
    ensure_outdir(spec);
    Graph g = load_graph(spec);
    TrainConfig base = train_config_from(spec.resolved);
    const double threshold = spec.resolved.get_double("compare.threshold");
    std::ofstream jsonl(spec.out_dir + "/compare.jsonl");

    double ts_sum = 0.0, ed_sum = 0.0;
    for (auto seed : spec.seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        TrainResult ts = train(g, cfg);
        EncoderDecoderResult ed = train_encoder_decoder(g, cfg);
        const int cap = cfg.epochs;
        const int ts_epochs = epochs_to_fraction(ts.log, threshold, cap);
        const int ed_epochs = epochs_to_fraction(ed.log, threshold, cap);
        ts_sum += ts_epochs;
        ed_sum += ed_epochs;

        json j;
        j["seed"] = seed;
        j["threshold"] = threshold;
        j["ts_epochs_to_threshold"] = ts_epochs;
        j["ed_epochs_to_threshold"] = ed_epochs;
        auto norm = [](const std::vector<EpochRecord>& log) {
            std::vector<double> out;
            const double base_loss = log.empty() ? 1.0 : log.front().loss;
            for (const auto& rec : log) out.push_back(rec.loss / base_loss);
            return out;
        };
        j["ts_normalized_loss"] = norm(ts.log);
        j["ed_normalized_loss"] = norm(ed.log);
        jsonl << j.dump() << "\n";
        std::printf("seed %llu: teacher-student %d epochs to %.0f%%, encoder-decoder %d\n",
                    (unsigned long long)seed, ts_epochs, threshold * 100, ed_epochs);
    }
    const double n = double(spec.seeds.size());
    std::printf("mean epochs to %.0f%% of initial loss: teacher-student %.1f, "
                "encoder-decoder %.1f\n",
                threshold * 100, ts_sum / n, ed_sum / n);
    return 0;
}

// ----------------------------------------------------------------- bench ---

long read_vm_rss_kb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            std::istringstream ls(line.substr(6));
            long kb = 0;
            ls >> kb;
            return kb;
        }
    }
    return 0;
}

int cmd_bench(RunSpec& spec) {
    ensure_outdir(spec);
    Graph g = load_graph(spec);
    auto splits = splits_for(g, spec);
    TrainConfig cfg = train_config_from(spec.resolved);
    cfg.seed = spec.seeds.front();
    ProbeConfig pc = probe_config_from(spec.resolved);
    const int eval_every = spec.resolved.get_int("bench.eval_every");

    double best_val = -1.0;
    int best_epoch = -1;
    long max_rss_kb = read_vm_rss_kb();
    auto on_epoch = [&](int epoch, const StudentTeacher& st, const MaskState&) {
        max_rss_kb = std::max(max_rss_kb, read_vm_rss_kb());
        if (eval_every <= 0 || (epoch + 1) % eval_every != 0) return;
        Tensor emb = embed_full(g, st.teacher);
        const double val =
            linear_probe(emb, g.labels(), splits.front(), pc).best_val_accuracy;
        if (val > best_val) {
            best_val = val;
            best_epoch = epoch;
        }
    };
    TrainResult res = train(g, cfg, on_epoch);

    double train_ms_total = 0.0, ms_to_best = 0.0;
    for (const auto& rec : res.log) {
        train_ms_total += rec.millis;
        if (best_epoch >= 0 && rec.epoch <= best_epoch) ms_to_best += rec.millis;
    }
    const double s_per_epoch = train_ms_total / 1000.0 / std::max<std::size_t>(1, res.log.size());

    json j = {{"dataset", spec.dataset},
              {"epochs", int(res.log.size())},
              {"s_per_epoch", s_per_epoch},
              {"train_seconds", train_ms_total / 1000.0},
              {"best_val_epoch", best_epoch},
              {"best_val_accuracy", best_val},
              {"seconds_to_best", ms_to_best / 1000.0},
              {"wall_seconds_incl_probes", res.total_seconds},
              {"max_rss_mb_approx", double(max_rss_kb) / 1024.0}};
    std::ofstream(spec.out_dir + "/bench.json") << j.dump(2) << "\n";
    std::printf("%s: %.4f s/epoch, %d epochs, %.2f s train, best val %.4f at epoch %d "
                "(%.2f s to best), ~%.1f MB resident\n",
                spec.dataset.c_str(), s_per_epoch, int(res.log.size()),
                train_ms_total / 1000.0, best_val, best_epoch, ms_to_best / 1000.0,
                double(max_rss_kb) / 1024.0);
    return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stoull(tok));
    }
    if (out.empty()) throw ArgumentError("--seeds: empty seed list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised graph representation learning"};
    app.require_subcommand(1);

    std::string dataset, data_dir = "data", config_path, out_dir, seeds_str = "0";
    std::string ablate_mode = "components";
    bool raw_features = false;
    int jobs = 1;
    std::vector<std::string> overrides;
    if (const char* env = std::getenv("H3GNN_DATA_DIR")) data_dir = env;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--dataset", dataset, "dataset name (or 'synth')");
        cmd->add_option("--data-dir", data_dir, "converted dataset root");
        cmd->add_option("--config", config_path, "config file (key = value with sections)");
        cmd->add_option("--set", overrides, "override a config key, e.g. --set train.lr=0.01");
        cmd->add_option("--seeds", seeds_str, "comma-separated seed list");
        auto* o = cmd->add_option("--out", out_dir, "output directory");
        if (needs_out) o->required();
    };

    CLI::App* prepare = app.add_subcommand("prepare", "validate a converted dataset");
    prepare->add_option("dataset", dataset, "dataset name")->required();
    prepare->add_option("--data-dir", data_dir, "converted dataset root");

    CLI::App* train_cmd = app.add_subcommand("train", "teacher-student training");
    add_common(train_cmd, true);
    train_cmd->add_option("--jobs", jobs, "seeds trained in parallel (default 1)");
    CLI::App* eval_cmd = app.add_subcommand("eval", "probe / cluster a checkpoint");
    add_common(eval_cmd, true);
    eval_cmd->add_flag("--raw", raw_features, "evaluate raw input features (no checkpoint)");
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "component / ratio ablations");
    add_common(ablate_cmd, true);
    ablate_cmd->add_option("--mode", ablate_mode, "components | ratio");
    CLI::App* compare_cmd =
        app.add_subcommand("compare-ed", "teacher-student vs encoder-decoder convergence");
    add_common(compare_cmd, true);
    CLI::App* bench_cmd = app.add_subcommand("bench", "timing and memory report");
    add_common(bench_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(dataset, data_dir);

        RunSpec spec;
        spec.dataset = dataset;
        spec.data_dir = data_dir;
        spec.config_path = config_path;
        spec.overrides = overrides;
        spec.out_dir = out_dir;
        spec.seeds = parse_seeds(seeds_str);
        if (train_cmd->parsed()) {
            spec.command = "train";
            resolve_config(spec);
            return cmd_train(spec, jobs);
        }
        if (eval_cmd->parsed()) {
            spec.command = "eval";
            resolve_config(spec);
            return cmd_eval(spec, raw_features);
        }
        if (ablate_cmd->parsed()) {
            spec.command = "ablate";
            resolve_config(spec);
            return cmd_ablate(spec, ablate_mode);
        }
        if (compare_cmd->parsed()) {
            spec.command = "compare-ed";
            resolve_config(spec);
            return cmd_compare_ed(spec);
        }
        if (bench_cmd->parsed()) {
            spec.command = "bench";
            resolve_config(spec);
            return cmd_bench(spec);
        }
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
