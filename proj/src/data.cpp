#include "h3gnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace h3gnn {

namespace fs = std::filesystem;

const std::vector<DatasetExpectation>& known_datasets() {
    static const std::vector<DatasetExpectation> table = {
        {"cornell", 183, 295, 1703, 5, 0.30, true, "dense", "webkb"},
        {"texas", 183, 309, 1703, 5, 0.11, true, "dense", "webkb"},
        {"wisconsin", 251, 499, 1703, 5, 0.21, true, "dense", "webkb"},
        {"actor", 7600, 29926, 932, 5, 0.22, true, "indices", "actor"},
        {"cora", 2708, 10556, 1433, 7, 0.81, false, "sparse", "planetoid"},
        {"citeseer", 3327, 9104, 3703, 6, 0.74, false, "sparse", "planetoid"},
        {"pubmed", 19717, 88648, 500, 3, 0.80, false, "sparse", "planetoid"},
    };
    return table;
}

const DatasetExpectation* find_dataset(const std::string& name) {
    for (const auto& d : known_datasets())
        if (d.name == name) return &d;
    return nullptr;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int parse_int(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": not an integer: '" + s + "'");
    }
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": not a number: '" + s + "'");
    }
}

struct ParsedNodes {
    Tensor features;
    std::vector<int> labels;
    int feature_dim = 0;
};

// nodes.txt: <id> \t <features> \t <label>
ParsedNodes parse_nodes(const std::string& path, const std::string& format) {
    std::ifstream in(path);
    if (!in) throw IntegrityError("missing node file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw IntegrityError("empty node file: " + path);
    const int n = int(lines.size());

    // first pass establishes the feature dimension
    int dim = 0;
    std::vector<std::vector<std::pair<int, double>>> feats(n);
    std::vector<int> labels(n, -1);
    std::vector<std::uint8_t> seen(n, 0);
    for (int li = 0; li < n; ++li) {
        const std::string where = path + ":" + std::to_string(li + 1);
        auto fields = split_fields(lines[li], '\t');
        if (fields.size() != 3) throw ParseError(where + ": expected 3 tab-separated fields");
        const int id = parse_int(fields[0], where);
        if (id < 0 || id >= n) throw ParseError(where + ": node id out of range");
        if (seen[id]) throw ParseError(where + ": duplicate node id");
        seen[id] = 1;
        labels[id] = parse_int(fields[2], where);
        if (labels[id] < 0) throw ParseError(where + ": negative label");

        auto toks = split_fields(fields[1], ',');
        auto& row = feats[id];
        if (format == "dense") {
            for (int j = 0; j < int(toks.size()); ++j) {
                const double v = parse_double(toks[j], where);
                if (v != 0.0) row.emplace_back(j, v);
            }
            if (dim == 0)
                dim = int(toks.size());
            else if (dim != int(toks.size()))
                throw ParseError(where + ": inconsistent feature width");
        } else if (format == "indices") {
            for (const auto& t : toks) {
                const int idx = parse_int(t, where);
                if (idx < 0) throw ParseError(where + ": negative feature index");
                row.emplace_back(idx, 1.0);
                dim = std::max(dim, idx + 1);
            }
        } else if (format == "sparse") {
            for (const auto& t : toks) {
                if (t.empty()) continue;
                const auto colon = t.find(':');
                if (colon == std::string::npos)
                    throw ParseError(where + ": expected idx:val pair, got '" + t + "'");
                const int idx = parse_int(t.substr(0, colon), where);
                if (idx < 0) throw ParseError(where + ": negative feature index");
                row.emplace_back(idx, parse_double(t.substr(colon + 1), where));
                dim = std::max(dim, idx + 1);
            }
        } else {
            throw ArgumentError("unknown feature_format: " + format);
        }
    }

    ParsedNodes out;
    out.feature_dim = dim;
    out.features = Tensor::zeros(n, dim);
    for (int i = 0; i < n; ++i)
        for (auto [j, v] : feats[i]) {
            if (j >= dim) throw ParseError(path + ": feature index beyond dimension");
            out.features.at(i, j) = v;
        }
    out.labels = std::move(labels);
    return out;
}

struct ParsedEdges {
    std::vector<std::pair<int, int>> edges;  // self-loops removed, as listed
    int raw_lines = 0;
    int self_loops = 0;
};

ParsedEdges parse_edges(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw IntegrityError("missing edge file: " + path);
    ParsedEdges out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++out.raw_lines;
        std::istringstream ls(line);
        long long u, v;
        if (!(ls >> u >> v)) throw ParseError(path + ":" + std::to_string(lineno) +
                                              ": expected two node ids");
        std::string extra;
        if (ls >> extra) throw ParseError(path + ":" + std::to_string(lineno) +
                                          ": trailing tokens");
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw ParseError(path + ":" + std::to_string(lineno) + ": node id out of range");
        if (u == v) {
            ++out.self_loops;
            continue;
        }
        out.edges.emplace_back(int(u), int(v));
    }
    return out;
}

// splits.txt: <split_idx> <train|val|test> <id...>
std::vector<SplitMasks> parse_splits(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw IntegrityError("missing split file: " + path);
    std::vector<SplitMasks> splits;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        std::istringstream ls(line);
        int idx;
        std::string role;
        if (!(ls >> idx >> role)) throw ParseError(where + ": expected '<split> <role> <ids>'");
        if (idx < 0 || idx > 1000) throw ParseError(where + ": bad split index");
        while (int(splits.size()) <= idx) {
            SplitMasks m;
            m.train.assign(n, 0);
            m.val.assign(n, 0);
            m.test.assign(n, 0);
            splits.push_back(std::move(m));
        }
        std::vector<std::uint8_t>* mask = nullptr;
        if (role == "train")
            mask = &splits[idx].train;
        else if (role == "val")
            mask = &splits[idx].val;
        else if (role == "test")
            mask = &splits[idx].test;
        else
            throw ParseError(where + ": unknown role '" + role + "'");
        int id;
        while (ls >> id) {
            if (id < 0 || id >= n) throw ParseError(where + ": node id out of range");
            (*mask)[id] = 1;
        }
    }
    return splits;
}

void row_normalize_features(Tensor& f) {
    for (int i = 0; i < f.rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < f.cols(); ++j) sum += std::fabs(f.at(i, j));
        if (sum > 0.0)
            for (int j = 0; j < f.cols(); ++j) f.at(i, j) /= sum;
    }
}

LoadedDataset load_dir(const std::string& dir, const std::string& format, bool with_splits,
                       bool row_normalize) {
    auto nodes = parse_nodes(dir + "/nodes.txt", format);
    const int n = nodes.features.rows();
    auto edges = parse_edges(dir + "/edges.txt", n);
    if (row_normalize) row_normalize_features(nodes.features);

    Graph g(n, edges.edges, nodes.features, nodes.labels);
    DatasetStats stats;
    stats.nodes = n;
    stats.raw_edge_lines = edges.raw_lines;
    stats.undirected_edges = g.num_undirected_edges();
    stats.self_loops_dropped = edges.self_loops;
    stats.feature_dim = nodes.feature_dim;
    stats.classes = g.num_classes();
    stats.homophily = homophily_ratio(g);

    if (with_splits) {
        auto splits = parse_splits(dir + "/splits.txt", n);
        for (auto& s : splits) g.add_split(std::move(s));
        stats.splits = int(g.splits().size());
    }
    return LoadedDataset{std::move(g), stats, format};
}

std::string format_for_dir(const std::string& dir, const std::string& fallback) {
    const std::string manifest = dir + "/manifest.txt";
    if (fs::exists(manifest)) {
        auto kv = KeyValue::parse_file(manifest);
        if (kv.has("feature_format")) return kv.get("feature_format");
    }
    return fallback;
}

}  // namespace

LoadedDataset load_webkb(const std::string& dir, bool row_normalize) {
    return load_dir(dir, format_for_dir(dir, "dense"), /*with_splits=*/true, row_normalize);
}

LoadedDataset load_planetoid(const std::string& dir, bool row_normalize) {
    return load_dir(dir, format_for_dir(dir, "sparse"), /*with_splits=*/false, row_normalize);
}

void validate_dataset(const std::string& name, const LoadedDataset& ds) {
    const DatasetExpectation* exp = find_dataset(name);
    if (!exp) throw ArgumentError("unknown dataset: " + name);
    std::vector<std::string> failures;
    auto check_exact = [&](const char* field, int got, int want) {
        if (got != want)
            failures.push_back(std::string(field) + ": got " + std::to_string(got) +
                               ", expected " + std::to_string(want));
    };
    check_exact("nodes", ds.stats.nodes, exp->nodes);
    check_exact("feature_dim", ds.stats.feature_dim, exp->feature_dim);
    check_exact("classes", ds.stats.classes, exp->classes);
    if (std::fabs(ds.stats.homophily - exp->homophily) > 0.03) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "homophily: got %.4f, expected %.2f +- 0.03",
                      ds.stats.homophily, exp->homophily);
        failures.push_back(buf);
    }
    if (exp->provided_splits && ds.stats.splits != 10)
        failures.push_back("splits: got " + std::to_string(ds.stats.splits) + ", expected 10");
    if (!failures.empty()) {
        std::string msg = "dataset '" + name + "' failed integrity checks:";
        for (const auto& f : failures) msg += "\n  - " + f;
        throw IntegrityError(msg);
    }
}

KeyValue build_manifest(const std::string& name, const std::string& dir,
                        const LoadedDataset& ds) {
    const DatasetExpectation* exp = find_dataset(name);
    KeyValue kv;
    kv.set("name", name);
    kv.set_int("nodes", ds.stats.nodes);
    kv.set_int("edges_raw", ds.stats.raw_edge_lines);
    kv.set_int("edges_undirected", ds.stats.undirected_edges);
    kv.set_int("self_loops_dropped", ds.stats.self_loops_dropped);
    if (exp) kv.set_int("edges_reported", exp->edges_reported);
    kv.set_int("features", ds.stats.feature_dim);
    kv.set_int("classes", ds.stats.classes);
    kv.set_double("homophily", ds.stats.homophily);
    kv.set_int("splits", ds.stats.splits);
    kv.set("feature_format", ds.feature_format);
    kv.set("checksum_nodes", file_checksum(dir + "/nodes.txt"));
    kv.set("checksum_edges", file_checksum(dir + "/edges.txt"));
    if (fs::exists(dir + "/splits.txt"))
        kv.set("checksum_splits", file_checksum(dir + "/splits.txt"));
    return kv;
}

LoadedDataset load_dataset(const std::string& name, const std::string& dir,
                           bool row_normalize) {
    const DatasetExpectation* exp = find_dataset(name);
    if (!exp) throw ArgumentError("unknown dataset: " + name);
    LoadedDataset ds = exp->family == "planetoid" ? load_planetoid(dir, row_normalize)
                                                  : load_webkb(dir, row_normalize);
    validate_dataset(name, ds);

    const std::string manifest_path = dir + "/manifest.txt";
    if (fs::exists(manifest_path)) {
        auto kv = KeyValue::parse_file(manifest_path);
        std::vector<std::string> failures;
        auto check = [&](const char* key, std::int64_t got) {
            if (kv.has(key) && kv.get_int64(key) != got)
                failures.push_back(std::string(key) + ": manifest says " + kv.get(key) +
                                   ", loaded " + std::to_string(got));
        };
        check("nodes", ds.stats.nodes);
        check("features", ds.stats.feature_dim);
        check("classes", ds.stats.classes);
        check("edges_undirected", ds.stats.undirected_edges);
        for (const char* key : {"checksum_nodes", "checksum_edges", "checksum_splits"}) {
            if (!kv.has(key)) continue;
            const std::string file = dir + "/" + std::string(key).substr(9) + ".txt";
            const std::string got = file_checksum(file);
            if (got != kv.get(key))
                failures.push_back(std::string(key) + ": manifest says " + kv.get(key) +
                                   ", file hashes to " + got);
        }
        if (!failures.empty()) {
            std::string msg = "dataset '" + name + "' disagrees with manifest:";
            for (const auto& f : failures) msg += "\n  - " + f;
            throw IntegrityError(msg);
        }
    }
    return ds;
}

SplitMasks make_split_per_class20(const Graph& g, std::uint64_t seed, int val_size) {
    const auto& y = g.labels();
    const int n = g.num_nodes();
    const int k = g.num_classes();
    std::vector<std::vector<int>> by_class(k);
    for (int i = 0; i < n; ++i) by_class[y[i]].push_back(i);
    for (int c = 0; c < k; ++c)
        if (by_class[c].empty())
            throw StateError("make_split: class " + std::to_string(c) + " has zero nodes");

    std::mt19937_64 rng(seed);
    SplitMasks m;
    m.train.assign(n, 0);
    m.val.assign(n, 0);
    m.test.assign(n, 0);
    std::vector<int> rest;
    for (int c = 0; c < k; ++c) {
        auto nodes = by_class[c];
        std::shuffle(nodes.begin(), nodes.end(), rng);
        const int take = std::min<int>(20, int(nodes.size()));
        for (int i = 0; i < take; ++i) m.train[nodes[i]] = 1;
        for (int i = take; i < int(nodes.size()); ++i) rest.push_back(nodes[i]);
    }
    std::sort(rest.begin(), rest.end());
    std::shuffle(rest.begin(), rest.end(), rng);
    const int nval = std::min<int>(val_size, int(rest.size()));
    for (int i = 0; i < nval; ++i) m.val[rest[i]] = 1;
    for (int i = nval; i < int(rest.size()); ++i) m.test[rest[i]] = 1;
    return m;
}

Graph synth_graph(int n, int classes, double intra_p, double inter_p, double feature_noise,
                  std::uint64_t seed, int feature_dim) {
    if (intra_p < 0 || intra_p > 1 || inter_p < 0 || inter_p > 1)
        throw ArgumentError("synth_graph: probabilities must be in [0, 1]");
    if (n <= 0 || classes <= 0 || classes > n)
        throw ArgumentError("synth_graph: bad n/classes");
    std::mt19937_64 rng(seed);

    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % classes;

    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            const double p = labels[u] == labels[v] ? intra_p : inter_p;
            if (uniform01(rng) < p) edges.emplace_back(u, v);
        }

    std::vector<std::vector<double>> means(classes, std::vector<double>(feature_dim));
    for (auto& m : means)
        for (auto& x : m) x = normal01(rng);
    Tensor features = Tensor::zeros(n, feature_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < feature_dim; ++j)
            features.at(i, j) = means[labels[i]][j] + feature_noise * normal01(rng);

    return Graph(n, std::move(edges), std::move(features), std::move(labels));
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open for checksum: " + path);
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const auto got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= std::uint8_t(buf[i]);
            h *= 1099511628211ull;  // FNV prime
        }
        if (!in) break;
    }
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + hex;
}

}  // namespace h3gnn
