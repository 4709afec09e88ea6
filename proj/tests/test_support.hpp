#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace test_support {

// Benchmark data location: $H3GNN_DATA_DIR, else <repo>/data. The converted
// datasets are produced by scripts/fetch_datasets.py; tests that need them
// skip when the directory is absent.
inline std::string data_root() {
    if (const char* env = std::getenv("H3GNN_DATA_DIR")) return env;
#ifdef H3GNN_SOURCE_DIR
    return std::string(H3GNN_SOURCE_DIR) + "/data";
#else
    return "data";
#endif
}

inline std::string dataset_dir(const std::string& name) { return data_root() + "/" + name; }

inline bool have_dataset(const std::string& name) {
    return std::filesystem::exists(dataset_dir(name) + "/nodes.txt");
}

inline bool have_datasets() {
    for (const char* n : {"cornell", "texas", "wisconsin", "actor", "cora", "citeseer", "pubmed"})
        if (!have_dataset(n)) return false;
    return true;
}

// Writes a synthetic dataset directory whose shape statistics (nodes,
// feature dim, classes, homophily band, ten splits) match the published
// texas figures; used to exercise validation and CLI plumbing without the
// real data.
inline void write_texas_shaped_dataset(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const int n = 183;
    std::string nodes, edges, splits;
    std::vector<int> label(n);
    for (int i = 0; i < n; ++i) {
        label[i] = i % 5;
        std::string feat = std::to_string(i % 1703);
        if (i == 0) feat += ",1702";  // pin the feature dimension
        nodes += std::to_string(i) + "\t" + feat + "\t" + std::to_string(label[i]) + "\n";
    }
    int same = 0, total = 0;
    for (int u = 0; u < n && total < 309; ++u)
        for (int v = u + 1; v < n && total < 309; ++v) {
            const bool want_same = same < 34;  // ~0.11 homophily on 309 edges
            if ((label[u] == label[v]) != want_same) continue;
            edges += std::to_string(u) + " " + std::to_string(v) + "\n";
            ++total;
            if (label[u] == label[v]) ++same;
        }
    for (int s = 0; s < 10; ++s) {
        for (const char* role : {"train", "val", "test"}) {
            splits += std::to_string(s) + " " + role;
            for (int i = 0; i < n; ++i) {
                const int bucket = (i + s) % 3;
                const bool in = (bucket == 0 && std::string(role) == "train") ||
                                (bucket == 1 && std::string(role) == "val") ||
                                (bucket == 2 && std::string(role) == "test");
                if (in) splits += " " + std::to_string(i);
            }
            splits += "\n";
        }
    }
    std::ofstream(dir / "nodes.txt") << nodes;
    std::ofstream(dir / "edges.txt") << edges;
    std::ofstream(dir / "splits.txt") << splits;
    std::ofstream(dir / "manifest.txt") << "feature_format = indices\n";
}

}  // namespace test_support
