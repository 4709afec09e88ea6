#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "h3gnn/config.hpp"
#include "h3gnn/graph.hpp"

namespace h3gnn {

// Converted dataset directory layout (produced by scripts/fetch_datasets.py):
//   nodes.txt     one node per line: <id> <TAB> <features> <TAB> <label>
//                 features are comma-separated: dense 0/1 values ("0,1,0"),
//                 bag-of-word indices ("4,17,903"), or idx:val pairs
//                 ("4:0.5,17:1.25") depending on manifest feature_format
//   edges.txt     one edge per line: <u> <v> (as published; the loader
//                 symmetrizes, deduplicates and drops self-loops)
//   splits.txt    heterophilic datasets only; lines: <split> <role> <ids...>
//                 with role in {train, val, test}
//   manifest.txt  key-value audit record written by `prepare`

struct DatasetStats {
    int nodes = 0;
    int raw_edge_lines = 0;        // lines in edges.txt
    int undirected_edges = 0;      // after symmetrize + dedup + self-loop drop
    int self_loops_dropped = 0;
    int feature_dim = 0;
    int classes = 0;
    int splits = 0;
    double homophily = 0.0;
};

// Published statistics the loaders validate against (node/feature/class
// counts exactly, homophily within +-0.03). Edge counts are reported in the
// manifest, not asserted: the published figures do not pin a
// direction/deduplication convention.
struct DatasetExpectation {
    std::string name;
    int nodes;
    int edges_reported;
    int feature_dim;
    int classes;
    double homophily;
    bool provided_splits;        // heterophilic: ten split files ship with the data
    std::string feature_format;  // dense | indices | sparse
    std::string family;          // webkb | actor | planetoid
};

const std::vector<DatasetExpectation>& known_datasets();
const DatasetExpectation* find_dataset(const std::string& name);

struct LoadedDataset {
    Graph graph;
    DatasetStats stats;
    std::string feature_format;
};

// WebKB web-page graphs and the actor co-occurrence graph (dense 0/1 or
// index-list features, ten provided splits).
LoadedDataset load_webkb(const std::string& dir, bool row_normalize = false);
// Citation graphs converted from the published index files (idx:val
// features, no split files).
LoadedDataset load_planetoid(const std::string& dir, bool row_normalize = false);

// Validates a loaded dataset against expectations and an optional existing
// manifest; throws IntegrityError listing every failed field.
void validate_dataset(const std::string& name, const LoadedDataset& ds);

// Computes the manifest record (stats + file checksums) for a dataset dir.
KeyValue build_manifest(const std::string& name, const std::string& dir,
                        const LoadedDataset& ds);

// Loads by dataset name: picks the loader family, validates, and checks
// manifest.txt when present.
LoadedDataset load_dataset(const std::string& name, const std::string& dir,
                           bool row_normalize = false);

// Seeded per-class training split: 20 train nodes per class (or all nodes of
// a smaller class), `val_size` validation nodes, remainder test.
SplitMasks make_split_per_class20(const Graph& g, std::uint64_t seed, int val_size = 500);

// Stochastic block model with class-conditioned Gaussian features.
Graph synth_graph(int n, int classes, double intra_p, double inter_p, double feature_noise,
                  std::uint64_t seed, int feature_dim = 16);

// FNV-1a 64-bit over the raw file bytes, rendered as "fnv1a64:<hex>".
std::string file_checksum(const std::string& path);

}  // namespace h3gnn
