#pragma once

#include <optional>
#include <string>
#include <vector>

#include "h3gnn/tensor.hpp"

namespace h3gnn {

struct SplitMasks {
    std::vector<std::uint8_t> train;
    std::vector<std::uint8_t> val;
    std::vector<std::uint8_t> test;
};

// Immutable node/edge/feature/label container. Edges are stored undirected
// and deduplicated with u < v; self-loops are rejected at construction (they
// only appear later, inside adjacency normalization).
class Graph {
  public:
    Graph(int num_nodes, std::vector<std::pair<int, int>> edges, Tensor features,
          std::optional<std::vector<int>> labels = std::nullopt);

    int num_nodes() const { return num_nodes_; }
    int num_undirected_edges() const { return int(edges_.size()); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const Tensor& features() const { return features_; }
    int feature_dim() const { return features_.cols(); }
    bool has_labels() const { return labels_.has_value(); }
    const std::vector<int>& labels() const;
    int num_classes() const;  // 1 + max label

    const std::vector<SplitMasks>& splits() const { return splits_; }
    void add_split(SplitMasks masks);

    // degrees without self-loops
    const std::vector<int>& degrees() const { return degrees_; }

  private:
    int num_nodes_;
    std::vector<std::pair<int, int>> edges_;
    Tensor features_;
    std::optional<std::vector<int>> labels_;
    std::vector<SplitMasks> splits_;
    std::vector<int> degrees_;
};

// A_hat = D^{-1/2} (A + I) D^{-1/2} in CSR form. Symmetric, strictly positive
// stored entries, pattern exactly (A + I).
struct NormalizedAdjacency {
    SparsePattern pattern;
    std::vector<double> values;      // aligned with pattern.col_idx
    std::vector<int> loop_degrees;   // degree counting the self-loop

    Tensor values_tensor(bool requires_grad = false) const;
};

NormalizedAdjacency normalize_adjacency(const Graph& g);

// Fraction of undirected edges whose endpoints share a label.
double homophily_ratio(const Graph& g);

// f' L_sym f with L_sym = I - D^{-1/2} A D^{-1/2}; degrees exclude
// self-loops, isolated nodes contribute only their identity term.
double laplacian_quadratic(const Graph& g, const std::vector<double>& signal);

}  // namespace h3gnn
