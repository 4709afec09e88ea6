#include "h3gnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace h3gnn {

Graph::Graph(int num_nodes, std::vector<std::pair<int, int>> edges, Tensor features,
             std::optional<std::vector<int>> labels)
    : num_nodes_(num_nodes), features_(std::move(features)), labels_(std::move(labels)) {
    if (num_nodes_ <= 0) throw ArgumentError("Graph: num_nodes must be positive");
    if (features_.rows() != num_nodes_)
        throw DimensionError("Graph: feature rows != num_nodes");
    if (labels_ && int(labels_->size()) != num_nodes_)
        throw DimensionError("Graph: label count != num_nodes");

    std::set<std::pair<int, int>> dedup;
    for (auto [u, v] : edges) {
        if (u < 0 || u >= num_nodes_ || v < 0 || v >= num_nodes_)
            throw ArgumentError("Graph: edge endpoint out of range");
        if (u == v) throw ArgumentError("Graph: self-loop in edge set");
        dedup.emplace(std::min(u, v), std::max(u, v));
    }
    edges_.assign(dedup.begin(), dedup.end());

    degrees_.assign(num_nodes_, 0);
    for (auto [u, v] : edges_) {
        ++degrees_[u];
        ++degrees_[v];
    }
}

const std::vector<int>& Graph::labels() const {
    if (!labels_) throw StateError("Graph: labels not present");
    return *labels_;
}

int Graph::num_classes() const {
    const auto& y = labels();
    int mx = -1;
    for (int c : y) mx = std::max(mx, c);
    return mx + 1;
}

void Graph::add_split(SplitMasks masks) {
    const auto n = std::size_t(num_nodes_);
    if (masks.train.size() != n || masks.val.size() != n || masks.test.size() != n)
        throw DimensionError("Graph::add_split: mask length != num_nodes");
    for (std::size_t i = 0; i < n; ++i) {
        const int hits = (masks.train[i] ? 1 : 0) + (masks.val[i] ? 1 : 0) +
                         (masks.test[i] ? 1 : 0);
        if (hits > 1) throw StateError("Graph::add_split: masks overlap");
    }
    splits_.push_back(std::move(masks));
}

Tensor NormalizedAdjacency::values_tensor(bool requires_grad) const {
    Tensor t = Tensor::zeros(1, int(values.size()), requires_grad);
    std::copy(values.begin(), values.end(), t.data());
    return t;
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
    const int n = g.num_nodes();
    NormalizedAdjacency adj;
    adj.loop_degrees.assign(n, 1);  // the self-loop
    std::vector<std::vector<int>> nbrs(n);
    for (auto [u, v] : g.edges()) {
        nbrs[u].push_back(v);
        nbrs[v].push_back(u);
        ++adj.loop_degrees[u];
        ++adj.loop_degrees[v];
    }
    adj.pattern.n = n;
    adj.pattern.row_ptr.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        nbrs[i].push_back(i);
        std::sort(nbrs[i].begin(), nbrs[i].end());
        adj.pattern.row_ptr[i + 1] = adj.pattern.row_ptr[i] + int(nbrs[i].size());
        for (int j : nbrs[i]) {
            adj.pattern.col_idx.push_back(j);
            adj.values.push_back(1.0 / std::sqrt(double(adj.loop_degrees[i]) *
                                                 double(adj.loop_degrees[j])));
        }
    }
    return adj;
}

double homophily_ratio(const Graph& g) {
    const auto& y = g.labels();
    if (g.edges().empty()) return 0.0;
    std::size_t same = 0;
    for (auto [u, v] : g.edges())
        if (y[u] == y[v]) ++same;
    return double(same) / double(g.edges().size());
}

double laplacian_quadratic(const Graph& g, const std::vector<double>& signal) {
    const int n = g.num_nodes();
    if (int(signal.size()) != n)
        throw DimensionError("laplacian_quadratic: signal length != num_nodes");
    const auto& deg = g.degrees();
    // f' f - f' D^{-1/2} A D^{-1/2} f, accumulated edge-wise
    double quad = 0.0;
    for (int v = 0; v < n; ++v) quad += signal[v] * signal[v];
    for (auto [u, v] : g.edges()) {
        quad -= 2.0 * signal[u] * signal[v] / std::sqrt(double(deg[u]) * double(deg[v]));
    }
    return quad;
}

}  // namespace h3gnn
