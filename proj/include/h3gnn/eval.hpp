#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h3gnn/encoder.hpp"
#include "h3gnn/graph.hpp"

namespace h3gnn {

struct ProbeConfig {
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    int epochs = 300;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    double test_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
    Tensor weight;  // the selected classifier
    Tensor bias;
};

// Single affine layer over frozen embeddings, softmax cross-entropy,
// full-batch gradient descent; the classifier is selected by best validation
// accuracy and only then measured on the test mask.
ProbeResult linear_probe(const Tensor& embeddings, const std::vector<int>& labels,
                         const SplitMasks& split, const ProbeConfig& cfg);

// k-means (k-means++ seeding, `restarts` restarts, best inertia) followed by
// Hungarian cluster-to-class matching; returns the matched fraction.
double kmeans_accuracy(const Tensor& embeddings, const std::vector<int>& labels, int k,
                       std::uint64_t seed, int restarts = 10);

struct KMeansResult {
    std::vector<int> assignment;
    double inertia = 0.0;
};
KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed, int restarts = 10,
                    int max_iters = 100);

// Min-cost perfect assignment on a square cost matrix; returns row -> col.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct Metrics {
    std::string protocol;
    std::vector<double> per_split;      // test accuracy (probe) or ACC (cluster)
    std::vector<double> per_split_val;  // probe only: the selection metric
    double mean = 0.0;
    double stddev = 0.0;  // population formula: sqrt(mean((x - mean)^2))
    std::vector<std::uint64_t> seeds;
    double wall_seconds = 0.0;
};

enum class Protocol { probe, cluster };

struct ClusterConfig {
    int restarts = 10;
    bool normalize = false;  // L2-normalize embedding rows before k-means
};

// Embeds the full (unmasked) graph once with the given encoder and runs the
// protocol per split (probe) or per seed (cluster), aggregating mean +- std.
Metrics evaluate_run(const Graph& g, const EncoderParams& model, Protocol protocol,
                     const std::vector<SplitMasks>& splits, const ProbeConfig& cfg,
                     const ClusterConfig& cluster = {});

// Evaluation-mode embedding of the full graph (no dropout, detached).
Tensor embed_full(const Graph& g, const EncoderParams& model);

Tensor l2_normalize_rows(const Tensor& x);

// Same protocols on the raw input features (the no-training reference).
Metrics evaluate_raw(const Graph& g, Protocol protocol, const std::vector<SplitMasks>& splits,
                     const ProbeConfig& cfg, const ClusterConfig& cluster = {});

double mean_of(const std::vector<double>& xs);
double population_std(const std::vector<double>& xs);

}  // namespace h3gnn
