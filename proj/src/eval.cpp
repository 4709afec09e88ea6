#include "h3gnn/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "h3gnn/optim.hpp"

namespace h3gnn {

namespace {

double masked_accuracy(const Tensor& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask) {
    int correct = 0, total = 0;
    for (int i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        correct += best == labels[i] ? 1 : 0;
        ++total;
    }
    return total == 0 ? 0.0 : double(correct) / total;
}

}  // namespace

ProbeResult linear_probe(const Tensor& embeddings, const std::vector<int>& labels,
                         const SplitMasks& split, const ProbeConfig& cfg) {
    if (embeddings.requires_grad())
        throw StateError("linear_probe: embeddings must be detached");
    if (cfg.epochs <= 0) throw ArgumentError("linear_probe: epochs must be positive");
    const int n = embeddings.rows(), d = embeddings.cols();
    if (int(labels.size()) != n) throw DimensionError("linear_probe: label count mismatch");
    int train_count = 0;
    for (auto b : split.train) train_count += b ? 1 : 0;
    if (train_count == 0) throw StateError("linear_probe: empty train mask");
    int classes = 0;
    for (int y : labels) classes = std::max(classes, y + 1);

    std::mt19937_64 rng(cfg.seed);
    Tensor w = glorot_init(d, classes, rng);
    Tensor b = Tensor::zeros(1, classes, true);
    Optimizer opt({OptimizerKind::sgd, cfg.learning_rate, cfg.weight_decay}, {w, b});

    ProbeResult best;
    best.best_val_accuracy = -1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tape tape;
        Tensor logits = add(tape, matmul(tape, embeddings, w), b);
        Tensor loss = cross_entropy_masked(tape, logits, labels, split.train);
        tape.backward(loss);
        opt.step();

        Tape eval_tape;
        Tape::NoGrad guard(eval_tape);
        Tensor eval_logits = add(eval_tape, matmul(eval_tape, embeddings, w), b);
        const double val_acc = masked_accuracy(eval_logits, labels, split.val);
        if (val_acc > best.best_val_accuracy) {
            best.best_val_accuracy = val_acc;
            best.best_epoch = epoch;
            best.weight = w.clone();
            best.bias = b.clone();
        }
    }
    // test labels are only consulted here, after model selection
    Tape tape;
    Tape::NoGrad guard(tape);
    Tensor logits = add(tape, matmul(tape, embeddings, best.weight), best.bias);
    best.test_accuracy = masked_accuracy(logits, labels, split.test);
    return best;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = int(cost.size());
    for (const auto& row : cost)
        if (int(row.size()) != n) throw ArgumentError("hungarian: cost matrix must be square");
    // shortest augmenting path with potentials, 1-indexed internals
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
}

KMeansResult lloyd_once(const Tensor& pts, int k, std::mt19937_64& rng, int max_iters) {
    const int n = pts.rows(), d = pts.cols();
    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    const int first = int(uniform01(rng) * n);
    centers.emplace_back(pts.data() + std::size_t(first) * d,
                         pts.data() + std::size_t(first + 1) * d);
    std::vector<double> dist(n);
    while (int(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers)
                best = std::min(best, sq_dist(pts.data() + std::size_t(i) * d, c.data(), d));
            dist[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = int(uniform01(rng) * n);  // all points coincide with centers
        } else {
            double target = uniform01(rng) * total;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                target -= dist[i];
                if (target <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.emplace_back(pts.data() + std::size_t(pick) * d,
                             pts.data() + std::size_t(pick + 1) * d);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(pts.data() + std::size_t(i) * d, centers[0].data(), d);
            for (int c = 1; c < k; ++c) {
                const double dd = sq_dist(pts.data() + std::size_t(i) * d, centers[c].data(), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<int> counts(k, 0);
        for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (int j = 0; j < d; ++j) centers[assign[i]][j] += pts.at(i, j);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // adopt the point farthest from its centroid
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dd =
                        sq_dist(pts.data() + std::size_t(i) * d, centers[assign[i]].data(), d);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                for (int j = 0; j < d; ++j) centers[c][j] = pts.at(far, j);
                counts[c] = 1;
            } else {
                for (int j = 0; j < d; ++j) centers[c][j] /= counts[c];
            }
        }
    }
    KMeansResult res;
    res.assignment = std::move(assign);
    res.inertia = 0.0;
    for (int i = 0; i < n; ++i)
        res.inertia += sq_dist(pts.data() + std::size_t(i) * d,
                               centers[res.assignment[i]].data(), d);
    return res;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed, int restarts,
                    int max_iters) {
    if (k <= 0 || k > points.rows()) throw ArgumentError("kmeans: need 0 < k <= n");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        KMeansResult cur = lloyd_once(points, k, rng, max_iters);
        if (cur.inertia < best.inertia) best = std::move(cur);
    }
    return best;
}

double kmeans_accuracy(const Tensor& embeddings, const std::vector<int>& labels, int k,
                       std::uint64_t seed, int restarts) {
    const int n = embeddings.rows();
    if (k > n) throw ArgumentError("kmeans_accuracy: k exceeds the number of points");
    KMeansResult km = kmeans(embeddings, k, seed, restarts);

    int classes = 0;
    for (int y : labels) classes = std::max(classes, y + 1);
    const int dim = std::max(k, classes);
    std::vector<std::vector<double>> confusion(dim, std::vector<double>(dim, 0.0));
    for (int i = 0; i < n; ++i) confusion[km.assignment[i]][labels[i]] += 1.0;

    double top = 0.0;
    for (const auto& row : confusion)
        for (double v : row) top = std::max(top, v);
    std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) cost[i][j] = top - confusion[i][j];
    auto match = hungarian(cost);

    double correct = 0.0;
    for (int c = 0; c < dim; ++c)
        if (match[c] >= 0) correct += confusion[c][match[c]];
    return correct / n;
}

Tensor embed_full(const Graph& g, const EncoderParams& model) {
    NormalizedAdjacency adj = normalize_adjacency(g);
    Tape tape;
    Tape::NoGrad guard(tape);
    return encode(tape, model, g.features(), adj);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

double population_std(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    const double mu = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / double(xs.size()));
}

Tensor l2_normalize_rows(const Tensor& x) {
    Tensor out = x.clone();
    for (int i = 0; i < out.rows(); ++i) {
        double norm = 0.0;
        double* row = out.data() + std::size_t(i) * out.cols();
        for (int j = 0; j < out.cols(); ++j) norm += row[j] * row[j];
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (int j = 0; j < out.cols(); ++j) row[j] /= norm;
    }
    return out;
}

namespace {

Metrics run_protocol(const Tensor& embeddings, const Graph& g, Protocol protocol,
                     const std::vector<SplitMasks>& splits, const ProbeConfig& cfg,
                     const ClusterConfig& cluster) {
    const auto t0 = std::chrono::steady_clock::now();
    Metrics m;
    m.protocol = protocol == Protocol::probe ? "probe" : "cluster";
    if (protocol == Protocol::probe) {
        if (splits.empty()) throw StateError("evaluate_run: no splits to probe");
        for (std::size_t s = 0; s < splits.size(); ++s) {
            ProbeConfig pc = cfg;
            pc.seed = cfg.seed + s;
            ProbeResult r = linear_probe(embeddings, g.labels(), splits[s], pc);
            m.per_split.push_back(r.test_accuracy);
            m.per_split_val.push_back(r.best_val_accuracy);
            m.seeds.push_back(pc.seed);
        }
    } else {
        const int k = g.num_classes();
        const int runs = splits.empty() ? 10 : int(splits.size());
        const Tensor pts = cluster.normalize ? l2_normalize_rows(embeddings) : embeddings;
        for (int s = 0; s < runs; ++s) {
            const std::uint64_t seed = cfg.seed + std::uint64_t(s);
            m.per_split.push_back(
                kmeans_accuracy(pts, g.labels(), k, seed, cluster.restarts));
            m.seeds.push_back(seed);
        }
    }
    m.mean = mean_of(m.per_split);
    m.stddev = population_std(m.per_split);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

}  // namespace

Metrics evaluate_run(const Graph& g, const EncoderParams& model, Protocol protocol,
                     const std::vector<SplitMasks>& splits, const ProbeConfig& cfg,
                     const ClusterConfig& cluster) {
    Tensor embeddings = embed_full(g, model);
    return run_protocol(embeddings, g, protocol, splits, cfg, cluster);
}

Metrics evaluate_raw(const Graph& g, Protocol protocol, const std::vector<SplitMasks>& splits,
                     const ProbeConfig& cfg, const ClusterConfig& cluster) {
    return run_protocol(g.features(), g, protocol, splits, cfg, cluster);
}

}  // namespace h3gnn
