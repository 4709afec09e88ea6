#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "h3gnn/errors.hpp"

namespace h3gnn {

// Dense row-major matrix of 64-bit floats with an optional gradient buffer.
// Tensor is a cheap handle; copies share the underlying storage. Use clone()
// for a deep copy.
struct TensorData {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;  // same size as values iff requires_grad
    bool requires_grad = false;
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor full(int rows, int cols, double value, bool requires_grad = false);
    static Tensor from(int rows, int cols, std::vector<double> values,
                       bool requires_grad = false);

    bool defined() const { return data_ != nullptr; }
    int rows() const { return data_->rows; }
    int cols() const { return data_->cols; }
    std::size_t size() const { return data_->values.size(); }

    double* data() { return data_->values.data(); }
    const double* data() const { return data_->values.data(); }
    double& at(int r, int c) { return data_->values[std::size_t(r) * data_->cols + c]; }
    double at(int r, int c) const { return data_->values[std::size_t(r) * data_->cols + c]; }

    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool on);
    double* grad() { return data_->grad.empty() ? nullptr : data_->grad.data(); }
    const double* grad() const { return data_->grad.empty() ? nullptr : data_->grad.data(); }
    void zero_grad();

    // Deep copy. The copy never carries gradient history.
    Tensor clone(bool requires_grad = false) const;

    bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

    std::shared_ptr<TensorData> handle() const { return data_; }

  private:
    explicit Tensor(std::shared_ptr<TensorData> d) : data_(std::move(d)) {}
    std::shared_ptr<TensorData> data_;
};

// Records the operations of one forward pass in topological order; backward()
// replays them once, in reverse. Cleared between training steps.
class Tape {
  public:
    void record(std::function<void()> backward_fn) {
        if (recording_) nodes_.push_back(std::move(backward_fn));
    }
    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and propagates through all recorded ops.
    void backward(const Tensor& scalar_loss);

    // Disables recording for the guard's lifetime (teacher / evaluation passes).
    class NoGrad {
      public:
        explicit NoGrad(Tape& tape) : tape_(tape), prev_(tape.recording_) {
            tape_.recording_ = false;
        }
        ~NoGrad() { tape_.recording_ = prev_; }
        NoGrad(const NoGrad&) = delete;
        NoGrad& operator=(const NoGrad&) = delete;

      private:
        Tape& tape_;
        bool prev_;
    };

  private:
    std::vector<std::function<void()>> nodes_;
    bool recording_ = true;
};

// Square sparse pattern in CSR form; the numeric values live in a separate
// 1 x nnz Tensor so they can be learnable. Column indices are ascending
// within each row, which fixes the accumulation order.
struct SparsePattern {
    int n = 0;
    std::vector<int> row_ptr;  // n + 1 entries
    std::vector<int> col_idx;  // nnz entries
    int nnz() const { return int(col_idx.size()); }
    // index of entry (r, c), or -1 when the pattern has no such entry
    int find(int r, int c) const;
};

// --- Recorded operations -------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// b may be 1 x n; it is then broadcast across the rows of a.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor relu(Tape& tape, const Tensor& a);
Tensor gelu(Tape& tape, const Tensor& a);  // tanh approximation
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);
// Mean over rows of the squared row-wise L2 difference.
Tensor mse_mean(Tape& tape, const Tensor& a, const Tensor& b);
// Inverted dropout; identity when !training or p == 0.
Tensor dropout(Tape& tape, const Tensor& a, double p, std::mt19937_64& rng, bool training);
// out = A(values) * h where A is the pattern with the given entry values.
Tensor adj_matmul(Tape& tape, const SparsePattern& pattern, const Tensor& values,
                  const Tensor& h);
// Rows of `base` where mask[i] != 0 are replaced by the 1 x d `fill` row.
Tensor row_blend(Tape& tape, const Tensor& base, const std::vector<std::uint8_t>& mask,
                 const Tensor& fill);
// Mean over rows with mask[i] != 0 of -log softmax(logits[i])[labels[i]].
Tensor cross_entropy_masked(Tape& tape, const Tensor& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& mask);

// Number of worker threads used by the adjacency-multiply forward kernel.
// 1 (the default) is the bitwise-reproducible contract mode.
void set_adjacency_threads(int n);
int adjacency_threads();

// --- Initialization and RNG helpers --------------------------------------

// Deterministic uniform in [0, 1) from the raw generator stream.
double uniform01(std::mt19937_64& rng);
// Deterministic standard normal (polar method, no cached spare).
double normal01(std::mt19937_64& rng);

// Uniform in +-sqrt(6 / (fan_in + fan_out)); fan_in = rows, fan_out = cols.
Tensor glorot_init(int rows, int cols, std::mt19937_64& rng, bool requires_grad = true);
Tensor glorot_init(int rows, int cols, std::uint64_t seed, bool requires_grad = true);
Tensor normal_init(int rows, int cols, std::mt19937_64& rng, bool requires_grad = true);

bool all_finite(const Tensor& t);

}  // namespace h3gnn
