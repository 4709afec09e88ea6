#include "h3gnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace h3gnn {

namespace {

// BLAS must not spawn threads: training-path results are bitwise
// deterministic by contract.
struct BlasSetup {
    BlasSetup() { openblas_set_num_threads(1); }
};
const BlasSetup blas_setup;

std::atomic<int> g_adjacency_threads{1};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    if (rows <= 0 || cols <= 0)
        throw DimensionError("Tensor::zeros: non-positive dimension");
    auto d = std::make_shared<TensorData>();
    d->rows = rows;
    d->cols = cols;
    d->values.assign(std::size_t(rows) * cols, 0.0);
    if (requires_grad) {
        d->requires_grad = true;
        d->grad.assign(d->values.size(), 0.0);
    }
    return Tensor(std::move(d));
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
    Tensor t = zeros(rows, cols, requires_grad);
    std::fill(t.data(), t.data() + t.size(), value);
    return t;
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != std::size_t(rows) * cols)
        throw DimensionError("Tensor::from: value count does not match shape");
    Tensor t = zeros(rows, cols, requires_grad);
    std::copy(values.begin(), values.end(), t.data());
    return t;
}

void Tensor::set_requires_grad(bool on) {
    data_->requires_grad = on;
    if (on)
        data_->grad.assign(data_->values.size(), 0.0);
    else
        data_->grad.clear();
}

void Tensor::zero_grad() {
    if (!data_->grad.empty()) std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor t = zeros(rows(), cols(), requires_grad);
    std::copy(data(), data() + size(), t.data());
    return t;
}

void Tape::backward(const Tensor& scalar_loss) {
    if (scalar_loss.rows() != 1 || scalar_loss.cols() != 1)
        throw DimensionError("Tape::backward: loss must be 1x1");
    if (!scalar_loss.requires_grad())
        throw StateError("Tape::backward: loss does not require grad");
    const_cast<Tensor&>(scalar_loss).grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

int SparsePattern::find(int r, int c) const {
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        if (col_idx[k] == c) return k;
    return -1;
}

namespace {

// Creates the output tensor of an op: it needs a grad buffer whenever some
// input will receive gradient through it.
Tensor make_output(int rows, int cols, bool any_input_grad, const Tape& tape) {
    return Tensor::zeros(rows, cols, any_input_grad && tape.recording());
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = make_output(m, n, a.requires_grad() || b.requires_grad(), tape);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a.data(), k, b.data(),
                n, 0.0, out.data(), n);
    if (out.requires_grad()) {
        auto ha = a.handle(), hb = b.handle(), ho = out.handle();
        tape.record([ha, hb, ho, m, k, n] {
            const double* g = ho->grad.data();
            if (ha->requires_grad)
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0, g, n,
                            hb->values.data(), n, 1.0, ha->grad.data(), k);
            if (hb->requires_grad)
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0,
                            ha->values.data(), k, g, n, 1.0, hb->grad.data(), n);
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    const bool broadcast = (b.rows() == 1 && a.rows() != 1);
    if (broadcast) {
        if (b.cols() != a.cols()) throw DimensionError("add: broadcast width mismatch");
    } else {
        check_same_shape(a, b, "add");
    }
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(), tape);
    const int rows = a.rows(), cols = a.cols();
    for (int i = 0; i < rows; ++i) {
        const double* pa = a.data() + std::size_t(i) * cols;
        const double* pb = b.data() + (broadcast ? 0 : std::size_t(i) * cols);
        double* po = out.data() + std::size_t(i) * cols;
        for (int j = 0; j < cols; ++j) po[j] = pa[j] + pb[j];
    }
    if (out.requires_grad()) {
        auto ha = a.handle(), hb = b.handle(), ho = out.handle();
        tape.record([ha, hb, ho, rows, cols, broadcast] {
            const double* g = ho->grad.data();
            if (ha->requires_grad)
                for (std::size_t i = 0; i < ha->grad.size(); ++i) ha->grad[i] += g[i];
            if (hb->requires_grad) {
                if (broadcast) {
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j)
                            hb->grad[j] += g[std::size_t(i) * cols + j];
                } else {
                    for (std::size_t i = 0; i < hb->grad.size(); ++i) hb->grad[i] += g[i];
                }
            }
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (out.requires_grad()) {
        auto ha = a.handle(), hb = b.handle(), ho = out.handle();
        tape.record([ha, hb, ho] {
            const double* g = ho->grad.data();
            if (ha->requires_grad)
                for (std::size_t i = 0; i < ha->grad.size(); ++i) ha->grad[i] += g[i];
            if (hb->requires_grad)
                for (std::size_t i = 0; i < hb->grad.size(); ++i) hb->grad[i] -= g[i];
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
        auto ha = a.handle(), hb = b.handle(), ho = out.handle();
        tape.record([ha, hb, ho] {
            const double* g = ho->grad.data();
            if (ha->requires_grad)
                for (std::size_t i = 0; i < ha->grad.size(); ++i)
                    ha->grad[i] += g[i] * hb->values[i];
            if (hb->requires_grad)
                for (std::size_t i = 0; i < hb->grad.size(); ++i)
                    hb->grad[i] += g[i] * ha->values[i];
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    if (out.requires_grad()) {
        auto ha = a.handle(), ho = out.handle();
        tape.record([ha, ho, s] {
            for (std::size_t i = 0; i < ha->grad.size(); ++i) ha->grad[i] += s * ho->grad[i];
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i)
        out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    if (out.requires_grad()) {
        auto ha = a.handle(), ho = out.handle();
        tape.record([ha, ho] {
            for (std::size_t i = 0; i < ha->grad.size(); ++i)
                if (ha->values[i] > 0.0) ha->grad[i] += ho->grad[i];
        });
    }
    return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(Tape& tape, const Tensor& a) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        out.data()[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    if (out.requires_grad()) {
        auto ha = a.handle(), ho = out.handle();
        tape.record([ha, ho] {
            for (std::size_t i = 0; i < ha->grad.size(); ++i) {
                const double x = ha->values[i];
                const double u = kGeluC * (x + kGeluA * x * x * x);
                const double t = std::tanh(u);
                const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
                const double dydx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                ha->grad[i] += ho->grad[i] * dydx;
            }
        });
    }
    return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), tape);
    const int rows = a.rows(), cols = a.cols();
    for (int i = 0; i < rows; ++i) {
        const double* pa = a.data() + std::size_t(i) * cols;
        double* po = out.data() + std::size_t(i) * cols;
        double mx = pa[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, pa[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            po[j] = std::exp(pa[j] - mx);
            sum += po[j];
        }
        for (int j = 0; j < cols; ++j) po[j] /= sum;
    }
    if (out.requires_grad()) {
        auto ha = a.handle(), ho = out.handle();
        tape.record([ha, ho, rows, cols] {
            for (int i = 0; i < rows; ++i) {
                const double* y = ho->values.data() + std::size_t(i) * cols;
                const double* g = ho->grad.data() + std::size_t(i) * cols;
                double* gx = ha->grad.data() + std::size_t(i) * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
                for (int j = 0; j < cols; ++j) gx[j] += y[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const int rows = x.rows(), cols = x.cols();
    if (cols < 2) throw DimensionError("layer_norm: needs at least 2 columns");
    if (gain.rows() != 1 || gain.cols() != cols || bias.rows() != 1 || bias.cols() != cols)
        throw DimensionError("layer_norm: gain/bias must be 1 x cols");
    constexpr double kEps = 1e-5;
    const bool needs_grad = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
    Tensor out = make_output(rows, cols, needs_grad, tape);
    // Normalized rows are kept for backward and for tests that inspect the
    // pre-affine statistics.
    std::vector<double> xhat(std::size_t(rows) * cols);
    std::vector<double> inv_std(rows);
    for (int i = 0; i < rows; ++i) {
        const double* px = x.data() + std::size_t(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += px[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (px[j] - mean) * (px[j] - mean);
        var /= cols;
        const double s = 1.0 / std::sqrt(var + kEps);
        inv_std[i] = s;
        double* ph = xhat.data() + std::size_t(i) * cols;
        double* po = out.data() + std::size_t(i) * cols;
        for (int j = 0; j < cols; ++j) {
            ph[j] = (px[j] - mean) * s;
            po[j] = ph[j] * gain.data()[j] + bias.data()[j];
        }
    }
    if (out.requires_grad()) {
        auto hx = x.handle(), hg = gain.handle(), hb = bias.handle(), ho = out.handle();
        tape.record([hx, hg, hb, ho, rows, cols, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)] {
            for (int i = 0; i < rows; ++i) {
                const double* g = ho->grad.data() + std::size_t(i) * cols;
                const double* h = xhat.data() + std::size_t(i) * cols;
                if (hg->requires_grad)
                    for (int j = 0; j < cols; ++j) hg->grad[j] += g[j] * h[j];
                if (hb->requires_grad)
                    for (int j = 0; j < cols; ++j) hb->grad[j] += g[j];
                if (hx->requires_grad) {
                    double gh_mean = 0.0, ghh_mean = 0.0;
                    for (int j = 0; j < cols; ++j) {
                        const double gh = g[j] * hg->values[j];
                        gh_mean += gh;
                        ghh_mean += gh * h[j];
                    }
                    gh_mean /= cols;
                    ghh_mean /= cols;
                    double* gx = hx->grad.data() + std::size_t(i) * cols;
                    for (int j = 0; j < cols; ++j) {
                        const double gh = g[j] * hg->values[j];
                        gx[j] += inv_std[i] * (gh - gh_mean - h[j] * ghh_mean);
                    }
                }
            }
        });
    }
    return out;
}

Tensor mse_mean(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_mean");
    const int rows = a.rows();
    Tensor out = make_output(1, 1, a.requires_grad() || b.requires_grad(), tape);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        total += d * d;
    }
    out.data()[0] = total / rows;
    if (out.requires_grad()) {
        auto ha = a.handle(), hb = b.handle(), ho = out.handle();
        tape.record([ha, hb, ho, rows] {
            const double g = ho->grad[0] * 2.0 / rows;
            for (std::size_t i = 0; i < ha->values.size(); ++i) {
                const double d = g * (ha->values[i] - hb->values[i]);
                if (ha->requires_grad) ha->grad[i] += d;
                if (hb->requires_grad) hb->grad[i] -= d;
            }
        });
    }
    return out;
}

Tensor dropout(Tape& tape, const Tensor& a, double p, std::mt19937_64& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ArgumentError("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
    Tensor out = make_output(a.rows(), a.cols(), a.requires_grad(), tape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * mask[i];
    if (out.requires_grad()) {
        auto ha = a.handle(), ho = out.handle();
        tape.record([ha, ho, mask = std::move(mask)] {
            for (std::size_t i = 0; i < ha->grad.size(); ++i)
                ha->grad[i] += ho->grad[i] * mask[i];
        });
    }
    return out;
}

namespace {

void adj_forward_rows(const SparsePattern& pat, const double* vals, const double* h, int cols,
                      double* out, int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
        double* po = out + std::size_t(i) * cols;
        for (int k = pat.row_ptr[i]; k < pat.row_ptr[i + 1]; ++k) {
            const double v = vals[k];
            const double* ph = h + std::size_t(pat.col_idx[k]) * cols;
            for (int j = 0; j < cols; ++j) po[j] += v * ph[j];
        }
    }
}

}  // namespace

Tensor adj_matmul(Tape& tape, const SparsePattern& pattern, const Tensor& values,
                  const Tensor& h) {
    if (values.rows() != 1 || values.cols() != pattern.nnz())
        throw StateError("adj_matmul: values do not align with the pattern");
    if (h.rows() != pattern.n) throw DimensionError("adj_matmul: row count mismatch");
    const int n = pattern.n, cols = h.cols();
    Tensor out = make_output(n, cols, values.requires_grad() || h.requires_grad(), tape);
    const int workers = adjacency_threads();
    if (workers <= 1 || n < 2 * workers) {
        adj_forward_rows(pattern, values.data(), h.data(), cols, out.data(), 0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int lo = w * chunk, hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(adj_forward_rows, std::cref(pattern), values.data(), h.data(),
                              cols, out.data(), lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    if (out.requires_grad()) {
        auto hv = values.handle(), hh = h.handle(), ho = out.handle();
        const SparsePattern* pat = &pattern;  // pattern outlives the tape by contract
        tape.record([hv, hh, ho, pat, n, cols] {
            const double* g = ho->grad.data();
            for (int i = 0; i < n; ++i) {
                const double* gi = g + std::size_t(i) * cols;
                for (int k = pat->row_ptr[i]; k < pat->row_ptr[i + 1]; ++k) {
                    const int j = pat->col_idx[k];
                    const double* hj = hh->values.data() + std::size_t(j) * cols;
                    if (hv->requires_grad) {
                        double acc = 0.0;
                        for (int c = 0; c < cols; ++c) acc += gi[c] * hj[c];
                        hv->grad[k] += acc;
                    }
                    if (hh->requires_grad) {
                        double* gh = hh->grad.data() + std::size_t(j) * cols;
                        const double v = hv->values[k];
                        for (int c = 0; c < cols; ++c) gh[c] += v * gi[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor row_blend(Tape& tape, const Tensor& base, const std::vector<std::uint8_t>& mask,
                 const Tensor& fill) {
    if (int(mask.size()) != base.rows()) throw DimensionError("row_blend: mask length mismatch");
    if (fill.rows() != 1 || fill.cols() != base.cols())
        throw DimensionError("row_blend: fill must be 1 x cols");
    const int rows = base.rows(), cols = base.cols();
    Tensor out = make_output(rows, cols, base.requires_grad() || fill.requires_grad(), tape);
    for (int i = 0; i < rows; ++i) {
        const double* src = mask[i] ? fill.data() : base.data() + std::size_t(i) * cols;
        std::memcpy(out.data() + std::size_t(i) * cols, src, sizeof(double) * cols);
    }
    if (out.requires_grad()) {
        auto hb = base.handle(), hf = fill.handle(), ho = out.handle();
        tape.record([hb, hf, ho, mask, rows, cols] {
            for (int i = 0; i < rows; ++i) {
                const double* g = ho->grad.data() + std::size_t(i) * cols;
                if (mask[i]) {
                    if (hf->requires_grad)
                        for (int j = 0; j < cols; ++j) hf->grad[j] += g[j];
                } else if (hb->requires_grad) {
                    double* gb = hb->grad.data() + std::size_t(i) * cols;
                    for (int j = 0; j < cols; ++j) gb[j] += g[j];
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy_masked(Tape& tape, const Tensor& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& mask) {
    const int rows = logits.rows(), cols = logits.cols();
    if (int(labels.size()) != rows || int(mask.size()) != rows)
        throw DimensionError("cross_entropy_masked: labels/mask length mismatch");
    int count = 0;
    for (auto m : mask) count += m ? 1 : 0;
    if (count == 0) throw StateError("cross_entropy_masked: empty mask");
    // softmax probabilities are kept for backward
    std::vector<double> probs(std::size_t(rows) * cols);
    double loss = 0.0;
    for (int i = 0; i < rows; ++i) {
        const double* pl = logits.data() + std::size_t(i) * cols;
        double* pp = probs.data() + std::size_t(i) * cols;
        double mx = pl[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, pl[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            pp[j] = std::exp(pl[j] - mx);
            sum += pp[j];
        }
        for (int j = 0; j < cols; ++j) pp[j] /= sum;
        if (mask[i]) {
            if (labels[i] < 0 || labels[i] >= cols)
                throw ArgumentError("cross_entropy_masked: label out of range");
            loss -= std::log(std::max(pp[labels[i]], 1e-300));
        }
    }
    Tensor out = make_output(1, 1, logits.requires_grad(), tape);
    out.data()[0] = loss / count;
    if (out.requires_grad()) {
        auto hl = logits.handle(), ho = out.handle();
        tape.record([hl, ho, labels, mask, rows, cols, count, probs = std::move(probs)] {
            const double g = ho->grad[0] / count;
            for (int i = 0; i < rows; ++i) {
                if (!mask[i]) continue;
                const double* pp = probs.data() + std::size_t(i) * cols;
                double* gl = hl->grad.data() + std::size_t(i) * cols;
                for (int j = 0; j < cols; ++j)
                    gl[j] += g * (pp[j] - (j == labels[i] ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

void set_adjacency_threads(int n) { g_adjacency_threads = std::max(1, n); }
int adjacency_threads() { return g_adjacency_threads; }

double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

double normal01(std::mt19937_64& rng) {
    // polar rejection; draws are consumed deterministically
    for (;;) {
        const double u = 2.0 * uniform01(rng) - 1.0;
        const double v = 2.0 * uniform01(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

Tensor glorot_init(int rows, int cols, std::mt19937_64& rng, bool requires_grad) {
    if (rows <= 0 || cols <= 0) throw DimensionError("glorot_init: non-positive dimension");
    const double bound = std::sqrt(6.0 / (rows + cols));
    Tensor t = Tensor::zeros(rows, cols, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
    return t;
}

Tensor glorot_init(int rows, int cols, std::uint64_t seed, bool requires_grad) {
    std::mt19937_64 rng(seed);
    return glorot_init(rows, cols, rng, requires_grad);
}

Tensor normal_init(int rows, int cols, std::mt19937_64& rng, bool requires_grad) {
    Tensor t = Tensor::zeros(rows, cols, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = normal01(rng);
    return t;
}

bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t.data()[i])) return false;
    return true;
}

}  // namespace h3gnn
