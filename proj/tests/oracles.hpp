#pragma once

// Test-only oracles. These stay independent of the library's backward path:
// finite differences probe the forward computation only.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "h3gnn/tensor.hpp"

namespace oracle {

struct FdResult {
    double max_rel_err = 0.0;
    std::string worst;  // "param[i]" of the worst entry
};

// Central finite differences (default step 1e-5) of a scalar-valued forward
// against the tape's analytic gradients, for every entry of every parameter.
// `forward` must rebuild the computation from the parameters' current values.
inline FdResult fd_check(const std::function<h3gnn::Tensor(h3gnn::Tape&)>& forward,
                         const std::vector<std::pair<std::string, h3gnn::Tensor>>& params,
                         double step = 1e-5) {
    using h3gnn::Tape;
    using h3gnn::Tensor;
    for (auto& [name, p] : params) const_cast<Tensor&>(p).zero_grad();

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = forward(tape);
        tape.backward(loss);
        for (auto& [name, p] : params) {
            const double* g = p.grad();
            analytic.emplace_back(g, g + p.size());
        }
    }

    auto eval = [&]() {
        Tape tape;
        Tape::NoGrad guard(tape);
        return forward(tape).data()[0];
    };

    FdResult res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + step;
            const double up = eval();
            p.data()[i] = saved - step;
            const double dn = eval();
            p.data()[i] = saved;
            const double fd = (up - dn) / (2.0 * step);
            const double an = analytic[k][i];
            const double rel = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = params[k].first + "[" + std::to_string(i) + "]";
            }
        }
        const_cast<Tensor&>(params[k].second).zero_grad();
    }
    return res;
}

inline h3gnn::Tensor random_tensor(int rows, int cols, std::mt19937_64& rng,
                                   bool requires_grad = true, double scl = 1.0) {
    h3gnn::Tensor t = h3gnn::Tensor::zeros(rows, cols, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = scl * (2.0 * h3gnn::uniform01(rng) - 1.0);
    return t;
}

}  // namespace oracle

#include "h3gnn/graph.hpp"

namespace oracle {

// Plain GCN propagation sigma(A_hat * (H W)) computed independently of the
// tape: dense adjacency application with ascending-column accumulation.
inline h3gnn::Tensor gcn_propagate(const h3gnn::NormalizedAdjacency& adj,
                                   const h3gnn::Tensor& hw, bool activate) {
    const int n = adj.pattern.n, c = hw.cols();
    h3gnn::Tensor out = h3gnn::Tensor::zeros(n, c);
    for (int i = 0; i < n; ++i)
        for (int k = adj.pattern.row_ptr[i]; k < adj.pattern.row_ptr[i + 1]; ++k) {
            const int j = adj.pattern.col_idx[k];
            for (int col = 0; col < c; ++col)
                out.at(i, col) += adj.values[k] * hw.at(j, col);
        }
    if (activate)
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] = std::max(0.0, out.data()[i]);
    return out;
}

}  // namespace oracle
