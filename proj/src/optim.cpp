#include "h3gnn/optim.hpp"

#include <cmath>

namespace h3gnn {

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    if (cfg_.learning_rate < 0.0) throw ArgumentError("Optimizer: negative learning rate");
    if (cfg_.weight_decay < 0.0) throw ArgumentError("Optimizer: negative weight decay");
    for (const auto& p : params_) {
        if (!p.defined() || !p.requires_grad())
            throw StateError("Optimizer: parameter without gradient buffer");
    }
    if (cfg_.kind == OptimizerKind::adam) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.push_back(Tensor::zeros(p.rows(), p.cols()));
            v_.push_back(Tensor::zeros(p.rows(), p.cols()));
        }
    }
}

void Optimizer::step() {
    ++step_count_;
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::sgd) {
        for (auto& p : params_) {
            if (!p.grad()) throw StateError("Optimizer::step: missing grad");
            double* w = p.data();
            const double* g = p.grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                w[i] -= lr * g[i];
                w[i] -= lr * cfg_.weight_decay * w[i];
            }
            p.zero_grad();
        }
        return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_count_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        if (!p.grad()) throw StateError("Optimizer::step: missing grad");
        double* w = p.data();
        const double* g = p.grad();
        double* m = m_[k].data();
        double* v = v_[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            w[i] -= lr * cfg_.weight_decay * w[i];
        }
        p.zero_grad();
    }
}

}  // namespace h3gnn
