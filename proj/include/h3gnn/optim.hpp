#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "h3gnn/tensor.hpp"

namespace h3gnn {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;  // decoupled
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam (decoupled weight decay) or plain gradient descent over a fixed
// parameter list. Gradients are zeroed after each step.
class Optimizer {
  public:
    Optimizer(OptimizerConfig cfg, std::vector<Tensor> params);

    void step();
    std::int64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

    // Moment buffers, exposed for checkpointing. Empty for sgd.
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    void set_step_count(std::int64_t n) { step_count_ = n; }

  private:
    OptimizerConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t step_count_ = 0;
};

}  // namespace h3gnn
