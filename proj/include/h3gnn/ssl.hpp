#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "h3gnn/encoder.hpp"
#include "h3gnn/graph.hpp"
#include "h3gnn/optim.hpp"

namespace h3gnn {

enum class MaskStrategy { random, diffi, prob };
MaskStrategy mask_strategy_from_string(const std::string& s);
std::string to_string(MaskStrategy s);

// Student (trained) and teacher (momentum copy, never receives gradients).
// Both start from the same initialization.
struct StudentTeacher {
    EncoderParams student;  // trained
    EncoderParams teacher;  // momentum copy
    double momentum = 0.99;
    int epoch = 0;
    int total_epochs = 0;

    static StudentTeacher init(EncoderParams student, double momentum, int total_epochs);
};

// teacher <- momentum * teacher + (1 - momentum) * student, elementwise over
// every encoder tensor (edge weights included); runs once per epoch.
void ema_update(StudentTeacher& st);

// Mask bookkeeping: the shared learnable mask token, the current epoch's
// mask, and the difficulty scores carried from the previous iteration.
struct MaskState {
    MaskStrategy strategy = MaskStrategy::prob;
    double overall_ratio = 0.5;    // R: fraction of nodes masked
    double exploit_ratio = 0.5;    // r: difficulty-driven share of the budget
    int warmup_epochs = 20;        // random masking before strategies kick in
    Tensor mask_features;          // 1 x d, learnable, N(0,1) init
    std::vector<std::uint8_t> current;
    std::vector<double> difficulty;
};

struct TrainConfig {
    EncoderConfig encoder;
    double learning_rate = 0.005;
    double weight_decay = 0.0;
    int epochs = 200;
    double momentum_alpha = 0.99;
    double mask_ratio = 0.5;     // R
    double exploit_ratio = 0.5;  // r
    int warmup_epochs = 20;
    MaskStrategy strategy = MaskStrategy::prob;
    std::uint64_t seed = 0;

    // Values outside the published search grids are accepted; this returns
    // one warning per off-grid setting.
    std::vector<std::string> grid_warnings() const;
};

// Masked rows are replaced by the shared learnable mask token; the edge set
// is untouched (the adjacency is passed to the encoder separately).
Tensor apply_mask(Tape& tape, const Tensor& features, const std::vector<std::uint8_t>& mask,
                  const Tensor& mask_features);

// (1/N) sum_v ||S(v) - T(v)||^2 over all nodes. T must be detached.
Tensor latent_loss(Tape& tape, const Tensor& student_out, const Tensor& teacher_out);

// Per-node ||S(v) - T(v)||^2, stored for the next iteration's mask.
std::vector<double> difficulty_scores(const Tensor& student_out, const Tensor& teacher_out);

// Uniform sample of exactly floor(n * ratio) nodes.
std::vector<std::uint8_t> mask_random(int n, double ratio, std::mt19937_64& rng);

// Top floor(M*r) nodes by difficulty (ties broken by ascending index), the
// remaining budget drawn uniformly from the rest; exactly M = floor(N*R).
std::vector<std::uint8_t> mask_diffi(const std::vector<double>& scores, double overall_ratio,
                                     double exploit_ratio, std::mt19937_64& rng);

// Bernoulli mask with p_v = (1-r)R + (Diffi(v)/Diffi_max) * r * R; resampled
// while the count falls outside [ceil(0.5M), floor(1.5M)] (at most 10
// attempts, then deterministic top-M by p_v). Zero Diffi_max falls back to
// the uniform sampler.
std::vector<std::uint8_t> mask_prob(const std::vector<double>& scores, double overall_ratio,
                                    double exploit_ratio, std::mt19937_64& rng);

double bernoulli_success_rate(double score, double score_max, double overall_ratio,
                              double exploit_ratio);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    int masked = 0;
    double millis = 0.0;
};

// Adam state at the end of a run (moment buffers follow the optimizer's
// parameter order: student tensors then the mask token); checkpointed so a
// run can be resumed or audited.
struct OptimizerState {
    std::vector<Tensor> first_moments;
    std::vector<Tensor> second_moments;
    std::int64_t step_count = 0;
};

struct TrainResult {
    StudentTeacher model;
    MaskState mask;
    OptimizerState optimizer;
    std::vector<EpochRecord> log;
    double total_seconds = 0.0;
};

// Runs after each epoch's update; its cost is excluded from the per-epoch
// timing (the bench command probes from here).
using EpochCallback = std::function<void(int, const StudentTeacher&, const MaskState&)>;

// Full teacher-student run. Per epoch: build mask (random during warmup),
// mask features, student forward on the masked graph (dropout on), teacher
// forward on the full graph (no dropout, no gradient), whole-graph latent
// loss, optimizer step on student params + mask token, EMA update,
// difficulty refresh. Aborts with a diagnostic when the loss goes non-finite.
TrainResult train(const Graph& g, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Reconstruction baseline: same masking and schedule, but the loss is
// (1/N) || decoder(encoder(masked)) - features ||^2 and there is no teacher.
struct DecoderParams {
    Tensor w1, b1, w2, b2;  // D -> 4C -> d
    static DecoderParams init(int embed_dim, int token_dim4, int out_dim, std::mt19937_64& rng);
    std::vector<std::pair<std::string, Tensor>> named();
    std::vector<Tensor> all();
};

struct EncoderDecoderResult {
    EncoderParams encoder;
    DecoderParams decoder;
    MaskState mask;
    std::vector<EpochRecord> log;
    double total_seconds = 0.0;
};

EncoderDecoderResult train_encoder_decoder(const Graph& g, const TrainConfig& cfg);

// First epoch whose loss is <= threshold * loss at epoch 0; `cap` when never.
int epochs_to_fraction(const std::vector<EpochRecord>& log, double threshold, int cap);

}  // namespace h3gnn
