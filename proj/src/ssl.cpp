#include "h3gnn/ssl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace h3gnn {

MaskStrategy mask_strategy_from_string(const std::string& s) {
    if (s == "random") return MaskStrategy::random;
    if (s == "diffi") return MaskStrategy::diffi;
    if (s == "prob") return MaskStrategy::prob;
    throw ArgumentError("unknown masking strategy: " + s);
}

std::string to_string(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::random: return "random";
        case MaskStrategy::diffi: return "diffi";
        default: return "prob";
    }
}

StudentTeacher StudentTeacher::init(EncoderParams student, double momentum, int total_epochs) {
    if (momentum < 0.0 || momentum > 1.0)
        throw ArgumentError("StudentTeacher: momentum must be in [0, 1]");
    StudentTeacher st;
    st.teacher = student.clone(false);  // same initialization, no gradients
    st.student = std::move(student);
    st.momentum = momentum;
    st.total_epochs = total_epochs;
    return st;
}

void ema_update(StudentTeacher& st) {
    auto s = st.student.named();
    auto t = st.teacher.named();
    if (s.size() != t.size()) throw StateError("ema_update: parameter lists diverged");
    const double a = st.momentum;
    for (std::size_t k = 0; k < s.size(); ++k) {
        Tensor& phi = s[k].second;
        Tensor& psi = t[k].second;
        if (phi.size() != psi.size()) throw StateError("ema_update: shape mismatch");
        double* pt = psi.data();
        const double* ps = phi.data();
        for (std::size_t i = 0; i < psi.size(); ++i) pt[i] = a * pt[i] + (1.0 - a) * ps[i];
    }
    ++st.epoch;
}

std::vector<std::string> TrainConfig::grid_warnings() const {
    std::vector<std::string> out;
    auto in = [](double v, std::initializer_list<double> grid) {
        for (double g : grid)
            if (std::fabs(v - g) < 1e-12) return true;
        return false;
    };
    if (!in(learning_rate, {0.01, 0.005, 0.001}))
        out.push_back("learning_rate " + std::to_string(learning_rate) +
                      " is outside the search grid {0.01, 0.005, 0.001}");
    if (!in(weight_decay, {0, 1e-3, 5e-3, 8e-3, 1e-4, 5e-4, 8e-4}))
        out.push_back("weight_decay " + std::to_string(weight_decay) +
                      " is outside the search grid");
    if (!in(momentum_alpha, {0.9, 0.99, 0.999}))
        out.push_back("momentum " + std::to_string(momentum_alpha) +
                      " is outside the search grid {0.9, 0.99, 0.999}");
    if (!in(mask_ratio, {0.9, 0.8, 0.5, 0.3, 0.2, 0.1}))
        out.push_back("mask_ratio " + std::to_string(mask_ratio) +
                      " is outside the search grid");
    if (!in(exploit_ratio, {1.0, 0.9, 0.8, 0.5, 0.3, 0.2, 0.1, 0.0}))
        out.push_back("exploit_ratio " + std::to_string(exploit_ratio) +
                      " is outside the search grid");
    if (!in(double(encoder.token_dim), {128, 256, 512, 1024, 2048}))
        out.push_back("token_dim " + std::to_string(encoder.token_dim) +
                      " is outside the search grid");
    if (!in(double(encoder.wgcn_hidden), {16, 32, 64, 128}))
        out.push_back("wgcn_hidden " + std::to_string(encoder.wgcn_hidden) +
                      " is outside the search grid");
    for (double p : {encoder.dropout_filters, encoder.dropout_attention})
        if (p != 0.0 && !in(p, {0.1, 0.3, 0.5, 0.7, 0.8})) {
            out.push_back("dropout " + std::to_string(p) + " is outside the search grid");
            break;
        }
    return out;
}

Tensor apply_mask(Tape& tape, const Tensor& features, const std::vector<std::uint8_t>& mask,
                  const Tensor& mask_features) {
    return row_blend(tape, features, mask, mask_features);
}

Tensor latent_loss(Tape& tape, const Tensor& student_out, const Tensor& teacher_out) {
    if (teacher_out.requires_grad())
        throw StateError("latent_loss: teacher output must be detached");
    return mse_mean(tape, student_out, teacher_out);
}

std::vector<double> difficulty_scores(const Tensor& student_out, const Tensor& teacher_out) {
    if (student_out.rows() != teacher_out.rows() || student_out.cols() != teacher_out.cols())
        throw DimensionError("difficulty_scores: shape mismatch");
    const int n = student_out.rows(), d = student_out.cols();
    std::vector<double> scores(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* s = student_out.data() + std::size_t(i) * d;
        const double* t = teacher_out.data() + std::size_t(i) * d;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += (s[j] - t[j]) * (s[j] - t[j]);
        scores[i] = acc;
    }
    return scores;
}

namespace {

// uniform sample of `take` indices out of {0..n-1} \ excluded
void sample_uniform(std::vector<std::uint8_t>& mask, int n, int take,
                    const std::vector<std::uint8_t>& excluded, std::mt19937_64& rng) {
    std::vector<int> pool;
    pool.reserve(n);
    for (int i = 0; i < n; ++i)
        if (!excluded[i]) pool.push_back(i);
    // partial Fisher-Yates
    for (int i = 0; i < take; ++i) {
        const int j = i + int(uniform01(rng) * double(pool.size() - i));
        std::swap(pool[i], pool[j]);
        mask[pool[i]] = 1;
    }
}

}  // namespace

std::vector<std::uint8_t> mask_random(int n, double ratio, std::mt19937_64& rng) {
    if (ratio < 0.0 || ratio >= 1.0) throw ArgumentError("mask_random: ratio must be in [0, 1)");
    std::vector<std::uint8_t> mask(n, 0);
    sample_uniform(mask, n, int(std::floor(n * ratio)), std::vector<std::uint8_t>(n, 0), rng);
    return mask;
}

std::vector<std::uint8_t> mask_diffi(const std::vector<double>& scores, double overall_ratio,
                                     double exploit_ratio, std::mt19937_64& rng) {
    const int n = int(scores.size());
    const int budget = int(std::floor(n * overall_ratio));
    const int top = int(std::floor(budget * exploit_ratio));
    std::vector<std::uint8_t> mask(n, 0);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // decreasing difficulty, ties by ascending node index
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    for (int i = 0; i < top; ++i) mask[order[i]] = 1;
    sample_uniform(mask, n, budget - top, mask, rng);
    return mask;
}

double bernoulli_success_rate(double score, double score_max, double overall_ratio,
                              double exploit_ratio) {
    const double base = (1.0 - exploit_ratio) * overall_ratio;
    const double boost = score_max > 0.0
                             ? (score / score_max) * exploit_ratio * overall_ratio
                             : 0.0;
    return base + boost;
}

std::vector<std::uint8_t> mask_prob(const std::vector<double>& scores, double overall_ratio,
                                    double exploit_ratio, std::mt19937_64& rng) {
    const int n = int(scores.size());
    const double score_max = scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
    if (score_max <= 0.0) return mask_random(n, overall_ratio, rng);

    const int budget = int(std::floor(n * overall_ratio));
    const int lo = int(std::ceil(0.5 * budget));
    const int hi = int(std::floor(1.5 * budget));
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i)
        p[i] = bernoulli_success_rate(scores[i], score_max, overall_ratio, exploit_ratio);

    for (int attempt = 0; attempt < 10; ++attempt) {
        std::vector<std::uint8_t> mask(n, 0);
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (uniform01(rng) < p[i]) {
                mask[i] = 1;
                ++count;
            }
        }
        if (count >= lo && count <= hi) return mask;
    }
    // deterministic fallback: top-budget nodes by success rate, ties by index
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
    std::vector<std::uint8_t> mask(n, 0);
    for (int i = 0; i < budget; ++i) mask[order[i]] = 1;
    return mask;
}

namespace {

std::vector<std::uint8_t> build_mask(const MaskState& ms, int n, int epoch,
                                     std::mt19937_64& rng) {
    const bool warm = epoch < ms.warmup_epochs;
    const bool no_scores =
        ms.difficulty.empty() ||
        *std::max_element(ms.difficulty.begin(), ms.difficulty.end()) <= 0.0;
    if (warm || ms.strategy == MaskStrategy::random || no_scores)
        return mask_random(n, ms.overall_ratio, rng);
    if (ms.strategy == MaskStrategy::diffi)
        return mask_diffi(ms.difficulty, ms.overall_ratio, ms.exploit_ratio, rng);
    return mask_prob(ms.difficulty, ms.overall_ratio, ms.exploit_ratio, rng);
}

[[noreturn]] void abort_diverged(int epoch, double loss, EncoderParams& params) {
    std::string diag = "training diverged: non-finite loss " + std::to_string(loss) +
                       " at epoch " + std::to_string(epoch) + "; parameter norms:";
    for (auto& [name, t] : params.named()) {
        double norm = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) norm += t.data()[i] * t.data()[i];
        char buf[96];
        std::snprintf(buf, sizeof buf, " %s=%.3e", name.c_str(), std::sqrt(norm));
        diag += buf;
    }
    throw StateError(diag);
}

int count_ones(const std::vector<std::uint8_t>& m) {
    int c = 0;
    for (auto b : m) c += b ? 1 : 0;
    return c;
}

}  // namespace

TrainResult train(const Graph& g, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    NormalizedAdjacency adj = normalize_adjacency(g);

    // Seed discipline: one generator drives, in order, (1) encoder init,
    // (2) mask token init, (3) per-epoch mask + dropout draws. Reproducing a
    // run only needs (seed, config).
    std::mt19937_64 rng(cfg.seed);
    EncoderConfig ecfg = cfg.encoder;
    ecfg.input_dim = g.feature_dim();
    EncoderParams student = EncoderParams::init(ecfg, adj, rng);

    TrainResult res;
    res.mask.strategy = cfg.strategy;
    res.mask.overall_ratio = cfg.mask_ratio;
    res.mask.exploit_ratio = cfg.exploit_ratio;
    res.mask.warmup_epochs = cfg.warmup_epochs;
    res.mask.mask_features = normal_init(1, g.feature_dim(), rng);

    res.model = StudentTeacher::init(std::move(student), cfg.momentum_alpha, cfg.epochs);

    std::vector<Tensor> opt_params = res.model.student.all();
    opt_params.push_back(res.mask.mask_features);
    Optimizer opt({OptimizerKind::adam, cfg.learning_rate, cfg.weight_decay}, opt_params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        res.mask.current = build_mask(res.mask, g.num_nodes(), epoch, rng);

        Tape tape;
        Tensor masked = apply_mask(tape, g.features(), res.mask.current,
                                   res.mask.mask_features);
        EncodeOptions sopt;
        sopt.training = true;
        sopt.rng = &rng;
        Tensor student_out = encode(tape, res.model.student, masked, adj, sopt);

        Tensor teacher_out;
        {
            Tape::NoGrad guard(tape);
            teacher_out = encode(tape, res.model.teacher, g.features(), adj);
        }

        Tensor loss = latent_loss(tape, student_out, teacher_out);
        const double loss_val = loss.data()[0];
        if (!std::isfinite(loss_val)) abort_diverged(epoch, loss_val, res.model.student);

        tape.backward(loss);
        opt.step();
        ema_update(res.model);
        res.mask.difficulty = difficulty_scores(student_out, teacher_out);

        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - e_start)
                              .count();
        res.log.push_back({epoch, loss_val, count_ones(res.mask.current), ms});
        if (on_epoch) on_epoch(epoch, res.model, res.mask);
    }
    res.optimizer.first_moments = opt.first_moments();
    res.optimizer.second_moments = opt.second_moments();
    res.optimizer.step_count = opt.step_count();
    res.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

DecoderParams DecoderParams::init(int embed_dim, int token_dim4, int out_dim,
                                  std::mt19937_64& rng) {
    DecoderParams p;
    p.w1 = glorot_init(embed_dim, token_dim4, rng);
    p.b1 = Tensor::zeros(1, token_dim4, true);
    p.w2 = glorot_init(token_dim4, out_dim, rng);
    p.b2 = Tensor::zeros(1, out_dim, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> DecoderParams::named() {
    return {{"dec_w1", w1}, {"dec_b1", b1}, {"dec_w2", w2}, {"dec_b2", b2}};
}

std::vector<Tensor> DecoderParams::all() { return {w1, b1, w2, b2}; }

EncoderDecoderResult train_encoder_decoder(const Graph& g, const TrainConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    NormalizedAdjacency adj = normalize_adjacency(g);

    std::mt19937_64 rng(cfg.seed);
    EncoderConfig ecfg = cfg.encoder;
    ecfg.input_dim = g.feature_dim();

    EncoderDecoderResult res;
    res.encoder = EncoderParams::init(ecfg, adj, rng);
    res.mask.strategy = cfg.strategy;
    res.mask.overall_ratio = cfg.mask_ratio;
    res.mask.exploit_ratio = cfg.exploit_ratio;
    res.mask.warmup_epochs = cfg.warmup_epochs;
    res.mask.mask_features = normal_init(1, g.feature_dim(), rng);
    res.decoder = DecoderParams::init(ecfg.embed_dim(), ecfg.embed_dim(), g.feature_dim(), rng);

    std::vector<Tensor> opt_params = res.encoder.all();
    for (auto& t : res.decoder.all()) opt_params.push_back(t);
    opt_params.push_back(res.mask.mask_features);
    Optimizer opt({OptimizerKind::adam, cfg.learning_rate, cfg.weight_decay}, opt_params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        res.mask.current = build_mask(res.mask, g.num_nodes(), epoch, rng);

        Tape tape;
        Tensor masked = apply_mask(tape, g.features(), res.mask.current,
                                   res.mask.mask_features);
        EncodeOptions sopt;
        sopt.training = true;
        sopt.rng = &rng;
        Tensor emb = encode(tape, res.encoder, masked, adj, sopt);
        Tensor hidden = gelu(tape, add(tape, matmul(tape, emb, res.decoder.w1), res.decoder.b1));
        Tensor decoded = add(tape, matmul(tape, hidden, res.decoder.w2), res.decoder.b2);
        Tensor loss = mse_mean(tape, decoded, g.features());
        const double loss_val = loss.data()[0];
        if (!std::isfinite(loss_val)) abort_diverged(epoch, loss_val, res.encoder);

        tape.backward(loss);
        opt.step();
        // without a teacher, difficulty is the per-node reconstruction error
        res.mask.difficulty = difficulty_scores(decoded, g.features());

        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - e_start)
                              .count();
        res.log.push_back({epoch, loss_val, count_ones(res.mask.current), ms});
    }
    res.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

int epochs_to_fraction(const std::vector<EpochRecord>& log, double threshold, int cap) {
    if (log.empty()) return cap;
    const double target = log.front().loss * threshold;
    for (const auto& rec : log)
        if (rec.loss <= target) return rec.epoch;
    return cap;
}

}  // namespace h3gnn
