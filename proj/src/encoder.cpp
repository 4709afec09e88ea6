#include "h3gnn/encoder.hpp"

#include <cmath>

namespace h3gnn {

void EncoderConfig::validate() const {
    if (input_dim <= 0) throw ArgumentError("EncoderConfig: input_dim must be positive");
    if (token_dim <= 0 || heads <= 0 || token_dim % heads != 0)
        throw ArgumentError("EncoderConfig: token_dim must be a positive multiple of heads");
    if (wgcn_hidden <= 0) throw ArgumentError("EncoderConfig: wgcn_hidden must be positive");
    if (dropout_filters < 0 || dropout_filters >= 1 || dropout_attention < 0 ||
        dropout_attention >= 1)
        throw ArgumentError("EncoderConfig: dropout probabilities must be in [0, 1)");
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, const NormalizedAdjacency& adj,
                                  std::mt19937_64& rng) {
    cfg.validate();
    const int d = cfg.input_dim, C = cfg.token_dim, H = cfg.wgcn_hidden;
    EncoderParams p;
    p.config = cfg;

    p.linear_w = glorot_init(d, C, rng);
    p.linear_b = Tensor::zeros(1, C, true);
    p.mlp_w1 = glorot_init(d, 4 * C, rng);
    p.mlp_b1 = Tensor::zeros(1, 4 * C, true);
    p.mlp_w2 = glorot_init(4 * C, C, rng);
    p.mlp_b2 = Tensor::zeros(1, C, true);

    p.wgcn1_edge = adj.values_tensor(true);
    p.wgcn1_w = glorot_init(d, C, rng);
    p.wgcn2_edge_a = adj.values_tensor(true);
    p.wgcn2_w_a = glorot_init(d, H, rng);
    p.wgcn2_edge_b = adj.values_tensor(true);
    p.wgcn2_w_b = glorot_init(H, C, rng);

    if (cfg.fuse == EncoderConfig::Fuse::attention) {
        p.attn_wq = glorot_init(C, C, rng);
        p.attn_bq = Tensor::zeros(1, C, true);
        p.attn_wk = glorot_init(C, C, rng);
        p.attn_bk = Tensor::zeros(1, C, true);
        p.attn_wv = glorot_init(C, C, rng);
        p.attn_bv = Tensor::zeros(1, C, true);
        p.attn_wo = glorot_init(C, C, rng);
        p.attn_bo = Tensor::zeros(1, C, true);
        p.norm1_g = Tensor::full(1, C, 1.0, true);
        p.norm1_b = Tensor::zeros(1, C, true);
        p.norm2_g = Tensor::full(1, C, 1.0, true);
        p.norm2_b = Tensor::zeros(1, C, true);
        p.ffn_w1 = glorot_init(C, 4 * C, rng);
        p.ffn_b1 = Tensor::zeros(1, 4 * C, true);
        p.ffn_w2 = glorot_init(4 * C, C, rng);
        p.ffn_b2 = Tensor::zeros(1, C, true);
    } else {
        p.fuse_w1 = glorot_init(4 * C, 4 * C, rng);
        p.fuse_b1 = Tensor::zeros(1, 4 * C, true);
        p.fuse_w2 = glorot_init(4 * C, 4 * C, rng);
        p.fuse_b2 = Tensor::zeros(1, 4 * C, true);
    }
    return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"linear_w", linear_w},   {"linear_b", linear_b},
        {"mlp_w1", mlp_w1},       {"mlp_b1", mlp_b1},
        {"mlp_w2", mlp_w2},       {"mlp_b2", mlp_b2},
        {"wgcn1_edge", wgcn1_edge}, {"wgcn1_w", wgcn1_w},
        {"wgcn2_edge_a", wgcn2_edge_a}, {"wgcn2_w_a", wgcn2_w_a},
        {"wgcn2_edge_b", wgcn2_edge_b}, {"wgcn2_w_b", wgcn2_w_b},
    };
    if (config.fuse == EncoderConfig::Fuse::attention) {
        for (auto& [name, t] : std::initializer_list<std::pair<const char*, Tensor>>{
                 {"attn_wq", attn_wq}, {"attn_bq", attn_bq}, {"attn_wk", attn_wk},
                 {"attn_bk", attn_bk}, {"attn_wv", attn_wv}, {"attn_bv", attn_bv},
                 {"attn_wo", attn_wo}, {"attn_bo", attn_bo}, {"norm1_g", norm1_g},
                 {"norm1_b", norm1_b}, {"norm2_g", norm2_g}, {"norm2_b", norm2_b},
                 {"ffn_w1", ffn_w1},   {"ffn_b1", ffn_b1},   {"ffn_w2", ffn_w2},
                 {"ffn_b2", ffn_b2}})
            out.emplace_back(name, t);
    } else {
        out.emplace_back("fuse_w1", fuse_w1);
        out.emplace_back("fuse_b1", fuse_b1);
        out.emplace_back("fuse_w2", fuse_w2);
        out.emplace_back("fuse_b2", fuse_b2);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
    return const_cast<EncoderParams*>(this)->named();
}

std::vector<Tensor> EncoderParams::all() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

EncoderParams EncoderParams::clone(bool requires_grad) const {
    EncoderParams c;
    c.config = config;
    auto src = named();
    auto copy = [&](const char* name) -> Tensor {
        for (auto& [n, t] : src)
            if (n == name) return t.clone(requires_grad);
        return {};
    };
    c.linear_w = copy("linear_w");
    c.linear_b = copy("linear_b");
    c.mlp_w1 = copy("mlp_w1");
    c.mlp_b1 = copy("mlp_b1");
    c.mlp_w2 = copy("mlp_w2");
    c.mlp_b2 = copy("mlp_b2");
    c.wgcn1_edge = copy("wgcn1_edge");
    c.wgcn1_w = copy("wgcn1_w");
    c.wgcn2_edge_a = copy("wgcn2_edge_a");
    c.wgcn2_w_a = copy("wgcn2_w_a");
    c.wgcn2_edge_b = copy("wgcn2_edge_b");
    c.wgcn2_w_b = copy("wgcn2_w_b");
    if (config.fuse == EncoderConfig::Fuse::attention) {
        c.attn_wq = copy("attn_wq");
        c.attn_bq = copy("attn_bq");
        c.attn_wk = copy("attn_wk");
        c.attn_bk = copy("attn_bk");
        c.attn_wv = copy("attn_wv");
        c.attn_bv = copy("attn_bv");
        c.attn_wo = copy("attn_wo");
        c.attn_bo = copy("attn_bo");
        c.norm1_g = copy("norm1_g");
        c.norm1_b = copy("norm1_b");
        c.norm2_g = copy("norm2_g");
        c.norm2_b = copy("norm2_b");
        c.ffn_w1 = copy("ffn_w1");
        c.ffn_b1 = copy("ffn_b1");
        c.ffn_w2 = copy("ffn_w2");
        c.ffn_b2 = copy("ffn_b2");
    } else {
        c.fuse_w1 = copy("fuse_w1");
        c.fuse_b1 = copy("fuse_b1");
        c.fuse_w2 = copy("fuse_w2");
        c.fuse_b2 = copy("fuse_b2");
    }
    return c;
}

Tensor wgcn_layer(Tape& tape, const SparsePattern& pattern, const Tensor& edge_vals,
                  const Tensor& h, const Tensor& w, bool activate) {
    if (edge_vals.cols() != pattern.nnz())
        throw StateError("wgcn_layer: edge weights do not align with the adjacency pattern");
    Tensor hw = matmul(tape, h, w);
    Tensor propagated = adj_matmul(tape, pattern, edge_vals, hw);
    return activate ? relu(tape, propagated) : propagated;
}

Tensor project_linear(Tape& tape, const EncoderParams& p, const Tensor& feats) {
    return add(tape, matmul(tape, feats, p.linear_w), p.linear_b);
}

Tensor project_mlp(Tape& tape, const EncoderParams& p, const Tensor& feats) {
    Tensor hidden = gelu(tape, add(tape, matmul(tape, feats, p.mlp_w1), p.mlp_b1));
    return add(tape, matmul(tape, hidden, p.mlp_w2), p.mlp_b2);
}

TokenStack stack_tokens(Tape& tape, const Tensor& linear, const Tensor& mlp, const Tensor& hop1,
                        const Tensor& hop2) {
    const int n = linear.rows(), c = linear.cols();
    const Tensor parts[4] = {linear, mlp, hop1, hop2};
    for (const auto& t : parts)
        if (t.rows() != n || t.cols() != c)
            throw DimensionError("stack_tokens: token shapes disagree");
    bool needs_grad = false;
    for (const auto& t : parts) needs_grad = needs_grad || t.requires_grad();
    Tensor rows = Tensor::zeros(4 * n, c, needs_grad && tape.recording());
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < 4; ++s)
            std::copy(parts[s].data() + std::size_t(i) * c,
                      parts[s].data() + std::size_t(i + 1) * c,
                      rows.data() + (std::size_t(i) * 4 + s) * c);
    if (rows.requires_grad()) {
        auto h0 = linear.handle(), h1 = mlp.handle(), h2 = hop1.handle(), h3 = hop2.handle();
        auto ho = rows.handle();
        tape.record([h0, h1, h2, h3, ho, n, c] {
            const std::shared_ptr<TensorData> hs[4] = {h0, h1, h2, h3};
            for (int i = 0; i < n; ++i)
                for (int s = 0; s < 4; ++s) {
                    if (!hs[s]->requires_grad) continue;
                    const double* g = ho->grad.data() + (std::size_t(i) * 4 + s) * c;
                    double* dst = hs[s]->grad.data() + std::size_t(i) * c;
                    for (int j = 0; j < c; ++j) dst[j] += g[j];
                }
        });
    }
    return TokenStack{rows, n};
}

Tensor flatten_tokens(Tape& tape, const TokenStack& stack) {
    const int n = stack.num_nodes, c = stack.rows.cols();
    Tensor out = Tensor::zeros(n, 4 * c, stack.rows.requires_grad() && tape.recording());
    // node-major token blocks are already contiguous: pure reshape
    std::copy(stack.rows.data(), stack.rows.data() + stack.rows.size(), out.data());
    if (out.requires_grad()) {
        auto hi = stack.rows.handle(), ho = out.handle();
        tape.record([hi, ho] {
            for (std::size_t i = 0; i < hi->grad.size(); ++i) hi->grad[i] += ho->grad[i];
        });
    }
    return out;
}

namespace {

// Per-node attention scores: for node n, head hh, scores[(n*h+hh)*4 + i][j] =
// <Q token i, K token j> / sqrt(c), dotted over that head's channel slice.
Tensor token_scores(Tape& tape, const Tensor& q, const Tensor& k, int heads) {
    const int n = q.rows() / 4, C = q.cols(), hd = C / heads;
    const double inv_sqrt_c = 1.0 / std::sqrt(double(hd));
    Tensor out = Tensor::zeros(n * heads * 4, 4,
                               (q.requires_grad() || k.requires_grad()) && tape.recording());
    for (int node = 0; node < n; ++node)
        for (int hh = 0; hh < heads; ++hh)
            for (int i = 0; i < 4; ++i) {
                const double* qi = q.data() + (std::size_t(node) * 4 + i) * C + hh * hd;
                double* row = out.data() + (std::size_t(node) * heads + hh) * 4 * 4 +
                              std::size_t(i) * 4;
                for (int j = 0; j < 4; ++j) {
                    const double* kj = k.data() + (std::size_t(node) * 4 + j) * C + hh * hd;
                    double acc = 0.0;
                    for (int c = 0; c < hd; ++c) acc += qi[c] * kj[c];
                    row[j] = acc * inv_sqrt_c;
                }
            }
    if (out.requires_grad()) {
        auto hq = q.handle(), hk = k.handle(), ho = out.handle();
        tape.record([hq, hk, ho, n, heads, hd, C, inv_sqrt_c] {
            for (int node = 0; node < n; ++node)
                for (int hh = 0; hh < heads; ++hh)
                    for (int i = 0; i < 4; ++i) {
                        const double* g = ho->grad.data() +
                                          (std::size_t(node) * heads + hh) * 16 +
                                          std::size_t(i) * 4;
                        for (int j = 0; j < 4; ++j) {
                            const double gij = g[j] * inv_sqrt_c;
                            const std::size_t qoff = (std::size_t(node) * 4 + i) * C + hh * hd;
                            const std::size_t koff = (std::size_t(node) * 4 + j) * C + hh * hd;
                            if (hq->requires_grad)
                                for (int c = 0; c < hd; ++c)
                                    hq->grad[qoff + c] += gij * hk->values[koff + c];
                            if (hk->requires_grad)
                                for (int c = 0; c < hd; ++c)
                                    hk->grad[koff + c] += gij * hq->values[qoff + c];
                        }
                    }
        });
    }
    return out;
}

// Applies attention weights to the value tokens and re-fuses heads:
// out[(4n+i), hh*c..] = sum_j attn[(n*h+hh)*4+i][j] * v[(4n+j), hh*c..]
Tensor token_mix(Tape& tape, const Tensor& attn, const Tensor& v, int heads) {
    const int C = v.cols(), n = v.rows() / 4, hd = C / heads;
    Tensor out = Tensor::zeros(v.rows(), C,
                               (attn.requires_grad() || v.requires_grad()) && tape.recording());
    for (int node = 0; node < n; ++node)
        for (int hh = 0; hh < heads; ++hh)
            for (int i = 0; i < 4; ++i) {
                const double* a = attn.data() + (std::size_t(node) * heads + hh) * 16 +
                                  std::size_t(i) * 4;
                double* po = out.data() + (std::size_t(node) * 4 + i) * C + hh * hd;
                for (int j = 0; j < 4; ++j) {
                    const double* pv = v.data() + (std::size_t(node) * 4 + j) * C + hh * hd;
                    for (int c = 0; c < hd; ++c) po[c] += a[j] * pv[c];
                }
            }
    if (out.requires_grad()) {
        auto ha = attn.handle(), hv = v.handle(), ho = out.handle();
        tape.record([ha, hv, ho, n, heads, hd, C] {
            for (int node = 0; node < n; ++node)
                for (int hh = 0; hh < heads; ++hh)
                    for (int i = 0; i < 4; ++i) {
                        const double* g = ho->grad.data() +
                                          (std::size_t(node) * 4 + i) * C + hh * hd;
                        const std::size_t arow = (std::size_t(node) * heads + hh) * 16 +
                                                 std::size_t(i) * 4;
                        for (int j = 0; j < 4; ++j) {
                            const std::size_t voff = (std::size_t(node) * 4 + j) * C + hh * hd;
                            if (ha->requires_grad) {
                                double acc = 0.0;
                                for (int c = 0; c < hd; ++c)
                                    acc += g[c] * hv->values[voff + c];
                                ha->grad[arow + j] += acc;
                            }
                            if (hv->requires_grad) {
                                const double a = ha->values[arow + j];
                                for (int c = 0; c < hd; ++c) hv->grad[voff + c] += a * g[c];
                            }
                        }
                    }
        });
    }
    return out;
}

}  // namespace

Tensor fuse_tokens(Tape& tape, const EncoderParams& p, const TokenStack& stack, bool training,
                   std::mt19937_64* rng, Tensor* attention_out) {
    const EncoderConfig& cfg = p.config;
    if (stack.rows.cols() != cfg.token_dim)
        throw DimensionError("fuse_tokens: token width != config token_dim");
    if (cfg.fuse != EncoderConfig::Fuse::attention)
        throw StateError("fuse_tokens: params built for the mlp fusion variant");
    const Tensor& x = stack.rows;

    Tensor q = add(tape, matmul(tape, x, p.attn_wq), p.attn_bq);
    Tensor k = add(tape, matmul(tape, x, p.attn_wk), p.attn_bk);
    Tensor v = add(tape, matmul(tape, x, p.attn_wv), p.attn_bv);
    Tensor attn = softmax_rows(tape, token_scores(tape, q, k, cfg.heads));
    if (attention_out) *attention_out = attn;
    if (training && cfg.dropout_attention > 0.0) {
        if (!rng) throw StateError("fuse_tokens: training dropout needs an rng");
        attn = dropout(tape, attn, cfg.dropout_attention, *rng, true);
    }
    Tensor mixed = token_mix(tape, attn, v, cfg.heads);
    Tensor projected = add(tape, matmul(tape, mixed, p.attn_wo), p.attn_bo);
    Tensor y = add(tape, x, layer_norm(tape, projected, p.norm1_g, p.norm1_b));

    Tensor hidden = gelu(tape, add(tape, matmul(tape, y, p.ffn_w1), p.ffn_b1));
    Tensor ffn = add(tape, matmul(tape, hidden, p.ffn_w2), p.ffn_b2);
    return add(tape, y, layer_norm(tape, ffn, p.norm2_g, p.norm2_b));
}

Tensor encode(Tape& tape, const EncoderParams& p, const Tensor& features,
              const NormalizedAdjacency& adj, const EncodeOptions& opt) {
    const EncoderConfig& cfg = p.config;
    if (features.cols() != cfg.input_dim)
        throw DimensionError("encode: feature dim " + std::to_string(features.cols()) +
                             " != config input_dim " + std::to_string(cfg.input_dim));
    if (features.rows() != adj.pattern.n)
        throw DimensionError("encode: feature rows != adjacency size");

    Tensor lin = project_linear(tape, p, features);
    Tensor mlp = project_mlp(tape, p, features);
    Tensor hop1 = wgcn_layer(tape, adj.pattern, p.wgcn1_edge, features, p.wgcn1_w);
    Tensor hop1of2 = wgcn_layer(tape, adj.pattern, p.wgcn2_edge_a, features, p.wgcn2_w_a);
    Tensor hop2 = wgcn_layer(tape, adj.pattern, p.wgcn2_edge_b, hop1of2, p.wgcn2_w_b);

    if (opt.training && cfg.dropout_filters > 0.0) {
        if (!opt.rng) throw StateError("encode: training dropout needs an rng");
        lin = dropout(tape, lin, cfg.dropout_filters, *opt.rng, true);
        mlp = dropout(tape, mlp, cfg.dropout_filters, *opt.rng, true);
        hop1 = dropout(tape, hop1, cfg.dropout_filters, *opt.rng, true);
        hop2 = dropout(tape, hop2, cfg.dropout_filters, *opt.rng, true);
    }

    TokenStack stack = stack_tokens(tape, lin, mlp, hop1, hop2);
    if (cfg.fuse == EncoderConfig::Fuse::attention) {
        TokenStack fused{fuse_tokens(tape, p, stack, opt.training, opt.rng), stack.num_nodes};
        return flatten_tokens(tape, fused);
    }
    Tensor flat = flatten_tokens(tape, stack);
    Tensor hidden = gelu(tape, add(tape, matmul(tape, flat, p.fuse_w1), p.fuse_b1));
    return add(tape, matmul(tape, hidden, p.fuse_w2), p.fuse_b2);
}

}  // namespace h3gnn
