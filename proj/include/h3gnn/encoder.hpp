#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "h3gnn/graph.hpp"
#include "h3gnn/tensor.hpp"

namespace h3gnn {

// Joint structural node encoder: four parallel projections of each node to C
// dimensions (linear, MLP, 1-hop and 2-hop weighted graph convolution), fused
// per node by a single Transformer block over the 4 projection tokens, then
// flattened to a D = 4C embedding.
struct EncoderConfig {
    int input_dim = 0;   // d
    int token_dim = 128; // C
    int heads = 4;       // h; head dim c = C / h
    int wgcn_hidden = 64;
    double dropout_filters = 0.0;
    double dropout_attention = 0.0;
    enum class Fuse { attention, mlp };
    Fuse fuse = Fuse::attention;

    int head_dim() const { return token_dim / heads; }
    int embed_dim() const { return 4 * token_dim; }
    void validate() const;
};

struct EncoderParams {
    EncoderConfig config;

    // node-wise projections
    Tensor linear_w, linear_b;                // d -> C
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;    // d -> 4C -> C

    // weighted graph convolutions; edge values are aligned to the adjacency
    // pattern and learnable, each depth owns its own set
    Tensor wgcn1_edge, wgcn1_w;               // 1-hop: d -> C
    Tensor wgcn2_edge_a, wgcn2_w_a;           // 2-hop, first layer: d -> hidden
    Tensor wgcn2_edge_b, wgcn2_w_b;           // 2-hop, second layer: hidden -> C

    // token fusion, attention variant
    Tensor attn_wq, attn_bq, attn_wk, attn_bk, attn_wv, attn_bv;
    Tensor attn_wo, attn_bo;
    Tensor norm1_g, norm1_b, norm2_g, norm2_b;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;    // C -> 4C -> C

    // token fusion, node-wise MLP variant (attention ablation)
    Tensor fuse_w1, fuse_b1, fuse_w2, fuse_b2;  // 4C -> 4C -> 4C

    // Edge weights start at the normalized adjacency values, so training
    // begins from exact plain-GCN propagation.
    static EncoderParams init(const EncoderConfig& cfg, const NormalizedAdjacency& adj,
                              std::mt19937_64& rng);

    std::vector<std::pair<std::string, Tensor>> named();
    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> all();
    EncoderParams clone(bool requires_grad) const;
};

// Per-node stack of the four projection tokens; rows holds node-major blocks
// of 4 rows in the fixed order [linear, mlp, hop1, hop2].
struct TokenStack {
    Tensor rows;  // (4N) x C
    int num_nodes = 0;
};

// relu(A(edge_vals) * h * w); set activate=false for the raw propagation
// (reduction tests use it).
Tensor wgcn_layer(Tape& tape, const SparsePattern& pattern, const Tensor& edge_vals,
                  const Tensor& h, const Tensor& w, bool activate = true);

Tensor project_linear(Tape& tape, const EncoderParams& p, const Tensor& feats);
Tensor project_mlp(Tape& tape, const EncoderParams& p, const Tensor& feats);

TokenStack stack_tokens(Tape& tape, const Tensor& linear, const Tensor& mlp, const Tensor& hop1,
                        const Tensor& hop2);
Tensor flatten_tokens(Tape& tape, const TokenStack& stack);

// Multi-head self-attention over each node's 4 tokens (scores scaled by
// 1/sqrt(c)), output projection + layer-norm residual, then MLP + layer-norm
// residual. `attention_out` receives the (N*h*4) x 4 attention matrix.
Tensor fuse_tokens(Tape& tape, const EncoderParams& p, const TokenStack& stack, bool training,
                   std::mt19937_64* rng, Tensor* attention_out = nullptr);

struct EncodeOptions {
    bool training = false;        // enables filter/attention dropout
    std::mt19937_64* rng = nullptr;  // required when training with dropout
};

// Full forward pass: four projections (+ filter dropout), stack, fuse,
// flatten to N x 4C.
Tensor encode(Tape& tape, const EncoderParams& p, const Tensor& features,
              const NormalizedAdjacency& adj, const EncodeOptions& opt = {});

}  // namespace h3gnn
