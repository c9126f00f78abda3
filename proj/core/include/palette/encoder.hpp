#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "palette/model_config.hpp"
#include "palette/params.hpp"
#include "palette/rng.hpp"
#include "palette/tensor.hpp"

namespace palette {

struct LayerNormParams {
    Tensor gain;  // init 1
    Tensor bias;  // init 0

    static LayerNormParams init(int d);
};

struct BertLayerParams {
    // Attention projections, each d×d. Per-head blocks live in row ranges
    // [i·d/n, (i+1)·d/n), so the d×d storage partitions into n heads and the
    // parameter arithmetic stays 3·n·(d/n)·d + d² = 4d².
    Tensor wq, wk, wv, wo;
    // Feed-forward: w1 is d_ff×d, w2 is d×d_ff.
    Tensor w1, b1, w2, b2;
    LayerNormParams ln_attn;  // after h + MH(h)
    LayerNormParams ln_out;   // after h + SA(h)

    static BertLayerParams init(const ModelConfig& cfg, Rng* rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderParams {
    Tensor token_table;     // vocab×d
    Tensor position_table;  // max_seq_len×d
    Tensor segment_table;   // n_segment_types×d
    LayerNormParams embed_ln;
    std::vector<BertLayerParams> layers;

    // rng == nullptr gives a zero-filled (shape-only) instance.
    static EncoderParams init(const ModelConfig& cfg, Rng* rng);
    void visit(const ParamVisitor& fn);
};

/// Per-task classification/regression head: pooling map + output projection.
/// When pooling is shared across tasks, pool_w/pool_b alias the same storage
/// in every head.
struct TaskHead {
    Tensor pool_w;  // d×d
    Tensor pool_b;  // d
    Tensor out_w;   // k×d (k=1 for regression)
    Tensor out_b;   // k
    int n_outputs = 2;
    bool regression = false;

    static TaskHead init(const ModelConfig& cfg, int n_outputs, bool regression, Rng* rng);
    void visit(const std::string& prefix, bool include_pooling, const ParamVisitor& fn);
};

// Sum of token, position and segment embeddings per position, optionally
// layer-normalised. Sequence length is bounded by cfg.max_seq_len.
Tensor embed(const EncoderParams& params, const ModelConfig& cfg,
             const std::vector<int>& token_ids, const std::vector<int>& segment_ids);

// Concatenated per-head attention outputs (no output mix). This is the core
// shared by the full multi-head layer and the projected attention adapters,
// which drop the output matrix. Scaling is 1/√(d/n); mask marks real key
// positions (empty mask = all real).
Tensor attention_heads(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       int n_heads, const std::vector<std::uint8_t>& mask);

Tensor multi_head_attention(const Tensor& h, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, int n_heads,
                            const std::vector<std::uint8_t>& mask);

// w2·gelu(w1·h + b1) + b2, applied row-wise.
Tensor ffn(const Tensor& h, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2);

// SA(h) = FFN(LN(h + MH(h)))
Tensor self_attention_block(const Tensor& h, const BertLayerParams& layer, int n_heads,
                            const std::vector<std::uint8_t>& mask);

// BL(h) = LN(h + SA(h))
Tensor bert_layer(const Tensor& h, const BertLayerParams& layer, int n_heads,
                  const std::vector<std::uint8_t>& mask);

// Optional per-layer override used by the adapter compositions; receives the
// layer index, the layer input, and the base layer parameters.
using LayerFn = std::function<Tensor(int layer, const Tensor& h, const BertLayerParams& base)>;

// Embeddings through the full layer stack. With no override this is the base
// encoder; adapters inject their composition per layer.
Tensor encode(const EncoderParams& params, const ModelConfig& cfg,
              const std::vector<int>& token_ids, const std::vector<int>& segment_ids,
              const std::vector<std::uint8_t>& mask, const LayerFn& layer_fn = {});

// out_proj(tanh(pool·h_cls + pool_b)); h_cls is the final hidden state of the
// leading classification token, shape 1×d. Returns 1×k logits (k=1 scalar for
// regression).
Tensor pool_and_predict(const Tensor& h_cls, const TaskHead& head);

// Exact parameter count of the base model, split so budget ratios can be
// quoted with and without embedding tables.
struct EncoderParamCount {
    long long embeddings = 0;     // tables + embedding layer-norm
    long long layer_weights = 0;  // n_layers·(4d² + 2d·d_ff)
    long long layer_aux = 0;      // per-layer biases and layer-norms
    long long pooler = 0;         // one d×d pooling map + bias
    long long total() const { return embeddings + layer_weights + layer_aux + pooler; }
};
EncoderParamCount count_encoder_params(const ModelConfig& cfg);

}  // namespace palette
