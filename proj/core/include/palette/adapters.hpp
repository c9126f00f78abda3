#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "palette/encoder.hpp"
#include "palette/model_config.hpp"
#include "palette/params.hpp"
#include "palette/rng.hpp"
#include "palette/tensor.hpp"

namespace palette {

enum class AdapterFamily {
    kNone,
    kPal,              // projected attention, encoder/decoder shared across layers
    kPalUnshared,      // projected attention, per-layer encoder/decoder
    kLowRank,          // g = identity
    kFfnAdapter,       // g = small feed-forward
    kLhuc,             // per-unit multiplicative scalars
    kTopProjAttention, // projected attention stack after the final layer
    kTopProjFfn,       // projected feed-forward stack after the final layer
    kTopBertLayer,     // full-width task layer(s) after the final layer
};

enum class Composition { kParallel, kSerial };

const char* family_name(AdapterFamily f);
AdapterFamily family_from_name(const std::string& name);

/// Full description of one task-adaptation scheme. validate() resolves
/// family-dependent defaults (projection sharing, top-stack depth) and
/// enforces the structural constraints.
struct AdapterSpec {
    AdapterFamily family = AdapterFamily::kNone;
    int d_s = 204;        // projected width, must be < d_m
    int inner_size = 306; // feed-forward adapter intermediate width
    int n_heads_s = 12;   // heads of projected attention
    Composition composition = Composition::kParallel;
    bool share_proj_across_layers = true;
    int n_top_layers = -1;  // -1 = family default (6 projected, 1 full-width); 0 legal
    bool share_pooling = true;
    // Per-layer enable mask for within-layer families; empty = all layers.
    // Realises the adapt-final-half / adapt-first-half configurations.
    std::vector<std::uint8_t> layer_mask;

    void validate(const ModelConfig& cfg);

    bool is_top() const;
    bool is_within_layer() const;  // adapts individual layers (incl. LHUC)
    bool has_projections() const;  // owns encoder/decoder matrices
    bool uses_attention() const;
    int resolved_top_layers() const;
    int adapted_layer_count(const ModelConfig& cfg) const;
    bool layer_adapted(int layer) const;
};

struct PalAttentionParams {
    Tensor wq, wk, wv;  // d_s×d_s each; no output mix by construction
};

struct AdapterFfnParams {
    Tensor w1, b1, w2, b2;  // inner×d_s, inner, d_s×inner, d_s
};

struct TopAttentionLayer {
    Tensor wq, wk, wv, wo;  // d_s×d_s each; the top stack keeps the output mix
    LayerNormParams ln;
};

struct TopFfnLayer {
    AdapterFfnParams ffn;
    LayerNormParams ln;
};

/// One task's adaptation parameters. Projection vectors have one entry when
/// shared across layers, else one per adapted layer (indexed by slot = rank
/// among adapted layers). Decoder matrices and their biases start at zero so
/// a freshly adapted model reproduces the base model exactly.
struct TaskAdapter {
    AdapterSpec spec;

    std::vector<Tensor> enc_w, enc_b;  // d_s×d_m, d_s
    std::vector<Tensor> dec_w, dec_b;  // d_m×d_s, d_m (zero-init)
    std::vector<PalAttentionParams> attn;     // per adapted layer
    std::vector<AdapterFfnParams> ffn;        // per adapted layer
    std::vector<Tensor> lhuc;                 // per adapted layer, raw scalars (d_m)
    std::vector<LayerNormParams> serial_ln;   // fresh layer-norm per adapted layer (serial)
    std::vector<TopAttentionLayer> top_attn;
    std::vector<TopFfnLayer> top_ffn;
    std::vector<BertLayerParams> top_bert;

    // rng == nullptr gives a zero-filled (shape-only) instance.
    static TaskAdapter init(const AdapterSpec& spec, const ModelConfig& cfg, Rng* rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);

    const Tensor& enc_for_slot(int slot) const;
    const Tensor& enc_bias_for_slot(int slot) const;
    const Tensor& dec_for_slot(int slot) const;
    const Tensor& dec_bias_for_slot(int slot) const;
};

// TS(h) = V^D g(V^E h) for the within-layer families; slot picks the adapted
// layer's parameters. Attention-family g runs across the sequence, so the
// padding mask comes along.
Tensor ts_apply(const Tensor& h, const TaskAdapter& adapter, int slot,
                const std::vector<std::uint8_t>& mask);

// h' = LN(h + SA(h) + TS(h)); the task transform sees the layer input.
Tensor compose_parallel(const Tensor& h, const BertLayerParams& base, int n_heads,
                        const std::vector<std::uint8_t>& mask, const TaskAdapter& adapter,
                        int slot);

// ĥ = LN(h + SA(h)); h' = LN_task(ĥ + TS(ĥ)); the task transform sees the
// layer output and the outer layer-norm is task-owned and freshly initialised.
Tensor compose_serial(const Tensor& h, const BertLayerParams& base, int n_heads,
                      const std::vector<std::uint8_t>& mask, const TaskAdapter& adapter,
                      int slot);

// Elementwise h·2σ(a); a == 0 is the identity.
Tensor lhuc_apply(const Tensor& h, const Tensor& raw_scalars);

// The task-specific top transform TS(H): encoder projection once, the layer
// stack, decoder projection back. Pure transform — the caller adds the
// residual (full-width task layers transform in place instead, see model).
Tensor top_stack_apply(const Tensor& h_final, const TaskAdapter& adapter,
                       const std::vector<std::uint8_t>& mask);

}  // namespace palette
