#include "palette/adapters.hpp"

#include <stdexcept>

#include "palette/ops.hpp"

namespace palette {

const char* family_name(AdapterFamily f) {
    switch (f) {
        case AdapterFamily::kNone: return "none";
        case AdapterFamily::kPal: return "pal";
        case AdapterFamily::kPalUnshared: return "pal_unshared";
        case AdapterFamily::kLowRank: return "low_rank";
        case AdapterFamily::kFfnAdapter: return "ffn_adapter";
        case AdapterFamily::kLhuc: return "lhuc";
        case AdapterFamily::kTopProjAttention: return "top_proj_attention";
        case AdapterFamily::kTopProjFfn: return "top_proj_ffn";
        case AdapterFamily::kTopBertLayer: return "top_bert_layer";
    }
    return "?";
}

AdapterFamily family_from_name(const std::string& name) {
    for (AdapterFamily f :
         {AdapterFamily::kNone, AdapterFamily::kPal, AdapterFamily::kPalUnshared,
          AdapterFamily::kLowRank, AdapterFamily::kFfnAdapter, AdapterFamily::kLhuc,
          AdapterFamily::kTopProjAttention, AdapterFamily::kTopProjFfn,
          AdapterFamily::kTopBertLayer}) {
        if (name == family_name(f)) return f;
    }
    throw std::invalid_argument("unknown adapter family '" + name + "'");
}

bool AdapterSpec::is_top() const {
    return family == AdapterFamily::kTopProjAttention || family == AdapterFamily::kTopProjFfn ||
           family == AdapterFamily::kTopBertLayer;
}

bool AdapterSpec::is_within_layer() const {
    return family == AdapterFamily::kPal || family == AdapterFamily::kPalUnshared ||
           family == AdapterFamily::kLowRank || family == AdapterFamily::kFfnAdapter ||
           family == AdapterFamily::kLhuc;
}

bool AdapterSpec::has_projections() const {
    switch (family) {
        case AdapterFamily::kPal:
        case AdapterFamily::kPalUnshared:
        case AdapterFamily::kLowRank:
        case AdapterFamily::kFfnAdapter:
        case AdapterFamily::kTopProjAttention:
        case AdapterFamily::kTopProjFfn:
            return true;
        default:
            return false;
    }
}

bool AdapterSpec::uses_attention() const {
    return family == AdapterFamily::kPal || family == AdapterFamily::kPalUnshared ||
           family == AdapterFamily::kTopProjAttention || family == AdapterFamily::kTopBertLayer;
}

int AdapterSpec::resolved_top_layers() const {
    if (n_top_layers >= 0) return n_top_layers;
    return family == AdapterFamily::kTopBertLayer ? 1 : 6;
}

bool AdapterSpec::layer_adapted(int layer) const {
    if (layer_mask.empty()) return true;
    return layer_mask[static_cast<std::size_t>(layer)] != 0;
}

int AdapterSpec::adapted_layer_count(const ModelConfig& cfg) const {
    if (!is_within_layer()) return 0;
    if (layer_mask.empty()) return cfg.n_layers;
    int n = 0;
    for (auto m : layer_mask) n += (m != 0);
    return n;
}

void AdapterSpec::validate(const ModelConfig& cfg) {
    if (family == AdapterFamily::kNone || family == AdapterFamily::kLhuc ||
        family == AdapterFamily::kTopBertLayer) {
        // No projected width in play.
    } else {
        if (d_s <= 0 || d_s >= cfg.d_m) {
            throw std::invalid_argument("adapter spec: d_s=" + std::to_string(d_s) +
                                        " must be in (0, d_m=" + std::to_string(cfg.d_m) + ")");
        }
    }
    if (family == AdapterFamily::kPal || family == AdapterFamily::kPalUnshared ||
        family == AdapterFamily::kTopProjAttention) {
        if (n_heads_s <= 0 || d_s % n_heads_s != 0) {
            throw std::invalid_argument("adapter spec: d_s=" + std::to_string(d_s) +
                                        " not divisible by n_heads_s=" +
                                        std::to_string(n_heads_s));
        }
    }
    if (family == AdapterFamily::kFfnAdapter || family == AdapterFamily::kTopProjFfn) {
        if (inner_size <= 0) {
            throw std::invalid_argument("adapter spec: inner_size must be positive");
        }
    }
    // Projection sharing is part of the family definition for the two
    // projected-attention variants.
    if (family == AdapterFamily::kPal) share_proj_across_layers = true;
    if (family == AdapterFamily::kPalUnshared) share_proj_across_layers = false;
    if (!layer_mask.empty()) {
        if (!is_within_layer()) {
            throw std::invalid_argument("adapter spec: layer_mask only applies to "
                                        "within-layer families");
        }
        if (static_cast<int>(layer_mask.size()) != cfg.n_layers) {
            throw std::invalid_argument("adapter spec: layer_mask length " +
                                        std::to_string(layer_mask.size()) +
                                        " does not match n_layers " +
                                        std::to_string(cfg.n_layers));
        }
        if (adapted_layer_count(cfg) == 0) {
            throw std::invalid_argument("adapter spec: layer_mask disables every layer");
        }
    }
    if (n_top_layers < -1) {
        throw std::invalid_argument("adapter spec: n_top_layers must be >= 0 (or -1 for the "
                                    "family default)");
    }
    if (is_within_layer() && cfg.n_layers == 0) {
        throw std::invalid_argument("adapter spec: within-layer family on a 0-layer model");
    }
}

namespace {

Tensor init_weight(std::vector<int> shape, Rng* rng, double std) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    if (rng != nullptr) {
        rng->fill_normal(t.data(), 0.0, std);
    }
    return t;
}

Tensor init_zero(std::vector<int> shape) { return Tensor::zeros(std::move(shape), true); }

}  // namespace

TaskAdapter TaskAdapter::init(const AdapterSpec& spec_in, const ModelConfig& cfg, Rng* rng) {
    AdapterSpec spec = spec_in;
    spec.validate(cfg);
    TaskAdapter a;
    a.spec = spec;
    const int d_m = cfg.d_m;
    const int d_s = spec.d_s;

    const bool within = spec.is_within_layer();
    const int n_slots = spec.adapted_layer_count(cfg);

    if (within && spec.has_projections()) {
        const int n_proj = spec.share_proj_across_layers ? 1 : n_slots;
        for (int i = 0; i < n_proj; ++i) {
            a.enc_w.push_back(init_weight({d_s, d_m}, rng, cfg.init_std));
            a.enc_b.push_back(init_zero({d_s}));
            a.dec_w.push_back(init_zero({d_m, d_s}));  // zero: base model at step 0
            a.dec_b.push_back(init_zero({d_m}));
        }
    }
    switch (spec.family) {
        case AdapterFamily::kPal:
        case AdapterFamily::kPalUnshared:
            for (int i = 0; i < n_slots; ++i) {
                PalAttentionParams p;
                p.wq = init_weight({d_s, d_s}, rng, cfg.init_std);
                p.wk = init_weight({d_s, d_s}, rng, cfg.init_std);
                p.wv = init_weight({d_s, d_s}, rng, cfg.init_std);
                a.attn.push_back(std::move(p));
            }
            break;
        case AdapterFamily::kFfnAdapter:
            for (int i = 0; i < n_slots; ++i) {
                AdapterFfnParams p;
                p.w1 = init_weight({spec.inner_size, d_s}, rng, cfg.init_std);
                p.b1 = init_zero({spec.inner_size});
                p.w2 = init_weight({d_s, spec.inner_size}, rng, cfg.init_std);
                p.b2 = init_zero({d_s});
                a.ffn.push_back(std::move(p));
            }
            break;
        case AdapterFamily::kLhuc:
            for (int i = 0; i < n_slots; ++i) {
                a.lhuc.push_back(init_zero({d_m}));  // zero scalars: multiplier 1
            }
            break;
        case AdapterFamily::kLowRank:
        case AdapterFamily::kNone:
            break;
        case AdapterFamily::kTopProjAttention: {
            a.enc_w.push_back(init_weight({d_s, d_m}, rng, cfg.init_std));
            a.enc_b.push_back(init_zero({d_s}));
            a.dec_w.push_back(init_zero({d_m, d_s}));
            a.dec_b.push_back(init_zero({d_m}));
            for (int i = 0; i < spec.resolved_top_layers(); ++i) {
                TopAttentionLayer t;
                t.wq = init_weight({d_s, d_s}, rng, cfg.init_std);
                t.wk = init_weight({d_s, d_s}, rng, cfg.init_std);
                t.wv = init_weight({d_s, d_s}, rng, cfg.init_std);
                t.wo = init_weight({d_s, d_s}, rng, cfg.init_std);
                t.ln = LayerNormParams::init(d_s);
                a.top_attn.push_back(std::move(t));
            }
            break;
        }
        case AdapterFamily::kTopProjFfn: {
            a.enc_w.push_back(init_weight({d_s, d_m}, rng, cfg.init_std));
            a.enc_b.push_back(init_zero({d_s}));
            a.dec_w.push_back(init_zero({d_m, d_s}));
            a.dec_b.push_back(init_zero({d_m}));
            for (int i = 0; i < spec.resolved_top_layers(); ++i) {
                TopFfnLayer t;
                t.ffn.w1 = init_weight({spec.inner_size, d_s}, rng, cfg.init_std);
                t.ffn.b1 = init_zero({spec.inner_size});
                t.ffn.w2 = init_weight({d_s, spec.inner_size}, rng, cfg.init_std);
                t.ffn.b2 = init_zero({d_s});
                t.ln = LayerNormParams::init(d_s);
                a.top_ffn.push_back(std::move(t));
            }
            break;
        }
        case AdapterFamily::kTopBertLayer:
            for (int i = 0; i < spec.resolved_top_layers(); ++i) {
                a.top_bert.push_back(BertLayerParams::init(cfg, rng));
            }
            break;
    }
    if (within && spec.composition == Composition::kSerial &&
        spec.family != AdapterFamily::kLhuc) {
        for (int i = 0; i < n_slots; ++i) {
            a.serial_ln.push_back(LayerNormParams::init(d_m));
        }
    }
    return a;
}

void TaskAdapter::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < enc_w.size(); ++i) {
        const std::string tag = enc_w.size() > 1 ? std::to_string(i) : "";
        fn(prefix + ".enc_w" + tag, enc_w[i], ParamKind::kWeight);
        fn(prefix + ".enc_b" + tag, enc_b[i], ParamKind::kBias);
        fn(prefix + ".dec_w" + tag, dec_w[i], ParamKind::kWeight);
        fn(prefix + ".dec_b" + tag, dec_b[i], ParamKind::kBias);
    }
    for (std::size_t i = 0; i < attn.size(); ++i) {
        const std::string p = prefix + ".attn" + std::to_string(i);
        fn(p + ".wq", attn[i].wq, ParamKind::kWeight);
        fn(p + ".wk", attn[i].wk, ParamKind::kWeight);
        fn(p + ".wv", attn[i].wv, ParamKind::kWeight);
    }
    for (std::size_t i = 0; i < ffn.size(); ++i) {
        const std::string p = prefix + ".ffn" + std::to_string(i);
        fn(p + ".w1", ffn[i].w1, ParamKind::kWeight);
        fn(p + ".b1", ffn[i].b1, ParamKind::kBias);
        fn(p + ".w2", ffn[i].w2, ParamKind::kWeight);
        fn(p + ".b2", ffn[i].b2, ParamKind::kBias);
    }
    for (std::size_t i = 0; i < lhuc.size(); ++i) {
        fn(prefix + ".lhuc" + std::to_string(i), lhuc[i], ParamKind::kWeight);
    }
    for (std::size_t i = 0; i < serial_ln.size(); ++i) {
        const std::string p = prefix + ".serial_ln" + std::to_string(i);
        fn(p + ".gain", serial_ln[i].gain, ParamKind::kLayerNorm);
        fn(p + ".bias", serial_ln[i].bias, ParamKind::kLayerNorm);
    }
    for (std::size_t i = 0; i < top_attn.size(); ++i) {
        const std::string p = prefix + ".top" + std::to_string(i);
        fn(p + ".wq", top_attn[i].wq, ParamKind::kWeight);
        fn(p + ".wk", top_attn[i].wk, ParamKind::kWeight);
        fn(p + ".wv", top_attn[i].wv, ParamKind::kWeight);
        fn(p + ".wo", top_attn[i].wo, ParamKind::kWeight);
        fn(p + ".ln.gain", top_attn[i].ln.gain, ParamKind::kLayerNorm);
        fn(p + ".ln.bias", top_attn[i].ln.bias, ParamKind::kLayerNorm);
    }
    for (std::size_t i = 0; i < top_ffn.size(); ++i) {
        const std::string p = prefix + ".top" + std::to_string(i);
        fn(p + ".w1", top_ffn[i].ffn.w1, ParamKind::kWeight);
        fn(p + ".b1", top_ffn[i].ffn.b1, ParamKind::kBias);
        fn(p + ".w2", top_ffn[i].ffn.w2, ParamKind::kWeight);
        fn(p + ".b2", top_ffn[i].ffn.b2, ParamKind::kBias);
        fn(p + ".ln.gain", top_ffn[i].ln.gain, ParamKind::kLayerNorm);
        fn(p + ".ln.bias", top_ffn[i].ln.bias, ParamKind::kLayerNorm);
    }
    for (std::size_t i = 0; i < top_bert.size(); ++i) {
        top_bert[i].visit(prefix + ".top" + std::to_string(i), fn);
    }
}

namespace {
int proj_index(const TaskAdapter& a, int slot) {
    return a.spec.share_proj_across_layers ? 0 : slot;
}
}  // namespace

const Tensor& TaskAdapter::enc_for_slot(int slot) const { return enc_w[proj_index(*this, slot)]; }
const Tensor& TaskAdapter::enc_bias_for_slot(int slot) const {
    return enc_b[proj_index(*this, slot)];
}
const Tensor& TaskAdapter::dec_for_slot(int slot) const { return dec_w[proj_index(*this, slot)]; }
const Tensor& TaskAdapter::dec_bias_for_slot(int slot) const {
    return dec_b[proj_index(*this, slot)];
}

Tensor ts_apply(const Tensor& h, const TaskAdapter& adapter, int slot,
                const std::vector<std::uint8_t>& mask) {
    const AdapterSpec& spec = adapter.spec;
    switch (spec.family) {
        case AdapterFamily::kLowRank: {
            Tensor p = linear(h, adapter.enc_for_slot(slot), adapter.enc_bias_for_slot(slot));
            return linear(p, adapter.dec_for_slot(slot), adapter.dec_bias_for_slot(slot));
        }
        case AdapterFamily::kPal:
        case AdapterFamily::kPalUnshared: {
            Tensor p = linear(h, adapter.enc_for_slot(slot), adapter.enc_bias_for_slot(slot));
            const PalAttentionParams& g = adapter.attn[static_cast<std::size_t>(slot)];
            Tensor heads = attention_heads(p, g.wq, g.wk, g.wv, spec.n_heads_s, mask);
            return linear(heads, adapter.dec_for_slot(slot), adapter.dec_bias_for_slot(slot));
        }
        case AdapterFamily::kFfnAdapter: {
            Tensor p = linear(h, adapter.enc_for_slot(slot), adapter.enc_bias_for_slot(slot));
            const AdapterFfnParams& g = adapter.ffn[static_cast<std::size_t>(slot)];
            Tensor y = ffn(p, g.w1, g.b1, g.w2, g.b2);
            return linear(y, adapter.dec_for_slot(slot), adapter.dec_bias_for_slot(slot));
        }
        default:
            throw std::invalid_argument(std::string("ts_apply: family ") +
                                        family_name(spec.family) +
                                        " has no within-layer transform");
    }
}

Tensor compose_parallel(const Tensor& h, const BertLayerParams& base, int n_heads,
                        const std::vector<std::uint8_t>& mask, const TaskAdapter& adapter,
                        int slot) {
    Tensor sa = self_attention_block(h, base, n_heads, mask);
    Tensor ts = ts_apply(h, adapter, slot, mask);
    return layer_norm(add(add(h, sa), ts), base.ln_out.gain, base.ln_out.bias, kLayerNormEps);
}

Tensor compose_serial(const Tensor& h, const BertLayerParams& base, int n_heads,
                      const std::vector<std::uint8_t>& mask, const TaskAdapter& adapter,
                      int slot) {
    Tensor hat = bert_layer(h, base, n_heads, mask);
    Tensor ts = ts_apply(hat, adapter, slot, mask);
    const LayerNormParams& ln = adapter.serial_ln[static_cast<std::size_t>(slot)];
    return layer_norm(add(hat, ts), ln.gain, ln.bias, kLayerNormEps);
}

Tensor lhuc_apply(const Tensor& h, const Tensor& raw_scalars) {
    return mul_cols(h, scale(sigmoid_act(raw_scalars), 2.0));
}

Tensor top_stack_apply(const Tensor& h_final, const TaskAdapter& adapter,
                       const std::vector<std::uint8_t>& mask) {
    const AdapterSpec& spec = adapter.spec;
    switch (spec.family) {
        case AdapterFamily::kTopProjAttention: {
            Tensor p = linear(h_final, adapter.enc_w[0], adapter.enc_b[0]);
            for (const TopAttentionLayer& t : adapter.top_attn) {
                Tensor mh = multi_head_attention(p, t.wq, t.wk, t.wv, t.wo, spec.n_heads_s, mask);
                p = layer_norm(add(p, mh), t.ln.gain, t.ln.bias, kLayerNormEps);
            }
            return linear(p, adapter.dec_w[0], adapter.dec_b[0]);
        }
        case AdapterFamily::kTopProjFfn: {
            Tensor p = linear(h_final, adapter.enc_w[0], adapter.enc_b[0]);
            for (const TopFfnLayer& t : adapter.top_ffn) {
                Tensor y = ffn(p, t.ffn.w1, t.ffn.b1, t.ffn.w2, t.ffn.b2);
                p = layer_norm(add(p, y), t.ln.gain, t.ln.bias, kLayerNormEps);
            }
            return linear(p, adapter.dec_w[0], adapter.dec_b[0]);
        }
        default:
            throw std::invalid_argument(std::string("top_stack_apply: family ") +
                                        family_name(spec.family) + " is not a projected top stack");
    }
}

}  // namespace palette
