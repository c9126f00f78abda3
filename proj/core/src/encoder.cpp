#include "palette/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "palette/ops.hpp"

namespace palette {

void ModelConfig::validate() const {
    if (d_m <= 0 || n_layers < 0 || n_heads <= 0 || d_ff <= 0 || vocab_size <= 0 ||
        max_seq_len <= 0 || n_segment_types <= 0 || n_tasks < 0) {
        throw std::invalid_argument("model config: all dimensions must be positive");
    }
    if (d_m % n_heads != 0) {
        throw std::invalid_argument("model config: d_m=" + std::to_string(d_m) +
                                    " not divisible by n_heads=" + std::to_string(n_heads));
    }
    if (max_seq_len < 3) {
        throw std::invalid_argument("model config: max_seq_len must be >= 3");
    }
    if (!(init_std > 0.0)) {
        throw std::invalid_argument("model config: init_std must be positive");
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

LayerNormParams LayerNormParams::init(int d) {
    LayerNormParams p;
    p.gain = Tensor::full({d}, 1.0, true);
    p.bias = Tensor::zeros({d}, true);
    return p;
}

BertLayerParams BertLayerParams::init(const ModelConfig& cfg, Rng* rng) {
    BertLayerParams p;
    p.wq = init_weight({cfg.d_m, cfg.d_m}, rng, cfg.init_std);
    p.wk = init_weight({cfg.d_m, cfg.d_m}, rng, cfg.init_std);
    p.wv = init_weight({cfg.d_m, cfg.d_m}, rng, cfg.init_std);
    p.wo = init_weight({cfg.d_m, cfg.d_m}, rng, cfg.init_std);
    p.w1 = init_weight({cfg.d_ff, cfg.d_m}, rng, cfg.init_std);
    p.b1 = init_zero({cfg.d_ff});
    p.w2 = init_weight({cfg.d_m, cfg.d_ff}, rng, cfg.init_std);
    p.b2 = init_zero({cfg.d_m});
    p.ln_attn = LayerNormParams::init(cfg.d_m);
    p.ln_out = LayerNormParams::init(cfg.d_m);
    return p;
}

void BertLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".wq", wq, ParamKind::kWeight);
    fn(prefix + ".wk", wk, ParamKind::kWeight);
    fn(prefix + ".wv", wv, ParamKind::kWeight);
    fn(prefix + ".wo", wo, ParamKind::kWeight);
    fn(prefix + ".w1", w1, ParamKind::kWeight);
    fn(prefix + ".b1", b1, ParamKind::kBias);
    fn(prefix + ".w2", w2, ParamKind::kWeight);
    fn(prefix + ".b2", b2, ParamKind::kBias);
    fn(prefix + ".ln_attn.gain", ln_attn.gain, ParamKind::kLayerNorm);
    fn(prefix + ".ln_attn.bias", ln_attn.bias, ParamKind::kLayerNorm);
    fn(prefix + ".ln_out.gain", ln_out.gain, ParamKind::kLayerNorm);
    fn(prefix + ".ln_out.bias", ln_out.bias, ParamKind::kLayerNorm);
}

EncoderParams EncoderParams::init(const ModelConfig& cfg, Rng* rng) {
    cfg.validate();
    EncoderParams p;
    p.token_table = init_weight({cfg.vocab_size, cfg.d_m}, rng, cfg.init_std);
    p.position_table = init_weight({cfg.max_seq_len, cfg.d_m}, rng, cfg.init_std);
    p.segment_table = init_weight({cfg.n_segment_types, cfg.d_m}, rng, cfg.init_std);
    p.embed_ln = LayerNormParams::init(cfg.d_m);
    p.layers.reserve(static_cast<std::size_t>(cfg.n_layers));
    for (int i = 0; i < cfg.n_layers; ++i) {
        p.layers.push_back(BertLayerParams::init(cfg, rng));
    }
    return p;
}

void EncoderParams::visit(const ParamVisitor& fn) {
    fn("encoder.token_table", token_table, ParamKind::kWeight);
    fn("encoder.position_table", position_table, ParamKind::kWeight);
    fn("encoder.segment_table", segment_table, ParamKind::kWeight);
    fn("encoder.embed_ln.gain", embed_ln.gain, ParamKind::kLayerNorm);
    fn("encoder.embed_ln.bias", embed_ln.bias, ParamKind::kLayerNorm);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].visit("encoder.layer" + std::to_string(i), fn);
    }
}

TaskHead TaskHead::init(const ModelConfig& cfg, int n_outputs, bool regression, Rng* rng) {
    if (n_outputs < 1) {
        throw std::invalid_argument("task head: n_outputs must be >= 1");
    }
    TaskHead h;
    h.n_outputs = regression ? 1 : n_outputs;
    h.regression = regression;
    h.pool_w = init_weight({cfg.d_m, cfg.d_m}, rng, cfg.init_std);
    h.pool_b = init_zero({cfg.d_m});
    h.out_w = init_weight({h.n_outputs, cfg.d_m}, rng, cfg.init_std);
    h.out_b = init_zero({h.n_outputs});
    return h;
}

void TaskHead::visit(const std::string& prefix, bool include_pooling, const ParamVisitor& fn) {
    if (include_pooling) {
        fn(prefix + ".pool_w", pool_w, ParamKind::kWeight);
        fn(prefix + ".pool_b", pool_b, ParamKind::kBias);
    }
    fn(prefix + ".out_w", out_w, ParamKind::kWeight);
    fn(prefix + ".out_b", out_b, ParamKind::kBias);
}

Tensor embed(const EncoderParams& params, const ModelConfig& cfg,
             const std::vector<int>& token_ids, const std::vector<int>& segment_ids) {
    if (token_ids.empty()) {
        throw std::invalid_argument("embed: empty sequence");
    }
    if (token_ids.size() != segment_ids.size()) {
        throw std::invalid_argument("embed: token/segment length mismatch: " +
                                    std::to_string(token_ids.size()) + " vs " +
                                    std::to_string(segment_ids.size()));
    }
    const int l = static_cast<int>(token_ids.size());
    if (l > cfg.max_seq_len) {
        throw std::invalid_argument("embed: sequence length " + std::to_string(l) +
                                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        if (token_ids[i] < 0 || token_ids[i] >= cfg.vocab_size) {
            throw std::out_of_range("embed: token id " + std::to_string(token_ids[i]) +
                                    " out of range at position " + std::to_string(i));
        }
        if (segment_ids[i] < 0 || segment_ids[i] >= cfg.n_segment_types) {
            throw std::out_of_range("embed: segment id " + std::to_string(segment_ids[i]) +
                                    " out of range at position " + std::to_string(i));
        }
    }
    Tensor h = gather_rows(params.token_table, token_ids);
    if (cfg.use_position_embeddings) {
        std::vector<int> pos(static_cast<std::size_t>(l));
        for (int i = 0; i < l; ++i) pos[static_cast<std::size_t>(i)] = i;
        h = add(h, gather_rows(params.position_table, pos));
    }
    h = add(h, gather_rows(params.segment_table, segment_ids));
    if (cfg.embed_layer_norm) {
        h = layer_norm(h, params.embed_ln.gain, params.embed_ln.bias, kLayerNormEps);
    }
    return h;
}

Tensor attention_heads(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       int n_heads, const std::vector<std::uint8_t>& mask) {
    const int d = h.cols();
    if (n_heads <= 0 || d % n_heads != 0) {
        throw std::invalid_argument("attention_heads: width " + std::to_string(d) +
                                    " not divisible by " + std::to_string(n_heads) + " heads");
    }
    if (!mask.empty() && static_cast<int>(mask.size()) != h.rows()) {
        throw std::invalid_argument("attention_heads: mask length " +
                                    std::to_string(mask.size()) + " does not match sequence " +
                                    std::to_string(h.rows()));
    }
    const int dh = d / n_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = linear(h, wq);
    Tensor k = linear(h, wk);
    Tensor v = linear(h, wv);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int i = 0; i < n_heads; ++i) {
        Tensor qi = slice_cols(q, i * dh, dh);
        Tensor ki = slice_cols(k, i * dh, dh);
        Tensor vi = slice_cols(v, i * dh, dh);
        Tensor scores = scale(matmul_nt(qi, ki), inv_scale);
        Tensor weights = softmax_rows(scores, mask);
        heads.push_back(matmul(weights, vi));
    }
    return n_heads == 1 ? heads[0] : concat_cols(heads);
}

Tensor multi_head_attention(const Tensor& h, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, int n_heads,
                            const std::vector<std::uint8_t>& mask) {
    return linear(attention_heads(h, wq, wk, wv, n_heads, mask), wo);
}

Tensor ffn(const Tensor& h, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
    return linear(gelu(linear(h, w1, b1)), w2, b2);
}

Tensor self_attention_block(const Tensor& h, const BertLayerParams& layer, int n_heads,
                            const std::vector<std::uint8_t>& mask) {
    Tensor mh = multi_head_attention(h, layer.wq, layer.wk, layer.wv, layer.wo, n_heads, mask);
    Tensor x = layer_norm(add(h, mh), layer.ln_attn.gain, layer.ln_attn.bias, kLayerNormEps);
    return ffn(x, layer.w1, layer.b1, layer.w2, layer.b2);
}

Tensor bert_layer(const Tensor& h, const BertLayerParams& layer, int n_heads,
                  const std::vector<std::uint8_t>& mask) {
    Tensor sa = self_attention_block(h, layer, n_heads, mask);
    return layer_norm(add(h, sa), layer.ln_out.gain, layer.ln_out.bias, kLayerNormEps);
}

Tensor encode(const EncoderParams& params, const ModelConfig& cfg,
              const std::vector<int>& token_ids, const std::vector<int>& segment_ids,
              const std::vector<std::uint8_t>& mask, const LayerFn& layer_fn) {
    Tensor h = embed(params, cfg, token_ids, segment_ids);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (layer_fn) {
            h = layer_fn(static_cast<int>(i), h, params.layers[i]);
        } else {
            h = bert_layer(h, params.layers[i], cfg.n_heads, mask);
        }
    }
    return h;
}

Tensor pool_and_predict(const Tensor& h_cls, const TaskHead& head) {
    Tensor pooled = tanh_act(linear(h_cls, head.pool_w, head.pool_b));
    return linear(pooled, head.out_w, head.out_b);
}

EncoderParamCount count_encoder_params(const ModelConfig& cfg) {
    EncoderParamCount c;
    const long long d = cfg.d_m;
    const long long dff = cfg.d_ff;
    c.embeddings = static_cast<long long>(cfg.vocab_size) * d +
                   static_cast<long long>(cfg.max_seq_len) * d +
                   static_cast<long long>(cfg.n_segment_types) * d + 2 * d;
    c.layer_weights = static_cast<long long>(cfg.n_layers) * (4 * d * d + 2 * d * dff);
    c.layer_aux = static_cast<long long>(cfg.n_layers) * (dff + d + 4 * d);
    c.pooler = d * d + d;
    return c;
}

}  // namespace palette
