#pragma once

namespace palette {

// Layer-norm epsilon used everywhere; population (biased) variance.
inline constexpr double kLayerNormEps = 1e-12;

// Default Gaussian init scale for weights and embeddings.
inline constexpr double kInitStd = 0.02;

/// Base encoder dimensions. Defaults are the standard base-size encoder;
/// desk-scale experiments shrink everything.
struct ModelConfig {
    int d_m = 768;
    int n_layers = 12;
    int n_heads = 12;
    int d_ff = 3072;
    int vocab_size = 30522;
    int max_seq_len = 512;
    int n_segment_types = 2;
    int n_tasks = 1;
    // Both flags exist so sequence-permutation properties can be tested on
    // the raw attention stack.
    bool use_position_embeddings = true;
    bool embed_layer_norm = true;
    // Gaussian scale for weight/embedding init. The 0.02 convention suits
    // pre-trained-style models; from-scratch desk runs train far better
    // around 0.1 (attention-score gradients scale with the cube of this).
    double init_std = kInitStd;

    int head_dim() const { return d_m / n_heads; }

    // Throws std::invalid_argument on any violated constraint.
    void validate() const;
};

}  // namespace palette
