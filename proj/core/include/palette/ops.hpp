#pragma once

#include <cstdint>
#include <vector>

#include "palette/tensor.hpp"

namespace palette {

namespace blas {
// c += a(m×k) · b(k×n), all row-major, no aliasing.
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
// c += a(m×k) · b(n×k)ᵀ
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);
// c += a(k×m)ᵀ · b(k×n)
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);
}  // namespace blas

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Matrix product a[m×k]·b[k×n]. 1-D operands are rejected; shape errors name
// both operand shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×k]·b[n×k]ᵀ without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Row-wise affine map: x[l×d_in]·wᵀ with w[d_out×d_in], plus optional bias
// broadcast over rows. Weights are stored out×in, matching the convention
// that a column vector h maps to W·h.
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Numerically stable softmax over a vector (max-subtracted).
Tensor softmax(const Tensor& v);
// Softmax along each row of scores[q×k]. key_mask, when non-empty, has one
// entry per column; masked columns (0) receive a large negative additive
// offset pre-softmax and exactly zero weight post-softmax. Throws if every
// column is masked.
Tensor softmax_rows(const Tensor& scores, const std::vector<std::uint8_t>& key_mask);

Tensor gelu(const Tensor& x);  // x·Φ(x), exact Gaussian-CDF form
Tensor tanh_act(const Tensor& x);
Tensor sigmoid_act(const Tensor& x);

// Per-row normalisation with population variance, learnable gain/bias of
// length cols(x). eps keeps constant rows finite.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);

// x[l×d] with column c scaled by s[c] (per-hidden-unit scaling).
Tensor mul_cols(const Tensor& x, const Tensor& s);

// Embedding-style row lookup with scatter-add backward. Out-of-range ids
// report the offending sequence position.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

Tensor slice_cols(const Tensor& x, int offset, int len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor row(const Tensor& x, int r);

Tensor sum(const Tensor& x);
Tensor pick(const Tensor& x, int flat_index);

// Scalar losses.
Tensor cross_entropy_with_logits(const Tensor& logits, int label);
Tensor squared_error(const Tensor& pred, double target);

}  // namespace palette
