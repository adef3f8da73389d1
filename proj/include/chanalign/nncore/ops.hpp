#pragma once

#include <vector>

#include "chanalign/nncore/tensor.hpp"

namespace nncore {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Elementwise with constants.
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor pow(const Tensor& x, double p);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor quick_gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Multiply by a learnable 1-element tensor.
Tensor scale_by(const Tensor& x, const Tensor& s);

// a [..., K] times b [K, N] -> [..., N]. Leading dims are flattened to rows.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched: a [G, M, K] times b [G, K, N] -> [G, M, N].
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor transpose2d(const Tensor& x);                   // [M,N] -> [N,M]
Tensor transpose_last2(const Tensor& x);               // [G,M,N] -> [G,N,M]
Tensor permute_0213(const Tensor& x);                  // [A,B,C,D] -> [A,C,B,D]
Tensor reshape(const Tensor& x, std::vector<int> shape);

// Slice along the last dim: x [..., C] -> [..., c1-c0].
Tensor slice_last(const Tensor& x, int c0, int c1);
// Token-axis ops for [B, S, D] sequences.
Tensor concat_tokens(const Tensor& a, const Tensor& b);
Tensor slice_tokens(const Tensor& x, int s0, int s1);  // -> [B, s1-s0, D]
Tensor slice_token(const Tensor& x, int s);            // -> [B, D]
Tensor expand_token(const Tensor& t, int batch);       // [D] -> [B, 1, D]

// x [..., C] + b [C], broadcast over rows.
Tensor bias_add(const Tensor& x, const Tensor& b);
// x [B, S, D] + p [S, D], broadcast over batch (positional embeddings).
Tensor pos_add(const Tensor& x, const Tensor& p);

// Row-wise layer normalization over the last dim with affine params.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row-wise softmax over the last dim.
Tensor softmax_last(const Tensor& x);

// Mean softmax cross-entropy of logits [N, K] against integer targets.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]

// Row-wise L2 normalization of x [N, D]. Rows must be nonzero.
Tensor l2_normalize_rows(const Tensor& x);

// Disjoint patch extraction: x [B,C,H,W] -> [B, S, C*ph*pw] with
// S = (H/ph)*(W/pw), patches scanned row-major. Exact division required.
Tensor im2row(const Tensor& x, int ph, int pw);
// Inverse of im2row: tokens [B, S, C*ph*pw] -> image [B, C, H, W].
Tensor row2im(const Tensor& x, int channels, int height, int width, int ph, int pw);

}  // namespace nncore
