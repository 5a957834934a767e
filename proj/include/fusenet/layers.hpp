#pragma once

#include <cstddef>
#include <vector>

#include "fusenet/tensor.hpp"

// Differentiable layer primitives.  Convolution is valid-region, stride 1;
// pooling is max over non-overlapping 2x2 windows with odd trailing
// rows/columns dropped; all math is in double.
//
// Two surfaces per operation: a single-sample form taking {h,w,d} (or {n})
// tensors, and a batched form taking a leading batch dimension.  The
// batched conv/dense paths lower to an im2col matrix product executed by
// BLAS dgemm; the single-sample forms are thin wrappers over them.  Every
// operation validates input shapes and checks its output for NaN/Inf.

namespace fusenet {

// ---- batched forms: input {B,h,w,d} (conv/pool) or {B,...} (dense) ----

// save_cols, when non-null, receives the im2col matrix (B*oh*ow rows,
// kh*kw*d columns) so the backward pass can reuse it.
Tensor conv_forward_batch(const Tensor& in, const Tensor& w, const Tensor& b,
                          std::vector<double>* save_cols = nullptr);

struct ConvGrads {
    Tensor dw, db, din;
};
// cols may be null, in which case the im2col matrix is rebuilt from `in`.
ConvGrads conv_backward_batch(const Tensor& in, const Tensor& w, const Tensor& dout,
                              const std::vector<double>* cols = nullptr);

// argmax, when non-null, receives per-output-element flat indices into the
// input buffer (first occurrence wins on ties).
Tensor maxpool_forward_batch(const Tensor& in, std::vector<std::size_t>* argmax = nullptr);
Tensor maxpool_backward_batch(const Shape& in_shape, const std::vector<std::size_t>& argmax,
                              const Tensor& dout);

Tensor relu(const Tensor& in);
Tensor relu_backward(const Tensor& in, const Tensor& dout);
Tensor sigmoid(const Tensor& in);
Tensor sigmoid_backward(const Tensor& out, const Tensor& dout);

// Input of any rank {B,...} is implicitly flattened to {B,n}.
Tensor dense_forward_batch(const Tensor& in, const Tensor& w, const Tensor& b);

struct DenseGrads {
    Tensor dw, db, din; // din has shape {B,n}
};
DenseGrads dense_backward_batch(const Tensor& in, const Tensor& w, const Tensor& dout);

struct SoftmaxBatchResult {
    Tensor probs;     // {B,2}, rows sum to 1
    double mean_loss; // mean cross-entropy over the batch
};
SoftmaxBatchResult softmax_xent_forward_batch(const Tensor& logits, const std::vector<int>& labels);
// Gradient of the mean batch loss w.r.t. logits: (probs - onehot) / B.
Tensor softmax_xent_backward_batch(const Tensor& probs, const std::vector<int>& labels);

// ---- single-sample forms ----

Tensor conv_forward(const Tensor& in, const Tensor& w, const Tensor& b);
Tensor maxpool_forward(const Tensor& in, std::vector<std::size_t>* argmax = nullptr);
Tensor dense_forward(const Tensor& in, const Tensor& w, const Tensor& b);

struct SoftmaxResult {
    Tensor probs;
    double loss;
};
SoftmaxResult softmax_xent_forward(const Tensor& logits, int label);

} // namespace fusenet
