#include "fusenet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cblas.h>

#include "fusenet/errors.hpp"

namespace fusenet {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw PreconditionError(msg);
}

void require_rank(const Tensor& t, std::size_t r, const std::string& who) {
    require(t.rank() == r, who + ": expected rank " + std::to_string(r) + " tensor, got "
                               + shape_str(t.shape));
}

// Row-major C = A(M x K) * B(K x N).
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(k), b,
                static_cast<int>(n), 0.0, c, static_cast<int>(n));
}

// Row-major C(M x N) = A^T * B with A stored (K x M), B stored (K x N).
void gemm_at_b(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(m), b,
                static_cast<int>(n), 0.0, c, static_cast<int>(n));
}

// Row-major C = A(M x K) * B(N x K)^T.
void gemm_a_bt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(k), b,
                static_cast<int>(k), 0.0, c, static_cast<int>(n));
}

struct ConvDims {
    std::size_t batch, h, w, d, kh, kw, f, oh, ow;
};

ConvDims conv_dims(const Tensor& in, const Tensor& w) {
    require_rank(in, 4, "conv: input");
    require_rank(w, 4, "conv: weights");
    ConvDims cd{in.dim(0), in.dim(1), in.dim(2), in.dim(3),
                w.dim(0),  w.dim(1), w.dim(3), 0, 0};
    require(w.dim(2) == cd.d, "conv: weight depth " + std::to_string(w.dim(2))
                                  + " does not match input depth " + std::to_string(cd.d)
                                  + " (input " + shape_str(in.shape) + ", weights "
                                  + shape_str(w.shape) + ")");
    require(cd.kh >= 1 && cd.kw >= 1 && cd.f >= 1,
            "conv: degenerate weight shape " + shape_str(w.shape));
    require(cd.kh <= cd.h && cd.kw <= cd.w,
            "conv: kernel " + shape_str(w.shape) + " larger than input " + shape_str(in.shape));
    cd.oh = cd.h - cd.kh + 1;
    cd.ow = cd.w - cd.kw + 1;
    return cd;
}

// Rows indexed (img, r, c); columns indexed (i, j, ch) to match the weight
// layout {kh,kw,d,f} flattened over its first three axes.
void im2col(const Tensor& in, const ConvDims& cd, std::vector<double>& cols) {
    const std::size_t k = cd.kh * cd.kw * cd.d;
    cols.resize(cd.batch * cd.oh * cd.ow * k);
    const double* src = in.data.data();
    double* dst = cols.data();
    for (std::size_t img = 0; img < cd.batch; ++img) {
        const double* base = src + img * cd.h * cd.w * cd.d;
        for (std::size_t r = 0; r < cd.oh; ++r)
            for (std::size_t c = 0; c < cd.ow; ++c)
                for (std::size_t i = 0; i < cd.kh; ++i) {
                    const double* row = base + ((r + i) * cd.w + c) * cd.d;
                    for (std::size_t n = 0; n < cd.kw * cd.d; ++n) *dst++ = row[n];
                }
    }
}

} // namespace

Tensor conv_forward_batch(const Tensor& in, const Tensor& w, const Tensor& b,
                          std::vector<double>* save_cols) {
    ConvDims cd = conv_dims(in, w);
    require_rank(b, 1, "conv: bias");
    require(b.dim(0) == cd.f, "conv: bias " + shape_str(b.shape) + " does not match filter count "
                                  + std::to_string(cd.f));
    std::vector<double> local;
    std::vector<double>& cols = save_cols ? *save_cols : local;
    im2col(in, cd, cols);

    Tensor out({cd.batch, cd.oh, cd.ow, cd.f});
    const std::size_t rows = cd.batch * cd.oh * cd.ow;
    const std::size_t k = cd.kh * cd.kw * cd.d;
    gemm(rows, cd.f, k, cols.data(), w.data.data(), out.data.data());
    double* o = out.data.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < cd.f; ++f) *o++ += b.data[f];
    check_finite(out, "conv forward");
    return out;
}

ConvGrads conv_backward_batch(const Tensor& in, const Tensor& w, const Tensor& dout,
                              const std::vector<double>* cols) {
    ConvDims cd = conv_dims(in, w);
    require(dout.shape == Shape({cd.batch, cd.oh, cd.ow, cd.f}),
            "conv backward: upstream gradient " + shape_str(dout.shape) + " does not match output "
                + shape_str(Shape{cd.batch, cd.oh, cd.ow, cd.f}));

    std::vector<double> local;
    if (!cols) {
        im2col(in, cd, local);
        cols = &local;
    }
    const std::size_t rows = cd.batch * cd.oh * cd.ow;
    const std::size_t k = cd.kh * cd.kw * cd.d;

    ConvGrads g{Tensor(w.shape), Tensor({cd.f}), Tensor(in.shape)};
    gemm_at_b(k, cd.f, rows, cols->data(), dout.data.data(), g.dw.data.data());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < cd.f; ++f) g.db.data[f] += dout.data[r * cd.f + f];

    std::vector<double> dcols(rows * k);
    gemm_a_bt(rows, k, cd.f, dout.data.data(), w.data.data(), dcols.data());
    const double* dc = dcols.data();
    double* dst = g.din.data.data();
    for (std::size_t img = 0; img < cd.batch; ++img) {
        double* base = dst + img * cd.h * cd.w * cd.d;
        for (std::size_t r = 0; r < cd.oh; ++r)
            for (std::size_t c = 0; c < cd.ow; ++c)
                for (std::size_t i = 0; i < cd.kh; ++i) {
                    double* row = base + ((r + i) * cd.w + c) * cd.d;
                    for (std::size_t n = 0; n < cd.kw * cd.d; ++n) row[n] += *dc++;
                }
    }
    check_finite(g.dw, "conv backward (dw)");
    check_finite(g.db, "conv backward (db)");
    check_finite(g.din, "conv backward (din)");
    return g;
}

Tensor maxpool_forward_batch(const Tensor& in, std::vector<std::size_t>* argmax) {
    require_rank(in, 4, "maxpool: input");
    const std::size_t batch = in.dim(0), h = in.dim(1), w = in.dim(2), d = in.dim(3);
    require(h >= 2 && w >= 2,
            "maxpool: input " + shape_str(in.shape) + " smaller than the 2x2 window");
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({batch, oh, ow, d});
    if (argmax) argmax->assign(out.numel(), 0);

    const double* src = in.data.data();
    for (std::size_t img = 0; img < batch; ++img)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t c = 0; c < ow; ++c)
                for (std::size_t ch = 0; ch < d; ++ch) {
                    std::size_t best = ((img * h + 2 * r) * w + 2 * c) * d + ch;
                    double bv = src[best];
                    // scan the window in row-major order; strict > keeps
                    // the first occurrence on ties
                    for (std::size_t i = 0; i < 2; ++i)
                        for (std::size_t j = 0; j < 2; ++j) {
                            std::size_t idx = ((img * h + 2 * r + i) * w + 2 * c + j) * d + ch;
                            if (src[idx] > bv) {
                                bv = src[idx];
                                best = idx;
                            }
                        }
                    std::size_t o = ((img * oh + r) * ow + c) * d + ch;
                    out.data[o] = bv;
                    if (argmax) (*argmax)[o] = best;
                }
    check_finite(out, "maxpool forward");
    return out;
}

Tensor maxpool_backward_batch(const Shape& in_shape, const std::vector<std::size_t>& argmax,
                              const Tensor& dout) {
    require(argmax.size() == dout.numel(),
            "maxpool backward: argmax record of " + std::to_string(argmax.size())
                + " entries does not match gradient " + shape_str(dout.shape));
    Tensor din(in_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) din.data[argmax[i]] += dout.data[i];
    check_finite(din, "maxpool backward");
    return din;
}

Tensor relu(const Tensor& in) {
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
    check_finite(out, "relu");
    return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& dout) {
    require(same_shape(in, dout), "relu backward: gradient " + shape_str(dout.shape)
                                      + " does not match input " + shape_str(in.shape));
    Tensor din(in.shape);
    for (std::size_t i = 0; i < in.numel(); ++i)
        din.data[i] = in.data[i] > 0.0 ? dout.data[i] : 0.0;
    check_finite(din, "relu backward");
    return din;
}

Tensor sigmoid(const Tensor& in) {
    Tensor out(in.shape);
    for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-in.data[i]));
    check_finite(out, "sigmoid");
    return out;
}

Tensor sigmoid_backward(const Tensor& out, const Tensor& dout) {
    require(same_shape(out, dout), "sigmoid backward: gradient " + shape_str(dout.shape)
                                       + " does not match activation " + shape_str(out.shape));
    Tensor din(out.shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
        din.data[i] = dout.data[i] * out.data[i] * (1.0 - out.data[i]);
    check_finite(din, "sigmoid backward");
    return din;
}

Tensor dense_forward_batch(const Tensor& in, const Tensor& w, const Tensor& b) {
    require(in.rank() >= 2, "dense: batched input must have a leading batch axis, got "
                                + shape_str(in.shape));
    require_rank(w, 2, "dense: weights");
    require_rank(b, 1, "dense: bias");
    const std::size_t batch = in.dim(0);
    const std::size_t n = in.numel() / std::max<std::size_t>(batch, 1);
    require(n == w.dim(0), "dense: input " + shape_str(in.shape) + " flattens to width "
                               + std::to_string(n) + " but weights are " + shape_str(w.shape));
    const std::size_t m = w.dim(1);
    require(b.dim(0) == m, "dense: bias " + shape_str(b.shape) + " does not match output width "
                               + std::to_string(m));

    Tensor out({batch, m});
    gemm(batch, m, n, in.data.data(), w.data.data(), out.data.data());
    double* o = out.data.data();
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < m; ++c) *o++ += b.data[c];
    check_finite(out, "dense forward");
    return out;
}

DenseGrads dense_backward_batch(const Tensor& in, const Tensor& w, const Tensor& dout) {
    const std::size_t batch = in.dim(0);
    const std::size_t n = in.numel() / std::max<std::size_t>(batch, 1);
    const std::size_t m = w.dim(1);
    require(dout.shape == Shape({batch, m}),
            "dense backward: upstream gradient " + shape_str(dout.shape)
                + " does not match output " + shape_str(Shape{batch, m}));

    DenseGrads g{Tensor(w.shape), Tensor({m}), Tensor({batch, n})};
    gemm_at_b(n, m, batch, in.data.data(), dout.data.data(), g.dw.data.data());
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < m; ++c) g.db.data[c] += dout.data[r * m + c];
    gemm_a_bt(batch, n, m, dout.data.data(), w.data.data(), g.din.data.data());
    check_finite(g.dw, "dense backward (dw)");
    check_finite(g.db, "dense backward (db)");
    check_finite(g.din, "dense backward (din)");
    return g;
}

SoftmaxBatchResult softmax_xent_forward_batch(const Tensor& logits,
                                              const std::vector<int>& labels) {
    require(logits.rank() == 2 && logits.dim(1) == 2,
            "softmax: expected {batch,2} logits, got " + shape_str(logits.shape));
    const std::size_t batch = logits.dim(0);
    require(labels.size() == batch, "softmax: " + std::to_string(labels.size())
                                        + " labels for batch of " + std::to_string(batch));
    SoftmaxBatchResult res{Tensor({batch, 2}), 0.0};
    for (std::size_t i = 0; i < batch; ++i) {
        int y = labels[i];
        require(y == 0 || y == 1, "softmax: label " + std::to_string(y) + " outside {0,1}");
        double z0 = logits.data[2 * i], z1 = logits.data[2 * i + 1];
        double m = std::max(z0, z1);
        double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
        double s = e0 + e1;
        res.probs.data[2 * i] = e0 / s;
        res.probs.data[2 * i + 1] = e1 / s;
        res.mean_loss -= std::log(res.probs.data[2 * i + y]);
    }
    res.mean_loss /= static_cast<double>(batch);
    check_finite(res.probs, "softmax probabilities");
    if (!std::isfinite(res.mean_loss)) throw NumericError("softmax loss: non-finite value");
    return res;
}

Tensor softmax_xent_backward_batch(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t batch = probs.dim(0);
    require(labels.size() == batch, "softmax backward: " + std::to_string(labels.size())
                                        + " labels for batch of " + std::to_string(batch));
    Tensor dlogits({batch, 2});
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        dlogits.data[2 * i] = (probs.data[2 * i] - (labels[i] == 0 ? 1.0 : 0.0)) * inv;
        dlogits.data[2 * i + 1] = (probs.data[2 * i + 1] - (labels[i] == 1 ? 1.0 : 0.0)) * inv;
    }
    check_finite(dlogits, "softmax backward");
    return dlogits;
}

namespace {

Tensor with_batch_axis(const Tensor& t) {
    Tensor b = t;
    Shape s = b.shape;
    s.insert(s.begin(), 1);
    b.reshape(s);
    return b;
}

Tensor drop_batch_axis(Tensor t) {
    Shape s(t.shape.begin() + 1, t.shape.end());
    t.reshape(s);
    return t;
}

} // namespace

Tensor conv_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
    require_rank(in, 3, "conv: input");
    return drop_batch_axis(conv_forward_batch(with_batch_axis(in), w, b));
}

Tensor maxpool_forward(const Tensor& in, std::vector<std::size_t>* argmax) {
    require_rank(in, 3, "maxpool: input");
    return drop_batch_axis(maxpool_forward_batch(with_batch_axis(in), argmax));
}

Tensor dense_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
    require(in.rank() >= 1, "dense: empty input");
    return drop_batch_axis(dense_forward_batch(with_batch_axis(in), w, b));
}

SoftmaxResult softmax_xent_forward(const Tensor& logits, int label) {
    require(logits.shape == Shape({2}),
            "softmax: expected {2} logits, got " + shape_str(logits.shape));
    auto batch = softmax_xent_forward_batch(with_batch_axis(logits), {label});
    return {drop_batch_axis(std::move(batch.probs)), batch.mean_loss};
}

} // namespace fusenet
