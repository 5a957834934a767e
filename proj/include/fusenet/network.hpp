#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusenet/tensor.hpp"

// Sequential network machinery: layer specs, shape validation, parameter
// init, batched forward/backward, the SGD update, and finite-difference
// gradient verification.

namespace fusenet {

enum class LayerKind { Conv, MaxPool, Relu, Sigmoid, Dense, SoftmaxOutput };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind;
    std::size_t kh = 0, kw = 0, filters = 0; // Conv
    std::size_t units = 0;                   // Dense

    static LayerSpec conv(std::size_t kh, std::size_t kw, std::size_t filters) {
        return {LayerKind::Conv, kh, kw, filters, 0};
    }
    static LayerSpec maxpool() { return {LayerKind::MaxPool}; }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }
    static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, 0, 0, 0, units}; }
    static LayerSpec softmax_output() { return {LayerKind::SoftmaxOutput}; }

    bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
};

struct NetworkSpec {
    Shape input; // {h,w,d}
    std::vector<LayerSpec> layers;
};

// Validates the spec and returns each layer's output shape (single-sample,
// no batch axis).  Throws PreconditionError with the offending layer named.
std::vector<Shape> shape_chain(const NetworkSpec& spec);

// Trainable weight count (weights + biases) over all layers.
std::size_t param_count(const NetworkSpec& spec);

struct LayerParams {
    Tensor w, b;   // empty for parameterless layers
    Tensor vw, vb; // momentum state, same shapes
};

struct ParamStore {
    std::vector<LayerParams> layers;
};

// Glorot-uniform weights, zero biases, zero velocities.  Identical seeds
// give bit-identical stores.
ParamStore init_params(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardTrace {
    std::vector<Tensor> acts; // acts[0] = input, acts[i+1] = output of layer i
    std::vector<std::vector<double>> conv_cols;
    std::vector<std::vector<std::size_t>> pool_argmax;
};

// Runs the full layer stack on a {B,...} batch.  A trailing SoftmaxOutput
// yields class probabilities.  The trace (optional) captures what backward
// needs; prediction passes nullptr.
Tensor run_forward(const NetworkSpec& spec, const ParamStore& params, const Tensor& input,
                   ForwardTrace* trace = nullptr);

// Mean cross-entropy of softmax probabilities {B,2} against labels.
double mean_xent(const Tensor& probs, const std::vector<int>& labels);

struct LayerGrads {
    Tensor dw, db;
};

struct Gradients {
    std::vector<LayerGrads> layers;
    Tensor dinput; // gradient w.r.t. the network input batch
};

// Backward over a recorded trace.  Networks ending in SoftmaxOutput take
// `labels` (gradient of the mean batch loss); headless stacks (no softmax)
// take `upstream`, the gradient arriving at their final activation.
Gradients run_backward(const NetworkSpec& spec, const ParamStore& params,
                       const ForwardTrace& trace, const std::vector<int>* labels,
                       const Tensor* upstream);

// v <- momentum*v - lr*g;  p <- p + v.  Throws NumericError naming the
// layer if an update produces a non-finite parameter.
void sgd_step(ParamStore& params, const Gradients& grads, double lr, double momentum);

// ---- finite-difference gradient verification ----

struct GradCheckEntry {
    std::string name;   // e.g. "layer0:conv(w)"
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    std::size_t total_params = 0, checked_params = 0;
    bool pass = true;
};

// One named parameter tensor with its analytic gradient, for checking.
struct ParamRef {
    std::string name;
    Tensor* value;
    const Tensor* analytic;
};

// Central differences at `step` against the analytic gradients; relative
// error uses denominator max(|a|+|n|, 1e-3) so near-zero gradients are
// compared absolutely.  When the refs hold more than max_checks scalars, a
// seeded subsample of exactly max_checks distinct positions is checked.
GradCheckReport gradcheck_params(std::vector<ParamRef> refs,
                                 const std::function<double()>& loss_fn, double step, double tol,
                                 std::size_t max_checks, std::uint64_t subsample_seed);

// Convenience wrapper for a single sequential network on a fixed batch.
GradCheckReport gradcheck(const NetworkSpec& spec, ParamStore& params, const Tensor& input,
                          const std::vector<int>& labels, double step = 1e-5, double tol = 1e-6,
                          std::size_t max_checks = 2000, std::uint64_t subsample_seed = 1);

} // namespace fusenet
