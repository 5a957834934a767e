#include "fusenet/network.hpp"

#include <cmath>

#include "fusenet/errors.hpp"
#include "fusenet/layers.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Dense: return "dense";
    case LayerKind::SoftmaxOutput: return "softmax";
    }
    return "?";
}

namespace {

[[noreturn]] void bad_layer(std::size_t i, const LayerSpec& l, const std::string& why) {
    throw PreconditionError("layer " + std::to_string(i) + " (" + layer_kind_name(l.kind)
                            + "): " + why);
}

} // namespace

std::vector<Shape> shape_chain(const NetworkSpec& spec) {
    if (spec.input.size() != 3)
        throw PreconditionError("network input must be {h,w,d}, got " + shape_str(spec.input));
    for (std::size_t d : spec.input)
        if (d == 0) throw PreconditionError("network input has a zero extent: " + shape_str(spec.input));
    if (spec.layers.empty()) throw PreconditionError("network has no layers");

    std::vector<Shape> out;
    Shape cur = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::SoftmaxOutput && i + 1 != spec.layers.size())
            bad_layer(i, l, "must be the final layer");
        switch (l.kind) {
        case LayerKind::Conv: {
            if (cur.size() != 3)
                bad_layer(i, l, "needs a {h,w,d} input, has " + shape_str(cur));
            if (l.kh < 1 || l.kw < 1 || l.filters < 1)
                bad_layer(i, l, "degenerate kernel spec");
            if (l.kh > cur[0] || l.kw > cur[1])
                bad_layer(i, l, "kernel " + std::to_string(l.kh) + "x" + std::to_string(l.kw)
                                    + " exceeds input " + shape_str(cur));
            cur = {cur[0] - l.kh + 1, cur[1] - l.kw + 1, l.filters};
            break;
        }
        case LayerKind::MaxPool: {
            if (cur.size() != 3)
                bad_layer(i, l, "needs a {h,w,d} input, has " + shape_str(cur));
            if (cur[0] < 2 || cur[1] < 2)
                bad_layer(i, l, "input " + shape_str(cur) + " smaller than the 2x2 window");
            cur = {cur[0] / 2, cur[1] / 2, cur[2]};
            break;
        }
        case LayerKind::Relu:
        case LayerKind::Sigmoid:
            break;
        case LayerKind::Dense: {
            if (l.units < 1) bad_layer(i, l, "needs at least one unit");
            cur = {l.units};
            break;
        }
        case LayerKind::SoftmaxOutput: {
            if (shape_numel(cur) != 2)
                bad_layer(i, l, "needs a 2-logit input, has " + shape_str(cur));
            cur = {2};
            break;
        }
        }
        out.push_back(cur);
    }
    return out;
}

namespace {

// Weight/bias shapes per layer given the input shape it sees.
struct ParamShapes {
    Shape w, b;
    std::size_t fan_in = 0, fan_out = 0;
};

ParamShapes param_shapes(const LayerSpec& l, const Shape& in) {
    ParamShapes ps;
    if (l.kind == LayerKind::Conv) {
        std::size_t d = in[2];
        ps.w = {l.kh, l.kw, d, l.filters};
        ps.b = {l.filters};
        ps.fan_in = l.kh * l.kw * d;
        ps.fan_out = l.kh * l.kw * l.filters;
    } else if (l.kind == LayerKind::Dense) {
        std::size_t n = shape_numel(in);
        ps.w = {n, l.units};
        ps.b = {l.units};
        ps.fan_in = n;
        ps.fan_out = l.units;
    }
    return ps;
}

} // namespace

std::size_t param_count(const NetworkSpec& spec) {
    auto chain = shape_chain(spec);
    std::size_t total = 0;
    Shape cur = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].has_params()) {
            ParamShapes ps = param_shapes(spec.layers[i], cur);
            total += shape_numel(ps.w) + shape_numel(ps.b);
        }
        cur = chain[i];
    }
    return total;
}

ParamStore init_params(const NetworkSpec& spec, std::uint64_t seed) {
    auto chain = shape_chain(spec);
    Pcg64 rng(seed);
    ParamStore store;
    store.layers.resize(spec.layers.size());
    Shape cur = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].has_params()) {
            ParamShapes ps = param_shapes(spec.layers[i], cur);
            LayerParams& lp = store.layers[i];
            lp.w = Tensor(ps.w);
            double a = std::sqrt(6.0 / static_cast<double>(ps.fan_in + ps.fan_out));
            for (double& v : lp.w.data) v = rng.uniform(-a, a);
            lp.b = Tensor(ps.b);
            lp.vw = Tensor(ps.w);
            lp.vb = Tensor(ps.b);
        }
        cur = chain[i];
    }
    return store;
}

namespace {

Shape batched(const Shape& single, std::size_t b) {
    Shape s = single;
    s.insert(s.begin(), b);
    return s;
}

} // namespace

Tensor run_forward(const NetworkSpec& spec, const ParamStore& params, const Tensor& input,
                   ForwardTrace* trace) {
    if (input.rank() != 4 || Shape(input.shape.begin() + 1, input.shape.end()) != spec.input)
        throw PreconditionError("forward: batch " + shape_str(input.shape)
                                + " does not match network input " + shape_str(spec.input));
    if (params.layers.size() != spec.layers.size())
        throw PreconditionError("forward: parameter store has " + std::to_string(params.layers.size())
                                + " layers for a spec of " + std::to_string(spec.layers.size()));
    auto chain = shape_chain(spec);
    const std::size_t bsz = input.dim(0);

    if (trace) {
        trace->acts.clear();
        trace->conv_cols.assign(spec.layers.size(), {});
        trace->pool_argmax.assign(spec.layers.size(), {});
        trace->acts.reserve(spec.layers.size() + 1);
        trace->acts.push_back(input);
    }

    Tensor cur = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const LayerParams& lp = params.layers[i];
        Tensor next;
        switch (l.kind) {
        case LayerKind::Conv:
            next = conv_forward_batch(cur, lp.w, lp.b, trace ? &trace->conv_cols[i] : nullptr);
            break;
        case LayerKind::MaxPool:
            next = maxpool_forward_batch(cur, trace ? &trace->pool_argmax[i] : nullptr);
            break;
        case LayerKind::Relu:
            next = relu(cur);
            break;
        case LayerKind::Sigmoid:
            next = sigmoid(cur);
            break;
        case LayerKind::Dense:
            next = dense_forward_batch(cur, lp.w, lp.b);
            break;
        case LayerKind::SoftmaxOutput: {
            Tensor logits = cur;
            logits.reshape({bsz, 2});
            // labels are not needed to produce probabilities; fake labels
            // of 0 reuse the batched forward without computing a loss
            auto sm = softmax_xent_forward_batch(logits, std::vector<int>(bsz, 0));
            next = std::move(sm.probs);
            break;
        }
        }
        next.reshape(batched(chain[i], bsz));
        if (trace) trace->acts.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

double mean_xent(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2 || probs.dim(1) != 2)
        throw PreconditionError("mean_xent: expected {batch,2} probabilities, got "
                                + shape_str(probs.shape));
    if (labels.size() != probs.dim(0))
        throw PreconditionError("mean_xent: " + std::to_string(labels.size())
                                + " labels for batch of " + std::to_string(probs.dim(0)));
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int y = labels[i];
        if (y != 0 && y != 1)
            throw PreconditionError("mean_xent: label " + std::to_string(y) + " outside {0,1}");
        loss -= std::log(probs.data[2 * i + y]);
    }
    loss /= static_cast<double>(labels.size());
    if (!std::isfinite(loss)) throw NumericError("mean_xent: non-finite loss");
    return loss;
}

Gradients run_backward(const NetworkSpec& spec, const ParamStore& params,
                       const ForwardTrace& trace, const std::vector<int>* labels,
                       const Tensor* upstream) {
    if (trace.acts.size() != spec.layers.size() + 1)
        throw PreconditionError("backward: trace covers " + std::to_string(trace.acts.size())
                                + " activations for " + std::to_string(spec.layers.size())
                                + " layers");
    const std::size_t last = spec.layers.size() - 1;

    Gradients g;
    g.layers.resize(spec.layers.size());

    Tensor grad; // gradient w.r.t. the current layer's output
    if (spec.layers[last].kind == LayerKind::SoftmaxOutput) {
        if (!labels)
            throw PreconditionError("backward: network ends in softmax but no labels given");
        grad = softmax_xent_backward_batch(trace.acts[last + 1], *labels);
    } else {
        if (!upstream)
            throw PreconditionError("backward: headless network needs an upstream gradient");
        grad = *upstream;
        if (grad.shape != trace.acts[last + 1].shape)
            throw PreconditionError("backward: upstream gradient " + shape_str(grad.shape)
                                    + " does not match final activation "
                                    + shape_str(trace.acts[last + 1].shape));
    }

    for (std::size_t ii = spec.layers.size(); ii-- > 0;) {
        const LayerSpec& l = spec.layers[ii];
        const LayerParams& lp = params.layers[ii];
        const Tensor& in = trace.acts[ii];
        switch (l.kind) {
        case LayerKind::SoftmaxOutput:
            // grad already holds d(loss)/d(logits)
            grad.reshape(in.shape);
            break;
        case LayerKind::Dense: {
            DenseGrads dg = dense_backward_batch(in, lp.w, grad);
            g.layers[ii] = {std::move(dg.dw), std::move(dg.db)};
            grad = std::move(dg.din);
            grad.reshape(in.shape);
            break;
        }
        case LayerKind::Conv: {
            const auto& cols = trace.conv_cols[ii];
            ConvGrads cg = conv_backward_batch(in, lp.w, grad, cols.empty() ? nullptr : &cols);
            g.layers[ii] = {std::move(cg.dw), std::move(cg.db)};
            grad = std::move(cg.din);
            break;
        }
        case LayerKind::MaxPool:
            grad = maxpool_backward_batch(in.shape, trace.pool_argmax[ii], grad);
            break;
        case LayerKind::Relu:
            grad = relu_backward(in, grad);
            break;
        case LayerKind::Sigmoid:
            grad = sigmoid_backward(trace.acts[ii + 1], grad);
            break;
        }
    }
    g.dinput = std::move(grad);
    return g;
}

void sgd_step(ParamStore& params, const Gradients& grads, double lr, double momentum) {
    if (grads.layers.size() != params.layers.size())
        throw PreconditionError("sgd: gradient record of " + std::to_string(grads.layers.size())
                                + " layers for store of " + std::to_string(params.layers.size()));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        LayerParams& lp = params.layers[i];
        const LayerGrads& lg = grads.layers[i];
        if (lp.w.numel() == 0) continue;
        if (lg.dw.shape != lp.w.shape || lg.db.shape != lp.b.shape)
            throw PreconditionError("sgd: layer " + std::to_string(i) + " gradient "
                                    + shape_str(lg.dw.shape) + " does not match parameters "
                                    + shape_str(lp.w.shape));
        for (std::size_t j = 0; j < lp.w.numel(); ++j) {
            lp.vw.data[j] = momentum * lp.vw.data[j] - lr * lg.dw.data[j];
            lp.w.data[j] += lp.vw.data[j];
        }
        for (std::size_t j = 0; j < lp.b.numel(); ++j) {
            lp.vb.data[j] = momentum * lp.vb.data[j] - lr * lg.db.data[j];
            lp.b.data[j] += lp.vb.data[j];
        }
        try {
            check_finite(lp.w, "sgd");
            check_finite(lp.b, "sgd");
        } catch (const NumericError&) {
            throw NumericError("sgd: layer " + std::to_string(i)
                               + ": non-finite parameter after update");
        }
    }
}

GradCheckReport gradcheck_params(std::vector<ParamRef> refs,
                                 const std::function<double()>& loss_fn, double step, double tol,
                                 std::size_t max_checks, std::uint64_t subsample_seed) {
    GradCheckReport report;
    std::size_t total = 0;
    for (const ParamRef& r : refs) {
        if (r.value->shape != r.analytic->shape)
            throw PreconditionError("gradcheck: analytic gradient for " + r.name + " has shape "
                                    + shape_str(r.analytic->shape) + ", parameter is "
                                    + shape_str(r.value->shape));
        total += r.value->numel();
    }
    report.total_params = total;

    // positions to probe, as flat indices over the concatenated refs
    std::vector<std::size_t> picks;
    if (total > max_checks) {
        Pcg64 rng(subsample_seed);
        picks = rng.sample_indices(total, max_checks);
    } else {
        picks.resize(total);
        for (std::size_t i = 0; i < total; ++i) picks[i] = i;
    }
    report.checked_params = picks.size();

    report.entries.reserve(refs.size());
    for (const ParamRef& r : refs) report.entries.push_back({r.name, 0.0, 0, true});

    for (std::size_t flat : picks) {
        std::size_t ri = 0, off = flat;
        while (off >= refs[ri].value->numel()) {
            off -= refs[ri].value->numel();
            ++ri;
        }
        double* slot = &refs[ri].value->data[off];
        const double saved = *slot;
        *slot = saved + step;
        double lp = loss_fn();
        *slot = saved - step;
        double lm = loss_fn();
        *slot = saved;

        double numeric = (lp - lm) / (2.0 * step);
        double analytic = refs[ri].analytic->data[off];
        double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-3);
        double rel = std::abs(analytic - numeric) / denom;

        GradCheckEntry& e = report.entries[ri];
        e.checked++;
        if (rel > e.max_rel_err) e.max_rel_err = rel;
        if (rel > report.max_rel_err) report.max_rel_err = rel;
    }
    for (GradCheckEntry& e : report.entries) e.pass = e.max_rel_err < tol;
    report.pass = report.max_rel_err < tol;
    return report;
}

GradCheckReport gradcheck(const NetworkSpec& spec, ParamStore& params, const Tensor& input,
                          const std::vector<int>& labels, double step, double tol,
                          std::size_t max_checks, std::uint64_t subsample_seed) {
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::SoftmaxOutput)
        throw PreconditionError("gradcheck: network must end in a softmax output layer");

    ForwardTrace trace;
    run_forward(spec, params, input, &trace);
    Gradients analytic = run_backward(spec, params, trace, &labels, nullptr);

    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (!spec.layers[i].has_params()) continue;
        std::string base = "layer" + std::to_string(i) + ":" + layer_kind_name(spec.layers[i].kind);
        refs.push_back({base + "(w)", &params.layers[i].w, &analytic.layers[i].dw});
        refs.push_back({base + "(b)", &params.layers[i].b, &analytic.layers[i].db});
    }
    auto loss_fn = [&]() {
        Tensor probs = run_forward(spec, params, input, nullptr);
        return mean_xent(probs, labels);
    };
    return gradcheck_params(std::move(refs), loss_fn, step, tol, max_checks, subsample_seed);
}

} // namespace fusenet
