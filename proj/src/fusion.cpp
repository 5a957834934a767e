#include "fusenet/fusion.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "fusenet/errors.hpp"
#include "fusenet/layers.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

const char* scheme_name(FusionScheme s) {
    switch (s) {
    case FusionScheme::Type1: return "type1";
    case FusionScheme::Type2: return "type2";
    case FusionScheme::Type3: return "type3";
    case FusionScheme::Single: return "single";
    }
    return "?";
}

FusionScheme scheme_from_name(const std::string& name) {
    if (name == "type1") return FusionScheme::Type1;
    if (name == "type2") return FusionScheme::Type2;
    if (name == "type3") return FusionScheme::Type3;
    if (name == "single") return FusionScheme::Single;
    throw PreconditionError("unknown scheme '" + name + "' (expected type1|type2|type3|single)");
}

void validate_config(const BaseConfig& cfg) {
    if (cfg.conv1_filters < 1 || cfg.conv2_filters < 1 || cfg.dense_width < 1)
        throw PreconditionError("config: filter and dense counts must be >= 1");
    if (!(cfg.lr > 0.0)) throw PreconditionError("config: learning rate must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw PreconditionError("config: momentum must lie in [0,1)");
    if (cfg.batch < 1) throw PreconditionError("config: batch size must be >= 1");
    if (cfg.epochs < 1) throw PreconditionError("config: epochs must be >= 1");
    if (cfg.stop_accuracy < 0.0 || cfg.stop_accuracy > 1.0)
        throw PreconditionError("config: stop_accuracy must lie in [0,1]");
}

namespace {

std::vector<LayerSpec> stack_layers(const BaseConfig& cfg) {
    return {LayerSpec::conv(2, 2, cfg.conv1_filters), LayerSpec::relu(), LayerSpec::maxpool(),
            LayerSpec::conv(2, 2, cfg.conv2_filters), LayerSpec::relu(), LayerSpec::maxpool(),
            LayerSpec::dense(cfg.dense_width),        LayerSpec::relu(), LayerSpec::dense(2),
            LayerSpec::softmax_output()};
}

void require_fusion_k(std::size_t k, const char* who) {
    if (k < 2)
        throw PreconditionError(std::string(who) + " needs at least 2 modalities, got "
                                + std::to_string(k));
}

} // namespace

NetworkSpec build_single(const BaseConfig& cfg, std::size_t patch) {
    validate_config(cfg);
    NetworkSpec spec{{patch, patch, 1}, stack_layers(cfg)};
    shape_chain(spec);
    return spec;
}

NetworkSpec build_type1(std::size_t k, const BaseConfig& cfg, std::size_t patch) {
    validate_config(cfg);
    require_fusion_k(k, "type1");
    NetworkSpec spec{{patch, patch, k}, stack_layers(cfg)};
    shape_chain(spec);
    return spec;
}

Type2Spec build_type2(std::size_t k, const BaseConfig& cfg, std::size_t patch) {
    validate_config(cfg);
    require_fusion_k(k, "type2");
    Type2Spec t2;
    NetworkSpec tower{{patch, patch, 1},
                      {LayerSpec::conv(2, 2, cfg.conv1_filters), LayerSpec::relu(),
                       LayerSpec::maxpool(), LayerSpec::conv(2, 2, cfg.conv2_filters),
                       LayerSpec::relu(), LayerSpec::maxpool()}};
    auto chain = shape_chain(tower);
    const std::size_t flat = shape_numel(chain.back());
    t2.towers.assign(k, tower);
    t2.head = NetworkSpec{{1, 1, k * flat},
                          {LayerSpec::dense(cfg.dense_width), LayerSpec::relu(),
                           LayerSpec::dense(2), LayerSpec::softmax_output()}};
    shape_chain(t2.head);
    return t2;
}

std::vector<NetworkSpec> build_type3(std::size_t k, const BaseConfig& cfg, std::size_t patch) {
    require_fusion_k(k, "type3");
    return std::vector<NetworkSpec>(k, build_single(cfg, patch));
}

std::size_t scheme_param_count(FusionScheme s, std::size_t k, const BaseConfig& cfg,
                               std::size_t patch) {
    switch (s) {
    case FusionScheme::Single: return param_count(build_single(cfg, patch));
    case FusionScheme::Type1: return param_count(build_type1(k, cfg, patch));
    case FusionScheme::Type3: return k * param_count(build_single(cfg, patch));
    case FusionScheme::Type2: {
        Type2Spec t2 = build_type2(k, cfg, patch);
        std::size_t total = param_count(t2.head);
        for (const NetworkSpec& t : t2.towers) total += param_count(t);
        return total;
    }
    }
    return 0;
}

namespace {

void validate_modalities(FusionScheme s, const std::vector<std::string>& modalities) {
    if (s == FusionScheme::Single) {
        if (modalities.size() != 1)
            throw PreconditionError("single scheme takes exactly 1 modality, got "
                                    + std::to_string(modalities.size()));
    } else {
        require_fusion_k(modalities.size(), scheme_name(s));
    }
    for (const std::string& m : modalities)
        if (m.empty()) throw PreconditionError("empty modality name");
    for (std::size_t i = 0; i < modalities.size(); ++i)
        for (std::size_t j = i + 1; j < modalities.size(); ++j)
            if (modalities[i] == modalities[j])
                throw PreconditionError("duplicate modality '" + modalities[i]
                                        + "' would alias its seed streams");
}

// Rows of the head's first dense layer are re-drawn block-wise, one block
// per tower, each from a stream derived from the tower's modality name.
// Permuting the modality list then permutes the blocks with their values,
// which keeps type2 predictions independent of list order (up to float
// summation order).
void head_block_init(ParamStore& head, const NetworkSpec& head_spec, std::size_t flat,
                     const std::vector<std::string>& modalities, std::uint64_t seed) {
    Tensor& w = head.layers[0].w;
    const std::size_t width = head_spec.input[2];
    const std::size_t units = w.dim(1);
    const double a = std::sqrt(6.0 / static_cast<double>(width + units));
    for (std::size_t m = 0; m < modalities.size(); ++m) {
        Pcg64 rng(derive_seed(seed, "init:head:" + modalities[m]));
        for (std::size_t r = m * flat; r < (m + 1) * flat; ++r)
            for (std::size_t c = 0; c < units; ++c) w.at(r, c) = rng.uniform(-a, a);
    }
}

} // namespace

TrainedNetwork assemble_network(FusionScheme s, const std::vector<std::string>& modalities,
                                const BaseConfig& cfg, std::size_t patch) {
    validate_config(cfg);
    validate_modalities(s, modalities);
    const std::size_t k = modalities.size();

    TrainedNetwork net;
    net.scheme = s;
    net.modalities = modalities;
    net.patch = patch;
    switch (s) {
    case FusionScheme::Single: {
        NetworkSpec spec = build_single(cfg, patch);
        std::string name = "single:" + modalities[0];
        net.parts.push_back({name, spec, init_params(spec, derive_seed(cfg.seed, "init:" + name))});
        break;
    }
    case FusionScheme::Type1: {
        NetworkSpec spec = build_type1(k, cfg, patch);
        net.parts.push_back({"net", spec, init_params(spec, derive_seed(cfg.seed, "init:type1"))});
        break;
    }
    case FusionScheme::Type3: {
        NetworkSpec spec = build_single(cfg, patch);
        for (const std::string& m : modalities) {
            std::string name = "single:" + m;
            net.parts.push_back(
                {name, spec, init_params(spec, derive_seed(cfg.seed, "init:" + name))});
        }
        break;
    }
    case FusionScheme::Type2: {
        Type2Spec t2 = build_type2(k, cfg, patch);
        const std::size_t flat = shape_numel(shape_chain(t2.towers[0]).back());
        for (std::size_t m = 0; m < k; ++m) {
            std::string name = "tower:" + modalities[m];
            net.parts.push_back({name, t2.towers[m],
                                 init_params(t2.towers[m], derive_seed(cfg.seed, "init:" + name))});
        }
        ParamStore head = init_params(t2.head, derive_seed(cfg.seed, "init:head"));
        head_block_init(head, t2.head, flat, modalities, cfg.seed);
        net.parts.push_back({"head", t2.head, std::move(head)});
        break;
    }
    }
    return net;
}

namespace {

void validate_batch(const TrainedNetwork& net, const Tensor& batch) {
    Shape want{batch.rank() == 4 ? batch.dim(0) : 0, net.patch, net.patch, net.modalities.size()};
    if (batch.rank() != 4 || batch.shape != want)
        throw PreconditionError("scheme batch " + shape_str(batch.shape) + " does not match "
                                + shape_str(want));
}

// One modality channel of a {B,p,p,k} batch as {B,p,p,1}.
Tensor slice_plane(const Tensor& batch, std::size_t plane) {
    const std::size_t b = batch.dim(0), p = batch.dim(1), k = batch.dim(3);
    Tensor out({b, p, p, 1});
    const double* src = batch.data.data() + plane;
    for (std::size_t i = 0; i < b * p * p; ++i) out.data[i] = src[i * k];
    return out;
}

Tensor concat_features(const std::vector<Tensor>& blocks) {
    const std::size_t b = blocks[0].dim(0);
    std::size_t width = 0;
    for (const Tensor& t : blocks) width += t.numel() / b;
    Tensor out({b, 1, 1, width});
    std::size_t off = 0;
    for (const Tensor& t : blocks) {
        const std::size_t f = t.numel() / b;
        for (std::size_t row = 0; row < b; ++row)
            std::memcpy(out.data.data() + row * width + off, t.data.data() + row * f,
                        f * sizeof(double));
        off += f;
    }
    return out;
}

Tensor type2_forward(const TrainedNetwork& net, const Tensor& batch,
                     std::vector<ForwardTrace>* traces) {
    const std::size_t k = net.modalities.size();
    std::vector<Tensor> feats(k);
    for (std::size_t m = 0; m < k; ++m) {
        Tensor plane = slice_plane(batch, m);
        feats[m] = run_forward(net.parts[m].spec, net.parts[m].params, plane,
                               traces ? &(*traces)[m] : nullptr);
    }
    Tensor concat = concat_features(feats);
    return run_forward(net.parts[k].spec, net.parts[k].params, concat,
                       traces ? &(*traces)[k] : nullptr);
}

} // namespace

Tensor scheme_forward(const TrainedNetwork& net, const Tensor& batch,
                      std::vector<ForwardTrace>* traces) {
    validate_batch(net, batch);
    if (traces) traces->assign(net.parts.size(), {});
    switch (net.scheme) {
    case FusionScheme::Single:
    case FusionScheme::Type1:
        return run_forward(net.parts[0].spec, net.parts[0].params, batch,
                           traces ? &(*traces)[0] : nullptr);
    case FusionScheme::Type2: return type2_forward(net, batch, traces);
    case FusionScheme::Type3:
        throw PreconditionError(
            "type3 has no joint forward pass; predict each member and majority-vote");
    }
    return {};
}

namespace {

// Gradients for every part of a type1/type2/single network on one batch.
std::vector<Gradients> scheme_gradients(const TrainedNetwork& net, const Tensor& batch,
                                        const std::vector<int>& labels, double* loss_out,
                                        Tensor* probs_out) {
    std::vector<ForwardTrace> traces;
    Tensor probs = scheme_forward(net, batch, &traces);
    double loss = mean_xent(probs, labels);

    std::vector<Gradients> grads(net.parts.size());
    if (net.scheme == FusionScheme::Type2) {
        const std::size_t k = net.modalities.size();
        grads[k] = run_backward(net.parts[k].spec, net.parts[k].params, traces[k], &labels,
                                nullptr);
        // split the concat gradient back onto the towers
        const Tensor& dconcat = grads[k].dinput; // {B,1,1,k*flat}
        const std::size_t b = batch.dim(0);
        const std::size_t width = dconcat.numel() / b;
        const std::size_t flat = width / k;
        for (std::size_t m = 0; m < k; ++m) {
            Tensor up(traces[m].acts.back().shape);
            for (std::size_t row = 0; row < b; ++row)
                std::memcpy(up.data.data() + row * flat,
                            dconcat.data.data() + row * width + m * flat, flat * sizeof(double));
            grads[m] = run_backward(net.parts[m].spec, net.parts[m].params, traces[m], nullptr,
                                    &up);
        }
    } else {
        grads[0] = run_backward(net.parts[0].spec, net.parts[0].params, traces[0], &labels,
                                nullptr);
    }
    if (loss_out) *loss_out = loss;
    if (probs_out) *probs_out = std::move(probs);
    return grads;
}

std::size_t count_correct(const Tensor& probs, const std::vector<int>& labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int pred = probs.data[2 * i + 1] > probs.data[2 * i] ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return correct;
}

Tensor gather_rows(const SampleSet& set, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end, const std::vector<std::size_t>& planes) {
    const std::size_t b = end - begin, p = set.patch(), k = set.k(), s = planes.size();
    Tensor out({b, p, p, s});
    const std::size_t row_stride = p * p * k;
    bool full = s == k;
    for (std::size_t m = 0; full && m < s; ++m) full = planes[m] == m;
    for (std::size_t i = 0; i < b; ++i) {
        const double* src = set.patches.data.data() + order[begin + i] * row_stride;
        double* dst = out.data.data() + i * p * p * s;
        if (full) {
            std::memcpy(dst, src, row_stride * sizeof(double));
        } else {
            for (std::size_t cell = 0; cell < p * p; ++cell)
                for (std::size_t m = 0; m < s; ++m) dst[cell * s + m] = src[cell * k + planes[m]];
        }
    }
    return out;
}

// Epoch loop over one independently trained unit.  For type3 this is one
// member looking at a single channel; otherwise the whole network.
void train_unit(TrainedNetwork& net, const std::vector<std::size_t>& planes,
                const std::string& stream_tag, const SampleSet& samples, const BaseConfig& cfg,
                std::size_t member, std::vector<EpochLog>& log) {
    const std::size_t n = samples.count();
    Pcg64 shuffle_rng(derive_seed(cfg.seed, "train:" + stream_tag));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const bool member_mode = net.scheme == FusionScheme::Type3;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch) {
            const std::size_t end = std::min(n, begin + cfg.batch);
            Tensor batch = gather_rows(samples, order, begin, end, planes);
            std::vector<int> labels(end - begin);
            for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = samples.labels[order[begin + i]];

            try {
                double loss = 0.0;
                Tensor probs;
                if (member_mode) {
                    SubNet& part = net.parts[member];
                    ForwardTrace trace;
                    probs = run_forward(part.spec, part.params, batch, &trace);
                    loss = mean_xent(probs, labels);
                    Gradients g = run_backward(part.spec, part.params, trace, &labels, nullptr);
                    sgd_step(part.params, g, cfg.lr, cfg.momentum);
                } else {
                    auto grads = scheme_gradients(net, batch, labels, &loss, &probs);
                    for (std::size_t pi = 0; pi < net.parts.size(); ++pi)
                        sgd_step(net.parts[pi].params, grads[pi], cfg.lr, cfg.momentum);
                }
                loss_sum += loss * static_cast<double>(end - begin);
                correct += count_correct(probs, labels);
            } catch (const NumericError& e) {
                throw NumericError(std::string(scheme_name(net.scheme)) + " ("
                                   + stream_tag + "): epoch " + std::to_string(epoch) + " batch "
                                   + std::to_string(begin / cfg.batch) + ": " + e.what());
            }
        }
        double acc = static_cast<double>(correct) / static_cast<double>(n);
        log.push_back({loss_sum / static_cast<double>(n), acc});
        if (cfg.stop_accuracy > 0.0 && acc >= cfg.stop_accuracy) break;
    }
}

} // namespace

TrainedNetwork train_scheme(FusionScheme s, const std::vector<std::string>& modalities,
                            const SampleSet& samples, const BaseConfig& cfg, std::size_t patch) {
    if (samples.count() == 0) throw PreconditionError("train: empty sample set");
    if (samples.patch() != patch)
        throw PreconditionError("train: samples carry " + std::to_string(samples.patch())
                                + "-pixel patches, network expects " + std::to_string(patch));
    if (samples.k() != modalities.size())
        throw PreconditionError("train: samples carry " + std::to_string(samples.k())
                                + " channels for " + std::to_string(modalities.size())
                                + " modalities");
    for (int y : samples.labels)
        if (y != 0 && y != 1)
            throw PreconditionError("train: label " + std::to_string(y) + " outside {0,1}");

    TrainedNetwork net = assemble_network(s, modalities, cfg, patch);
    std::vector<std::size_t> all(modalities.size());
    std::iota(all.begin(), all.end(), 0);

    if (s == FusionScheme::Type3) {
        net.history.resize(modalities.size());
        for (std::size_t m = 0; m < modalities.size(); ++m)
            train_unit(net, {m}, "single:" + modalities[m], samples, cfg, m, net.history[m]);
    } else {
        net.history.resize(1);
        std::string tag = s == FusionScheme::Single ? "single:" + modalities[0]
                                                    : scheme_name(s);
        train_unit(net, all, tag, samples, cfg, 0, net.history[0]);
    }
    return net;
}

GradCheckReport scheme_gradcheck(TrainedNetwork& net, const Tensor& batch,
                                 const std::vector<int>& labels, double step, double tol,
                                 std::size_t max_checks, std::uint64_t subsample_seed) {
    if (net.scheme == FusionScheme::Type3)
        throw PreconditionError("gradcheck type3 members individually; no joint loss exists");
    double loss = 0.0;
    std::vector<Gradients> analytic = scheme_gradients(net, batch, labels, &loss, nullptr);

    std::vector<ParamRef> refs;
    for (std::size_t pi = 0; pi < net.parts.size(); ++pi) {
        SubNet& part = net.parts[pi];
        for (std::size_t li = 0; li < part.spec.layers.size(); ++li) {
            if (!part.spec.layers[li].has_params()) continue;
            std::string base = part.name + "/layer" + std::to_string(li) + ":"
                               + layer_kind_name(part.spec.layers[li].kind);
            refs.push_back({base + "(w)", &part.params.layers[li].w, &analytic[pi].layers[li].dw});
            refs.push_back({base + "(b)", &part.params.layers[li].b, &analytic[pi].layers[li].db});
        }
    }
    auto loss_fn = [&]() { return mean_xent(scheme_forward(net, batch, nullptr), labels); };
    return gradcheck_params(std::move(refs), loss_fn, step, tol, max_checks, subsample_seed);
}

namespace {

// Small stacks that each exercise one layer kind inside a trainable net.
NetworkSpec battery_layer_net(const std::string& kind) {
    NetworkSpec spec;
    spec.input = {8, 8, 2};
    if (kind == "dense") {
        spec.layers = {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(2),
                       LayerSpec::softmax_output()};
        return spec;
    }
    if (kind == "softmax") {
        spec.layers = {LayerSpec::dense(2), LayerSpec::softmax_output()};
        return spec;
    }
    spec.layers.push_back(LayerSpec::conv(2, 2, 3));
    if (kind == "maxpool") spec.layers.push_back(LayerSpec::maxpool());
    if (kind == "relu") spec.layers.push_back(LayerSpec::relu());
    if (kind == "sigmoid") spec.layers.push_back(LayerSpec::sigmoid());
    spec.layers.push_back(LayerSpec::dense(2));
    spec.layers.push_back(LayerSpec::softmax_output());
    return spec;
}

void battery_inputs(Pcg64& rng, Tensor& x, std::vector<int>& labels) {
    for (double& v : x.data) v = rng.gaussian();
    labels.clear();
    for (std::size_t s = 0; s < x.dim(0); ++s)
        labels.push_back(static_cast<int>(rng.bounded(2)));
}

} // namespace

std::vector<BatteryCase> gradcheck_battery(std::uint64_t base_seed, std::size_t instances,
                                           double step, double tol) {
    if (instances == 0) throw PreconditionError("gradcheck_battery: zero instances");

    std::vector<BatteryCase> out;

    for (const char* kind : {"conv", "maxpool", "relu", "sigmoid", "dense", "softmax"}) {
        BatteryCase bc{std::string("layer:") + kind, instances, 0.0, true};
        NetworkSpec spec = battery_layer_net(kind);
        for (std::size_t i = 0; i < instances; ++i) {
            std::uint64_t seed = derive_seed(base_seed, bc.name + ":" + std::to_string(i));
            ParamStore params = init_params(spec, seed);
            Pcg64 rng(derive_seed(seed, "input"));
            Tensor x({2, spec.input[0], spec.input[1], spec.input[2]});
            std::vector<int> labels;
            battery_inputs(rng, x, labels);
            GradCheckReport rep = gradcheck(spec, params, x, labels, step, tol, 8000,
                                            derive_seed(seed, "subsample"));
            bc.max_rel_err = std::max(bc.max_rel_err, rep.max_rel_err);
            bc.pass = bc.pass && rep.pass;
        }
        out.push_back(bc);
    }

    BaseConfig toy;
    toy.conv1_filters = 4;
    toy.conv2_filters = 6;
    toy.dense_width = 16;
    const std::vector<std::string> mods = {"a", "b", "c"};
    const std::pair<const char*, FusionScheme> scheme_cases[] = {
        {"scheme:single", FusionScheme::Single},
        {"scheme:type1", FusionScheme::Type1},
        {"scheme:type2", FusionScheme::Type2},
    };
    for (const auto& [name, scheme] : scheme_cases) {
        BatteryCase bc{name, instances, 0.0, true};
        std::vector<std::string> m =
            scheme == FusionScheme::Single ? std::vector<std::string>{mods[0]} : mods;
        for (std::size_t i = 0; i < instances; ++i) {
            std::uint64_t seed = derive_seed(base_seed, bc.name + ":" + std::to_string(i));
            BaseConfig cfg = toy;
            cfg.seed = seed;
            TrainedNetwork net = assemble_network(scheme, m, cfg, 8);
            Pcg64 rng(derive_seed(seed, "input"));
            Tensor x({2, 8, 8, m.size()});
            std::vector<int> labels;
            battery_inputs(rng, x, labels);
            GradCheckReport rep = scheme_gradcheck(net, x, labels, step, tol, 8000,
                                                   derive_seed(seed, "subsample"));
            bc.max_rel_err = std::max(bc.max_rel_err, rep.max_rel_err);
            bc.pass = bc.pass && rep.pass;
        }
        out.push_back(bc);
    }
    return out;
}

} // namespace fusenet
