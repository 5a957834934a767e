#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusenet/data.hpp"
#include "fusenet/network.hpp"

// The four network kinds and their training loops.
//
//   type1  - modalities stacked as input channels; the first 2x2xk conv
//            mixes them (feature-level fusion)
//   type2  - one conv tower per modality; flattened tower outputs are
//            concatenated into a shared dense classifier, trained jointly
//            end-to-end (classifier-level fusion)
//   type3  - k independent single-modality networks whose thresholded
//            predictions are combined by majority vote (decision-level)
//   single - the k=1 baseline
//
// Per-part init and shuffle streams are seeded from cfg.seed by part NAME
// (e.g. "single:t2"), so a type3 member and a single network of the same
// modality train bit-identically, and reordering the modality list cannot
// silently change any part's stream.

namespace fusenet {

enum class FusionScheme { Type1, Type2, Type3, Single };

const char* scheme_name(FusionScheme s);
FusionScheme scheme_from_name(const std::string& name);

struct BaseConfig {
    std::size_t conv1_filters = 16;
    std::size_t conv2_filters = 32;
    std::size_t dense_width = 128;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch = 64;
    std::size_t epochs = 20;
    // stop after any epoch whose running training accuracy reaches this
    // value; 0 disables
    double stop_accuracy = 0.0;
    std::uint64_t seed = 1;
};

void validate_config(const BaseConfig& cfg);

// ---- architecture builders ----

NetworkSpec build_single(const BaseConfig& cfg, std::size_t patch = 28);
NetworkSpec build_type1(std::size_t k, const BaseConfig& cfg, std::size_t patch = 28);

struct Type2Spec {
    std::vector<NetworkSpec> towers;
    NetworkSpec head;
};
Type2Spec build_type2(std::size_t k, const BaseConfig& cfg, std::size_t patch = 28);

std::vector<NetworkSpec> build_type3(std::size_t k, const BaseConfig& cfg, std::size_t patch = 28);

// Total trainable parameters for a scheme at this config.
std::size_t scheme_param_count(FusionScheme s, std::size_t k, const BaseConfig& cfg,
                               std::size_t patch = 28);

// ---- assembled networks ----

struct SubNet {
    std::string name; // "net", "single:<mod>", "tower:<mod>", "head"
    NetworkSpec spec;
    ParamStore params;
};

struct EpochLog {
    double loss;
    double accuracy; // running accuracy over the epoch's forward passes
};

struct TrainedNetwork {
    FusionScheme scheme;
    std::vector<std::string> modalities; // channel order of the run
    std::size_t patch = 28;
    std::vector<SubNet> parts; // type1/single: [net]; type2: towers..., head; type3: members
    // one log per independently trained unit (type3: one per member)
    std::vector<std::vector<EpochLog>> history;
};

// Freshly initialized, untrained network for the scheme.  Single expects
// exactly one modality; fusion schemes at least two.
TrainedNetwork assemble_network(FusionScheme s, const std::vector<std::string>& modalities,
                                const BaseConfig& cfg, std::size_t patch = 28);

// Class probabilities {B,2} for a {B,patch,patch,k} batch whose channels
// follow net.modalities.  Not defined for type3 (its members predict
// separately and vote); traces, when given, receive one entry per part.
Tensor scheme_forward(const TrainedNetwork& net, const Tensor& batch,
                      std::vector<ForwardTrace>* traces = nullptr);

// Mini-batch SGD over the sample set.  Samples' channel order must match
// `modalities`.  Deterministic per cfg.seed.
TrainedNetwork train_scheme(FusionScheme s, const std::vector<std::string>& modalities,
                            const SampleSet& samples, const BaseConfig& cfg,
                            std::size_t patch = 28);

// Finite-difference check of a whole assembled scheme (type1/type2/single)
// on one batch.  Entries are named "<part>/<layer>".
GradCheckReport scheme_gradcheck(TrainedNetwork& net, const Tensor& batch,
                                 const std::vector<int>& labels, double step = 1e-5,
                                 double tol = 1e-6, std::size_t max_checks = 2000,
                                 std::uint64_t subsample_seed = 1);

struct BatteryCase {
    std::string name;
    std::size_t instances = 0;
    double max_rel_err = 0.0;
    bool pass = true;
};

// Repeated gradient checks over small networks exercising every layer kind
// and every trainable scheme, `instances` random draws each.  Every
// parameter of every draw is checked (no subsampling at these sizes).
std::vector<BatteryCase> gradcheck_battery(std::uint64_t base_seed, std::size_t instances,
                                           double step = 1e-5, double tol = 1e-6);

} // namespace fusenet
