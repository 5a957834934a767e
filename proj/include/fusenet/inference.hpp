#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusenet/data.hpp"
#include "fusenet/fusion.hpp"

// Whole-image prediction, vote fusion, accuracy statistics, and the
// cross-validation driver.

namespace fusenet {

struct Heatmap {
    std::string subject_id;
    std::size_t h = 0, w = 0;
    std::vector<double> v; // positive-class probability per pixel

    Heatmap() = default;
    Heatmap(std::string id, std::size_t h_, std::size_t w_)
        : subject_id(std::move(id)), h(h_), w(w_), v(h_ * w_, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

struct Labelmap {
    std::string subject_id;
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    Labelmap() = default;
    Labelmap(std::string id, std::size_t h_, std::size_t w_)
        : subject_id(std::move(id)), h(h_), w(w_), v(h_ * w_, 0) {}
    std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

// Positive-class probability at every pixel, each pixel classified from
// its own mirror-padded patch.  The volume must already be normalized
// (normalize_volume); its modalities must cover the network's.  Patches
// are evaluated in row-major chunks of `chunk` for batched forwards.
// Type3 networks have no joint forward: predict members, then vote.
Heatmap predict_heatmap(const TrainedNetwork& net, const SubjectVolume& vol,
                        std::size_t chunk = 512);

// Same, for one member network of a type3 ensemble.
Heatmap predict_member_heatmap(const TrainedNetwork& net, std::size_t member,
                               const SubjectVolume& vol, std::size_t chunk = 512);

// label = 1 iff probability > tau (strictly); exactly tau maps to 0.
Labelmap threshold(const Heatmap& heat, double tau = 0.5);

// Per-pixel strict-majority label over k members.  An exact tie (even k)
// resolves to 1 iff the mean member probability at that pixel exceeds 0.5.
Labelmap majority_vote(const std::vector<Labelmap>& labelmaps,
                       const std::vector<Heatmap>& heatmaps);

// Fraction of pixels where the labelmap agrees with the mask.
double pixel_accuracy(const Labelmap& lab, const Mask& mask);

struct FoldMetrics {
    std::vector<double> accuracies; // as given
    double median = 0, q1 = 0, q3 = 0, min = 0, max = 0;
};

// Median/quartiles by inclusive linear interpolation between order
// statistics; min/max exact.
FoldMetrics fold_statistics(std::vector<double> accuracies);

// ---- cross-validation ----

struct SubjectResult {
    std::size_t fold;
    std::size_t subject; // cohort index
    double accuracy;
};

struct CrossvalRow {
    std::string scheme;                  // scheme token
    std::vector<std::string> modalities; // this row's combination
    std::vector<SubjectResult> subjects; // fold-major, subject order within fold
    FoldMetrics stats;                   // over all subjects
};

struct FoldAudit {
    std::vector<std::size_t> train_ids, test_ids;
    std::vector<std::size_t> sampled_subjects; // subjects the train patches came from
};

struct CrossvalResult {
    FoldPlan plan;
    std::vector<CrossvalRow> rows;
    std::vector<FoldAudit> audits;
    std::vector<std::string> subject_ids; // cohort order
};

// Optional outputs produced mid-run (model/prediction persistence).
struct CrossvalSinks {
    std::function<void(std::size_t fold, const TrainedNetwork&)> model;
    std::function<void(const std::string& label, std::size_t fold, const SubjectVolume&,
                       const Heatmap&, const Labelmap&)>
        maps;
};

// For each fold: balanced-sample the training subjects, train every
// requested scheme, evaluate per test subject.  The scheme token "single"
// expands to one row per modality; fusion tokens use the full modality
// list.  Single-modality networks are trained once per fold and shared
// with the type3 ensemble (identical seeds make the members bit-identical
// to standalone training).  Fold hygiene is audited; results are
// deterministic per cfg.seed.
CrossvalResult run_crossval(const std::vector<SubjectVolume>& cohort,
                            const std::vector<std::string>& schemes,
                            const std::vector<std::string>& modalities, const BaseConfig& cfg,
                            std::size_t folds, std::size_t n_per_class,
                            const CrossvalSinks& sinks = {});

} // namespace fusenet
