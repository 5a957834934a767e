#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusenet/tensor.hpp"

// Subject data model and the patch pipeline: per-modality normalization,
// mirror-padded patch extraction, center-pixel labeling, balanced
// sampling, and subject-level fold assignment.

namespace fusenet {

struct Image {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    Image() = default;
    Image(std::size_t h_, std::size_t w_) : h(h_), w(w_), v(h_ * w_, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

struct Mask {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    Mask() = default;
    Mask(std::size_t h_, std::size_t w_) : h(h_), w(w_), v(h_ * w_, 0) {}
    std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

// One subject: co-registered modality planes of equal size plus the
// ground-truth mask.  Modalities are kept sorted lexicographically by
// name; that order defines plane/channel order everywhere downstream.
struct SubjectVolume {
    std::string id;
    std::size_t h = 0, w = 0;
    std::vector<std::string> modalities;
    std::vector<Image> planes;
    Mask mask;

    std::size_t modality_index(const std::string& name) const;
};

// Throws PreconditionError if planes/mask dimensions disagree, the
// modality list is unsorted or has duplicates, or counts mismatch.
void validate_volume(const SubjectVolume& v);

// Z-score with population standard deviation, per plane.  An all-constant
// plane becomes all zeros.
Image normalize_plane(const Image& img);
void normalize_volume(SubjectVolume& v);

// Reflects an out-of-range index back into [0,n) about the edges
// (-1 maps to 0, n maps to n-1), folding as often as needed.
std::size_t mirror_index(long long i, std::size_t n);

// Square patch of odd-free side `patch` centered at pixel (r,c): rows
// r-patch/2 .. r+patch/2-1 for even sides.  Out-of-range pixels are
// mirrored.  `planes` selects and orders the modality channels; dst must
// hold patch*patch*planes.size() doubles laid out {row, col, channel}.
void extract_patch_into(const SubjectVolume& v, std::size_t r, std::size_t c, std::size_t patch,
                        const std::vector<std::size_t>& planes, double* dst);

// All planes in modality order, as a {patch,patch,k} tensor.
Tensor extract_patch(const SubjectVolume& v, std::size_t r, std::size_t c, std::size_t patch);

// Center-pixel class: 1 inside the mask, 0 outside.
int patch_label(const Mask& mask, std::size_t r, std::size_t c);

// Every pixel is a patch center, so a subject contributes h*w locations.
std::size_t patch_locations(const SubjectVolume& v);

struct PatchRef {
    std::size_t subject; // index into the cohort vector
    std::size_t r, c;
    int label;
};

// n_per_class patches of each class drawn without replacement from the
// listed subjects, seeded.  Returns positives then negatives; throws if a
// class has fewer than n_per_class candidates, naming the class.
std::vector<PatchRef> balanced_sample(const std::vector<SubjectVolume>& cohort,
                                      const std::vector<std::size_t>& subject_ids,
                                      std::size_t n_per_class, std::uint64_t seed);

// Patches materialized for training: one {N,patch,patch,k} block with the
// channel order given by the modality list passed at materialization.
struct SampleSet {
    Tensor patches;
    std::vector<int> labels;

    std::size_t count() const { return labels.size(); }
    std::size_t patch() const { return patches.rank() == 4 ? patches.dim(1) : 0; }
    std::size_t k() const { return patches.rank() == 4 ? patches.dim(3) : 0; }
};

// Extracts every referenced patch from (already normalized) volumes.
// `modalities` selects and orders the channels; every listed subject must
// carry all of them.
SampleSet materialize_samples(const std::vector<SubjectVolume>& cohort,
                              const std::vector<PatchRef>& refs,
                              const std::vector<std::string>& modalities, std::size_t patch);

// Subject-level cross-validation plan: a seeded shuffle dealt round-robin
// into n_folds test groups with sizes differing by at most one.
struct FoldPlan {
    std::vector<std::vector<std::size_t>> test_subjects;
};

FoldPlan make_folds(std::size_t n_subjects, std::size_t n_folds, std::uint64_t seed);

// Complement of a fold's test group.
std::vector<std::size_t> train_subjects(const FoldPlan& plan, std::size_t fold,
                                        std::size_t n_subjects);

} // namespace fusenet
