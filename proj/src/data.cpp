#include "fusenet/data.hpp"

#include <algorithm>
#include <cmath>

#include "fusenet/errors.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

std::size_t SubjectVolume::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i)
        if (modalities[i] == name) return i;
    throw PreconditionError("subject " + id + ": no modality named '" + name + "'");
}

void validate_volume(const SubjectVolume& v) {
    if (v.h == 0 || v.w == 0)
        throw PreconditionError("subject " + v.id + ": empty dimensions " + std::to_string(v.h)
                                + "x" + std::to_string(v.w));
    if (v.modalities.empty()) throw PreconditionError("subject " + v.id + ": no modalities");
    if (v.modalities.size() != v.planes.size())
        throw PreconditionError("subject " + v.id + ": " + std::to_string(v.modalities.size())
                                + " modality names for " + std::to_string(v.planes.size())
                                + " planes");
    for (std::size_t i = 0; i + 1 < v.modalities.size(); ++i) {
        if (v.modalities[i] == v.modalities[i + 1])
            throw PreconditionError("subject " + v.id + ": duplicate modality '" + v.modalities[i]
                                    + "'");
        if (v.modalities[i] > v.modalities[i + 1])
            throw PreconditionError("subject " + v.id + ": modalities not in lexicographic order ('"
                                    + v.modalities[i] + "' before '" + v.modalities[i + 1] + "')");
    }
    for (std::size_t i = 0; i < v.planes.size(); ++i)
        if (v.planes[i].h != v.h || v.planes[i].w != v.w)
            throw PreconditionError("subject " + v.id + ": plane '" + v.modalities[i] + "' is "
                                    + std::to_string(v.planes[i].h) + "x"
                                    + std::to_string(v.planes[i].w) + ", volume is "
                                    + std::to_string(v.h) + "x" + std::to_string(v.w));
    if (v.mask.h != v.h || v.mask.w != v.w)
        throw PreconditionError("subject " + v.id + ": mask is " + std::to_string(v.mask.h) + "x"
                                + std::to_string(v.mask.w) + ", volume is " + std::to_string(v.h)
                                + "x" + std::to_string(v.w));
}

Image normalize_plane(const Image& img) {
    Image out(img.h, img.w);
    const std::size_t n = img.v.size();
    if (n == 0) return out;
    double mean = 0.0;
    for (double x : img.v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : img.v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) return out; // constant plane carries no signal
    double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out.v[i] = (img.v[i] - mean) * inv;
    return out;
}

void normalize_volume(SubjectVolume& v) {
    for (Image& p : v.planes) p = normalize_plane(p);
}

std::size_t mirror_index(long long i, std::size_t n) {
    const long long nn = static_cast<long long>(n);
    while (i < 0 || i >= nn) {
        if (i < 0)
            i = -1 - i;
        else
            i = 2 * nn - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

void extract_patch_into(const SubjectVolume& v, std::size_t r, std::size_t c, std::size_t patch,
                        const std::vector<std::size_t>& planes, double* dst) {
    if (r >= v.h || c >= v.w)
        throw PreconditionError("patch center (" + std::to_string(r) + "," + std::to_string(c)
                                + ") outside subject " + v.id + " of " + std::to_string(v.h) + "x"
                                + std::to_string(v.w));
    if (patch == 0) throw PreconditionError("patch size must be positive");
    const long long half = static_cast<long long>(patch) / 2;
    const std::size_t k = planes.size();
    for (std::size_t pi = 0; pi < k; ++pi)
        if (planes[pi] >= v.planes.size())
            throw PreconditionError("plane index " + std::to_string(planes[pi])
                                    + " outside subject " + v.id + " with "
                                    + std::to_string(v.planes.size()) + " planes");

    for (std::size_t i = 0; i < patch; ++i) {
        std::size_t sr = mirror_index(static_cast<long long>(r) - half + static_cast<long long>(i),
                                      v.h);
        for (std::size_t j = 0; j < patch; ++j) {
            std::size_t sc = mirror_index(static_cast<long long>(c) - half
                                              + static_cast<long long>(j),
                                          v.w);
            double* cell = dst + (i * patch + j) * k;
            for (std::size_t pi = 0; pi < k; ++pi) cell[pi] = v.planes[planes[pi]].at(sr, sc);
        }
    }
}

Tensor extract_patch(const SubjectVolume& v, std::size_t r, std::size_t c, std::size_t patch) {
    std::vector<std::size_t> planes(v.planes.size());
    for (std::size_t i = 0; i < planes.size(); ++i) planes[i] = i;
    Tensor out({patch, patch, planes.size()});
    extract_patch_into(v, r, c, patch, planes, out.data.data());
    return out;
}

int patch_label(const Mask& mask, std::size_t r, std::size_t c) {
    if (r >= mask.h || c >= mask.w)
        throw PreconditionError("label position (" + std::to_string(r) + "," + std::to_string(c)
                                + ") outside mask of " + std::to_string(mask.h) + "x"
                                + std::to_string(mask.w));
    return mask.at(r, c) ? 1 : 0;
}

std::size_t patch_locations(const SubjectVolume& v) { return v.h * v.w; }

std::vector<PatchRef> balanced_sample(const std::vector<SubjectVolume>& cohort,
                                      const std::vector<std::size_t>& subject_ids,
                                      std::size_t n_per_class, std::uint64_t seed) {
    if (n_per_class == 0) throw PreconditionError("balanced_sample: n_per_class must be positive");
    std::vector<PatchRef> pos, neg;
    for (std::size_t sid : subject_ids) {
        if (sid >= cohort.size())
            throw PreconditionError("balanced_sample: subject index " + std::to_string(sid)
                                    + " outside cohort of " + std::to_string(cohort.size()));
        const SubjectVolume& v = cohort[sid];
        for (std::size_t r = 0; r < v.h; ++r)
            for (std::size_t c = 0; c < v.w; ++c) {
                int y = v.mask.at(r, c) ? 1 : 0;
                (y ? pos : neg).push_back({sid, r, c, y});
            }
    }
    if (pos.size() < n_per_class)
        throw PreconditionError("balanced_sample: positive class has " + std::to_string(pos.size())
                                + " candidates, need " + std::to_string(n_per_class));
    if (neg.size() < n_per_class)
        throw PreconditionError("balanced_sample: negative class has " + std::to_string(neg.size())
                                + " candidates, need " + std::to_string(n_per_class));

    Pcg64 rng(seed);
    std::vector<PatchRef> out;
    out.reserve(2 * n_per_class);
    for (std::size_t idx : rng.sample_indices(pos.size(), n_per_class)) out.push_back(pos[idx]);
    for (std::size_t idx : rng.sample_indices(neg.size(), n_per_class)) out.push_back(neg[idx]);
    return out;
}

SampleSet materialize_samples(const std::vector<SubjectVolume>& cohort,
                              const std::vector<PatchRef>& refs,
                              const std::vector<std::string>& modalities, std::size_t patch) {
    if (modalities.empty()) throw PreconditionError("materialize_samples: no modalities");
    if (refs.empty()) throw PreconditionError("materialize_samples: empty sample list");
    const std::size_t k = modalities.size();

    SampleSet set;
    set.patches = Tensor({refs.size(), patch, patch, k});
    set.labels.resize(refs.size());
    const std::size_t stride = patch * patch * k;
    std::vector<std::size_t> planes(k);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const PatchRef& ref = refs[i];
        if (ref.subject >= cohort.size())
            throw PreconditionError("materialize_samples: subject index "
                                    + std::to_string(ref.subject) + " outside cohort of "
                                    + std::to_string(cohort.size()));
        const SubjectVolume& v = cohort[ref.subject];
        for (std::size_t m = 0; m < k; ++m) planes[m] = v.modality_index(modalities[m]);
        extract_patch_into(v, ref.r, ref.c, patch, planes, set.patches.data.data() + i * stride);
        set.labels[i] = ref.label;
    }
    return set;
}

FoldPlan make_folds(std::size_t n_subjects, std::size_t n_folds, std::uint64_t seed) {
    if (n_folds < 2)
        throw PreconditionError("make_folds: need at least 2 folds, got " + std::to_string(n_folds));
    if (n_folds > n_subjects)
        throw PreconditionError("make_folds: " + std::to_string(n_folds) + " folds for "
                                + std::to_string(n_subjects) + " subjects");
    std::vector<std::size_t> order(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) order[i] = i;
    Pcg64 rng(seed);
    rng.shuffle(order);

    FoldPlan plan;
    plan.test_subjects.resize(n_folds);
    for (std::size_t i = 0; i < n_subjects; ++i)
        plan.test_subjects[i % n_folds].push_back(order[i]);
    for (auto& fold : plan.test_subjects) std::sort(fold.begin(), fold.end());
    return plan;
}

std::vector<std::size_t> train_subjects(const FoldPlan& plan, std::size_t fold,
                                        std::size_t n_subjects) {
    if (fold >= plan.test_subjects.size())
        throw PreconditionError("train_subjects: fold " + std::to_string(fold) + " outside plan of "
                                + std::to_string(plan.test_subjects.size()));
    std::vector<bool> is_test(n_subjects, false);
    for (std::size_t s : plan.test_subjects[fold]) is_test[s] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_subjects; ++i)
        if (!is_test[i]) out.push_back(i);
    return out;
}

} // namespace fusenet
