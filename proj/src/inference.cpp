#include "fusenet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fusenet/errors.hpp"
#include "fusenet/network.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

namespace {

// Chunked whole-image forward over one sub-network (spec+params) reading
// the listed planes of the volume.
Heatmap sweep_network(const NetworkSpec& spec, const ParamStore& params,
                      const SubjectVolume& vol, const std::vector<std::size_t>& planes,
                      std::size_t patch, std::size_t chunk) {
    if (chunk == 0) throw PreconditionError("predict: chunk size must be positive");
    Heatmap heat(vol.id, vol.h, vol.w);
    const std::size_t total = vol.h * vol.w;
    const std::size_t k = planes.size();
    const std::size_t stride = patch * patch * k;

    std::size_t done = 0;
    while (done < total) {
        const std::size_t n = std::min(chunk, total - done);
        Tensor batch({n, patch, patch, k});
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pix = done + i;
            extract_patch_into(vol, pix / vol.w, pix % vol.w, patch, planes,
                               batch.data.data() + i * stride);
        }
        Tensor probs = run_forward(spec, params, batch, nullptr);
        for (std::size_t i = 0; i < n; ++i) heat.v[done + i] = probs.data[2 * i + 1];
        done += n;
    }
    return heat;
}

std::vector<std::size_t> plane_indices(const TrainedNetwork& net, const SubjectVolume& vol) {
    std::vector<std::size_t> planes;
    planes.reserve(net.modalities.size());
    for (const std::string& m : net.modalities) planes.push_back(vol.modality_index(m));
    return planes;
}

} // namespace

Heatmap predict_heatmap(const TrainedNetwork& net, const SubjectVolume& vol, std::size_t chunk) {
    if (net.scheme == FusionScheme::Type3)
        throw PreconditionError(
            "predict: type3 has no joint forward; predict each member and majority-vote");
    validate_volume(vol);
    const std::vector<std::size_t> planes = plane_indices(net, vol);

    if (net.scheme == FusionScheme::Type2) {
        // the towers see single planes; reuse the scheme forward on
        // full-stack chunks
        Heatmap heat(vol.id, vol.h, vol.w);
        const std::size_t total = vol.h * vol.w;
        const std::size_t k = planes.size();
        const std::size_t stride = net.patch * net.patch * k;
        std::size_t done = 0;
        while (done < total) {
            const std::size_t n = std::min(chunk, total - done);
            Tensor batch({n, net.patch, net.patch, k});
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t pix = done + i;
                extract_patch_into(vol, pix / vol.w, pix % vol.w, net.patch, planes,
                                   batch.data.data() + i * stride);
            }
            Tensor probs = scheme_forward(net, batch, nullptr);
            for (std::size_t i = 0; i < n; ++i) heat.v[done + i] = probs.data[2 * i + 1];
            done += n;
        }
        return heat;
    }
    return sweep_network(net.parts[0].spec, net.parts[0].params, vol, planes, net.patch, chunk);
}

Heatmap predict_member_heatmap(const TrainedNetwork& net, std::size_t member,
                               const SubjectVolume& vol, std::size_t chunk) {
    if (net.scheme != FusionScheme::Type3)
        throw PreconditionError("member prediction only applies to type3 networks");
    if (member >= net.parts.size())
        throw PreconditionError("member " + std::to_string(member) + " outside ensemble of "
                                + std::to_string(net.parts.size()));
    validate_volume(vol);
    std::vector<std::size_t> plane{vol.modality_index(net.modalities[member])};
    return sweep_network(net.parts[member].spec, net.parts[member].params, vol, plane, net.patch,
                         chunk);
}

Labelmap threshold(const Heatmap& heat, double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw PreconditionError("threshold: tau must lie in (0,1), got " + std::to_string(tau));
    Labelmap lab(heat.subject_id, heat.h, heat.w);
    for (std::size_t i = 0; i < heat.v.size(); ++i) lab.v[i] = heat.v[i] > tau ? 1 : 0;
    return lab;
}

Labelmap majority_vote(const std::vector<Labelmap>& labelmaps,
                       const std::vector<Heatmap>& heatmaps) {
    const std::size_t k = labelmaps.size();
    if (k < 2)
        throw PreconditionError("majority_vote: need at least 2 members, got "
                                + std::to_string(k));
    if (heatmaps.size() != k)
        throw PreconditionError("majority_vote: " + std::to_string(heatmaps.size())
                                + " heatmaps for " + std::to_string(k) + " labelmaps");
    const std::size_t h = labelmaps[0].h, w = labelmaps[0].w;
    for (const Labelmap& l : labelmaps)
        if (l.h != h || l.w != w)
            throw PreconditionError("majority_vote: labelmap dimensions disagree ("
                                    + std::to_string(l.h) + "x" + std::to_string(l.w) + " vs "
                                    + std::to_string(h) + "x" + std::to_string(w) + ")");
    for (const Heatmap& m : heatmaps)
        if (m.h != h || m.w != w)
            throw PreconditionError("majority_vote: heatmap dimensions disagree ("
                                    + std::to_string(m.h) + "x" + std::to_string(m.w) + " vs "
                                    + std::to_string(h) + "x" + std::to_string(w) + ")");

    Labelmap out(labelmaps[0].subject_id, h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
        std::size_t ones = 0;
        for (const Labelmap& l : labelmaps) ones += l.v[i];
        if (2 * ones > k) {
            out.v[i] = 1;
        } else if (2 * ones < k) {
            out.v[i] = 0;
        } else {
            double mean = 0.0;
            for (const Heatmap& m : heatmaps) mean += m.v[i];
            mean /= static_cast<double>(k);
            out.v[i] = mean > 0.5 ? 1 : 0;
        }
    }
    return out;
}

double pixel_accuracy(const Labelmap& lab, const Mask& mask) {
    if (lab.h != mask.h || lab.w != mask.w)
        throw PreconditionError("pixel_accuracy: labelmap " + std::to_string(lab.h) + "x"
                                + std::to_string(lab.w) + " vs mask " + std::to_string(mask.h)
                                + "x" + std::to_string(mask.w));
    if (lab.v.empty()) throw PreconditionError("pixel_accuracy: empty maps");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < lab.v.size(); ++i)
        if ((lab.v[i] != 0) == (mask.v[i] != 0)) ++agree;
    return static_cast<double>(agree) / static_cast<double>(lab.v.size());
}

namespace {

double quantile_sorted(const std::vector<double>& x, double p) {
    const std::size_t n = x.size();
    double h = p * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    double frac = h - static_cast<double>(lo);
    if (lo + 1 >= n) return x[n - 1];
    return x[lo] + frac * (x[lo + 1] - x[lo]);
}

} // namespace

FoldMetrics fold_statistics(std::vector<double> accuracies) {
    if (accuracies.empty()) throw PreconditionError("fold_statistics: empty accuracy list");
    FoldMetrics fm;
    fm.accuracies = accuracies;
    std::sort(accuracies.begin(), accuracies.end());
    fm.min = accuracies.front();
    fm.max = accuracies.back();
    fm.q1 = quantile_sorted(accuracies, 0.25);
    fm.median = quantile_sorted(accuracies, 0.5);
    fm.q3 = quantile_sorted(accuracies, 0.75);
    return fm;
}

namespace {

struct RowPlan {
    std::string scheme_token;
    FusionScheme scheme;
    std::vector<std::string> modalities;
};

std::vector<RowPlan> expand_rows(const std::vector<std::string>& schemes,
                                 const std::vector<std::string>& modalities) {
    std::vector<RowPlan> rows;
    for (const std::string& tok : schemes) {
        FusionScheme s = scheme_from_name(tok);
        if (s == FusionScheme::Single) {
            for (const std::string& m : modalities) rows.push_back({tok, s, {m}});
        } else {
            rows.push_back({tok, s, modalities});
        }
    }
    return rows;
}

} // namespace

CrossvalResult run_crossval(const std::vector<SubjectVolume>& cohort,
                            const std::vector<std::string>& schemes,
                            const std::vector<std::string>& modalities, const BaseConfig& cfg,
                            std::size_t folds, std::size_t n_per_class,
                            const CrossvalSinks& sinks) {
    if (cohort.empty()) throw PreconditionError("crossval: empty cohort");
    if (schemes.empty()) throw PreconditionError("crossval: no schemes requested");
    if (modalities.empty()) throw PreconditionError("crossval: no modalities requested");
    for (const SubjectVolume& v : cohort) validate_volume(v);

    const std::size_t patch = 28;
    std::vector<RowPlan> row_plans = expand_rows(schemes, modalities);

    bool want_singles = false, want_type3 = false, want_type1 = false, want_type2 = false;
    for (const RowPlan& rp : row_plans) {
        switch (rp.scheme) {
        case FusionScheme::Single: want_singles = true; break;
        case FusionScheme::Type3: want_type3 = true; break;
        case FusionScheme::Type1: want_type1 = true; break;
        case FusionScheme::Type2: want_type2 = true; break;
        }
    }

    std::vector<SubjectVolume> normed = cohort;
    for (SubjectVolume& v : normed) normalize_volume(v);

    CrossvalResult result;
    result.subject_ids.reserve(cohort.size());
    for (const SubjectVolume& v : cohort) result.subject_ids.push_back(v.id);
    result.plan = make_folds(cohort.size(), folds, derive_seed(cfg.seed, "folds"));
    result.rows.reserve(row_plans.size());
    for (const RowPlan& rp : row_plans) result.rows.push_back({rp.scheme_token, rp.modalities, {}, {}});
    result.audits.resize(folds);

    for (std::size_t fold = 0; fold < folds; ++fold) {
        const std::vector<std::size_t>& test_ids = result.plan.test_subjects[fold];
        std::vector<std::size_t> train_ids = train_subjects(result.plan, fold, cohort.size());

        std::vector<PatchRef> refs = balanced_sample(
            normed, train_ids, n_per_class,
            derive_seed(cfg.seed, "sample:fold" + std::to_string(fold)));

        // fold hygiene: training patches must come from training subjects only
        std::set<std::size_t> test_set(test_ids.begin(), test_ids.end());
        std::set<std::size_t> sampled;
        for (const PatchRef& r : refs) {
            if (test_set.count(r.subject))
                throw PreconditionError("crossval: fold " + std::to_string(fold)
                                        + " drew a training patch from test subject "
                                        + std::to_string(r.subject));
            sampled.insert(r.subject);
        }
        result.audits[fold] = {train_ids, test_ids,
                               std::vector<std::size_t>(sampled.begin(), sampled.end())};

        BaseConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, "fold" + std::to_string(fold));

        // one single-modality network per modality, shared by the single
        // rows and the type3 ensemble
        std::vector<TrainedNetwork> singles;
        if (want_singles || want_type3) {
            for (const std::string& m : modalities) {
                SampleSet samples_m = materialize_samples(normed, refs, {m}, patch);
                singles.push_back(
                    train_scheme(FusionScheme::Single, {m}, samples_m, fold_cfg, patch));
            }
        }
        TrainedNetwork type3;
        if (want_type3) {
            type3.scheme = FusionScheme::Type3;
            type3.modalities = modalities;
            type3.patch = patch;
            for (TrainedNetwork& s : singles) {
                type3.parts.push_back(s.parts[0]);
                type3.history.push_back(s.history[0]);
            }
        }
        TrainedNetwork type1, type2;
        if (want_type1 || want_type2) {
            SampleSet samples_full = materialize_samples(normed, refs, modalities, patch);
            if (want_type1)
                type1 = train_scheme(FusionScheme::Type1, modalities, samples_full, fold_cfg,
                                     patch);
            if (want_type2)
                type2 = train_scheme(FusionScheme::Type2, modalities, samples_full, fold_cfg,
                                     patch);
        }

        if (sinks.model) {
            for (const TrainedNetwork& s : singles) sinks.model(fold, s);
            if (want_type3) sinks.model(fold, type3);
            if (want_type1) sinks.model(fold, type1);
            if (want_type2) sinks.model(fold, type2);
        }

        for (std::size_t subject : test_ids) {
            const SubjectVolume& vol = normed[subject];

            std::vector<Heatmap> single_heat;
            std::vector<Labelmap> single_lab;
            if (want_singles || want_type3) {
                for (TrainedNetwork& s : singles) {
                    single_heat.push_back(predict_heatmap(s, vol));
                    single_lab.push_back(threshold(single_heat.back()));
                }
            }

            for (std::size_t ri = 0; ri < row_plans.size(); ++ri) {
                const RowPlan& rp = row_plans[ri];
                Heatmap heat;
                Labelmap lab;
                switch (rp.scheme) {
                case FusionScheme::Single: {
                    std::size_t m = 0;
                    while (modalities[m] != rp.modalities[0]) ++m;
                    heat = single_heat[m];
                    lab = single_lab[m];
                    break;
                }
                case FusionScheme::Type3: {
                    lab = majority_vote(single_lab, single_heat);
                    // mean member probability, exported for map sinks
                    heat = Heatmap(vol.id, vol.h, vol.w);
                    for (const Heatmap& hm : single_heat)
                        for (std::size_t i = 0; i < heat.v.size(); ++i) heat.v[i] += hm.v[i];
                    for (double& p : heat.v) p /= static_cast<double>(single_heat.size());
                    break;
                }
                case FusionScheme::Type1:
                    heat = predict_heatmap(type1, vol);
                    lab = threshold(heat);
                    break;
                case FusionScheme::Type2:
                    heat = predict_heatmap(type2, vol);
                    lab = threshold(heat);
                    break;
                }
                double acc = pixel_accuracy(lab, cohort[subject].mask);
                result.rows[ri].subjects.push_back({fold, subject, acc});
                std::string label = rp.scheme == FusionScheme::Single
                                        ? "single-" + rp.modalities[0]
                                        : rp.scheme_token;
                if (sinks.maps) sinks.maps(label, fold, cohort[subject], heat, lab);
            }
        }
    }

    for (CrossvalRow& row : result.rows) {
        std::vector<double> accs;
        accs.reserve(row.subjects.size());
        for (const SubjectResult& sr : row.subjects) accs.push_back(sr.accuracy);
        row.stats = fold_statistics(accs);
    }
    return result;
}

} // namespace fusenet
