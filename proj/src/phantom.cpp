#include "fusenet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fusenet/errors.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

Corruption corruption_from_name(const std::string& name) {
    if (name == "none") return Corruption::None;
    if (name == "invert") return Corruption::Invert;
    if (name == "noise_only") return Corruption::NoiseOnly;
    throw PreconditionError("unknown corruption mode '" + name
                            + "' (expected none|invert|noise_only)");
}

const char* corruption_name(Corruption c) {
    switch (c) {
    case Corruption::None: return "none";
    case Corruption::Invert: return "invert";
    case Corruption::NoiseOnly: return "noise_only";
    }
    return "?";
}

ModalityContrast default_contrast(const std::string& modality) {
    if (modality == "pet") return {0.10, 0.90, 0.10, 0.08};
    if (modality == "ct") return {0.45, 0.55, 0.55, 0.15};
    if (modality == "t1") return {0.30, 0.60, 0.60, 0.10};
    if (modality == "t2") return {0.20, 0.80, 0.80, 0.05};
    return {};
}

PhantomConfig make_phantom_config(const std::vector<std::string>& modalities) {
    PhantomConfig cfg;
    for (const std::string& m : modalities) cfg.contrasts.emplace_back(m, default_contrast(m));
    std::sort(cfg.contrasts.begin(), cfg.contrasts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return cfg;
}

void validate_phantom(const PhantomConfig& cfg) {
    if (cfg.cohort < 1) throw PreconditionError("phantom: cohort size must be >= 1");
    if (cfg.contrasts.empty()) throw PreconditionError("phantom: no modalities configured");
    for (std::size_t i = 0; i + 1 < cfg.contrasts.size(); ++i)
        if (cfg.contrasts[i].first >= cfg.contrasts[i + 1].first)
            throw PreconditionError("phantom: modality contrasts must be sorted and unique");
    if (cfg.axis_min < 1.0 || cfg.axis_min > cfg.axis_max)
        throw PreconditionError("phantom: semi-axis range [" + std::to_string(cfg.axis_min) + ", "
                                + std::to_string(cfg.axis_max) + "] is invalid");
    const double margin = 14.0;
    const double need = 2.0 * (cfg.axis_max + margin) + 1.0;
    if (static_cast<double>(cfg.height) < need || static_cast<double>(cfg.width) < need)
        throw PreconditionError("phantom: " + std::to_string(cfg.height) + "x"
                                + std::to_string(cfg.width) + " image cannot hold a semi-axis of "
                                + std::to_string(cfg.axis_max) + " with a 14-pixel margin");
    if (cfg.core_fraction < 0.0 || cfg.core_fraction >= 1.0)
        throw PreconditionError("phantom: core fraction must lie in [0,1)");
    for (const auto& [name, con] : cfg.contrasts)
        if (con.sigma < 0.0)
            throw PreconditionError("phantom: modality '" + name + "' has negative noise sigma");
    for (const auto& [name, mode] : cfg.corruption) {
        bool known = false;
        for (const auto& [cname, con] : cfg.contrasts) known = known || cname == name;
        (void)mode;
        if (!known)
            throw PreconditionError("phantom: corruption names unknown modality '" + name + "'");
    }
}

namespace {

Corruption corruption_of(const PhantomConfig& cfg, const std::string& modality) {
    for (const auto& [name, mode] : cfg.corruption)
        if (name == modality) return mode;
    return Corruption::None;
}

} // namespace

SubjectVolume generate_subject(const PhantomConfig& cfg, std::size_t index) {
    validate_phantom(cfg);
    const std::uint64_t subject_seed = cfg.seed ^ static_cast<std::uint64_t>(index);

    Pcg64 geo(derive_seed(subject_seed, "geometry"));
    const double a = geo.uniform(cfg.axis_min, cfg.axis_max);
    const double b = geo.uniform(cfg.axis_min, cfg.axis_max);
    const double theta = geo.uniform(0.0, std::numbers::pi);
    const double margin = 14.0;
    const double reach = std::max(a, b) + margin;
    const double cy = geo.uniform(reach, static_cast<double>(cfg.height) - 1.0 - reach);
    const double cx = geo.uniform(reach, static_cast<double>(cfg.width) - 1.0 - reach);
    const double ct = std::cos(theta), st = std::sin(theta);

    SubjectVolume vol;
    char id[16];
    std::snprintf(id, sizeof id, "s%03zu", index);
    vol.id = id;
    vol.h = cfg.height;
    vol.w = cfg.width;
    vol.mask = Mask(cfg.height, cfg.width);

    // tumor / core membership per pixel
    std::vector<std::uint8_t> core(cfg.height * cfg.width, 0);
    const double rho = cfg.core_fraction;
    for (std::size_t r = 0; r < cfg.height; ++r)
        for (std::size_t c = 0; c < cfg.width; ++c) {
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(c) - cx;
            const double u = dx * ct + dy * st;
            const double v = -dx * st + dy * ct;
            const double q = (u / a) * (u / a) + (v / b) * (v / b);
            if (q <= 1.0) {
                vol.mask.at(r, c) = 1;
                if (rho > 0.0 && q <= rho * rho) core[r * cfg.width + c] = 1;
            }
        }

    for (const auto& [name, con] : cfg.contrasts) {
        Corruption mode = corruption_of(cfg, name);
        double bg = con.background, tumor = con.tumor;
        if (mode == Corruption::Invert) std::swap(bg, tumor);

        Pcg64 noise(derive_seed(subject_seed, "noise:" + name));
        Image img(cfg.height, cfg.width);
        for (std::size_t i = 0; i < img.v.size(); ++i) {
            double level = 0.0;
            if (mode != Corruption::NoiseOnly) {
                level = bg;
                if (vol.mask.v[i]) level = core[i] ? con.core : tumor;
            }
            img.v[i] = level + noise.gaussian(0.0, con.sigma);
        }
        vol.modalities.push_back(name);
        vol.planes.push_back(std::move(img));
    }
    validate_volume(vol);
    return vol;
}

std::vector<SubjectVolume> generate_cohort(const PhantomConfig& cfg) {
    validate_phantom(cfg);
    std::vector<SubjectVolume> cohort;
    cohort.reserve(cfg.cohort);
    for (std::size_t i = 0; i < cfg.cohort; ++i) cohort.push_back(generate_subject(cfg, i));
    return cohort;
}

} // namespace fusenet
