#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusenet/data.hpp"

// Seeded synthetic cohorts: one elliptical tumor per subject with an
// optional concentric necrotic core, rendered per modality with its own
// background/tumor/core levels and gaussian noise.  Stands in for a real
// co-registered multi-modal dataset at desk scale.

namespace fusenet {

struct ModalityContrast {
    double background = 0.3;
    double tumor = 0.7;
    double core = 0.7; // equal to tumor: no visible core
    double sigma = 0.1;
};

enum class Corruption { None, Invert, NoiseOnly };

Corruption corruption_from_name(const std::string& name);
const char* corruption_name(Corruption c);

struct PhantomConfig {
    std::size_t height = 96, width = 96;
    std::size_t cohort = 20;
    double axis_min = 12.0, axis_max = 26.0; // tumor semi-axes, pixels
    double core_fraction = 0.5;              // core semi-axes as a fraction of the tumor's
    std::uint64_t seed = 1;
    // one entry per modality, kept sorted by name
    std::vector<std::pair<std::string, ModalityContrast>> contrasts;
    std::vector<std::pair<std::string, Corruption>> corruption;
};

// Built-in contrast presets: t2 most separable, ct least, pet hot rim with
// a background-cold core; other names get the generic default.
ModalityContrast default_contrast(const std::string& modality);

// Config with default contrasts for the given modalities.
PhantomConfig make_phantom_config(const std::vector<std::string>& modalities);

// Ellipse must fit with >= 14 pixels of border margin (patch half-size).
void validate_phantom(const PhantomConfig& cfg);

// Deterministic per (cfg.seed ^ index); geometry and per-modality noise
// use independent derived streams, so corrupting one modality cannot
// perturb the others.
SubjectVolume generate_subject(const PhantomConfig& cfg, std::size_t index);

std::vector<SubjectVolume> generate_cohort(const PhantomConfig& cfg);

} // namespace fusenet
