#pragma once

#include <string>
#include <vector>

#include "fusenet/data.hpp"
#include "fusenet/fusion.hpp"
#include "fusenet/inference.hpp"
#include "fusenet/phantom.hpp"

// File formats and run configuration.
//
// Images travel in a minimal container: one ASCII header line
// `MMIMG 1 <width> <height>\n` followed by width*height row-major 64-bit
// little-endian floats.  Masks use the same container with values
// restricted to {0.0, 1.0}.  Labelmaps export as binary P5 graymaps
// (0/255); heatmaps as the MMIMG container plus an optional P5 rendering.
//
// A cohort directory holds one subdirectory per subject containing
// `<modality>.mmimg` planes and `mask.mmimg`.

namespace fusenet {

Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

Mask read_mask(const std::string& path);
void write_mask(const std::string& path, const Mask& mask);

void write_labelmap_pgm(const std::string& path, const Labelmap& lab);
Labelmap read_labelmap_pgm(const std::string& path);

void write_heatmap(const std::string& path, const Heatmap& heat);
Heatmap read_heatmap(const std::string& path);
// probability scaled by 255 and rounded
void write_heatmap_pgm(const std::string& path, const Heatmap& heat);

// Versioned model file: text descriptor (scheme, modalities, per-part
// layer specs), `end`, then every parameter tensor as little-endian
// doubles in declaration order.  Loading revalidates the rebuilt specs
// and the payload size; momentum state and training history are not
// persisted.
void save_model(const std::string& path, const TrainedNetwork& net);
TrainedNetwork load_model(const std::string& path);

void write_cohort(const std::string& dir, const std::vector<SubjectVolume>& cohort);
SubjectVolume load_subject(const std::string& dir);
// subjects sorted by directory name; every subject must carry the same
// modality set
std::vector<SubjectVolume> load_cohort(const std::string& dir);

// ---- run configuration ----

// Flat `key = value` text format, `#` starts a comment.  Unknown keys are
// rejected.  See parse_config for the key list.
struct RunConfig {
    std::string cohort_dir;
    std::string out_dir = ".";
    std::vector<std::string> modalities;
    std::vector<std::string> schemes;
    BaseConfig base;
    std::size_t folds = 10;
    std::size_t n_per_class = 1000;
    bool save_models = false;
    bool save_maps = false;
    PhantomConfig phantom; // assembled for `modalities` with any overrides
};

RunConfig parse_config(const std::string& path);

// Sorts the modality list and enforces cross-field rules (fusion schemes
// need >= 2 modalities, folds >= 2, ...).  Throws PreconditionError
// naming the offending field.
void validate_run_config(RunConfig& rc);

// ---- metrics tables ----

std::string crossval_detail_csv(const CrossvalResult& result);
std::string crossval_summary_csv(const CrossvalResult& result);
// writes metrics_detail.csv and metrics_summary.csv under dir
void write_crossval_csvs(const CrossvalResult& result, const std::string& dir);

// "a+b+c"
std::string join_modalities(const std::vector<std::string>& modalities);

// shortest %.17g rendering, stable across runs
std::string fmt_double(double v);

} // namespace fusenet
