// Command-line surface for the patch-based multi-modal segmentation
// pipeline: phantom cohort generation, training, cross-validation,
// prediction, evaluation, and gradient checking.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fusenet/errors.hpp"
#include "fusenet/fusion.hpp"
#include "fusenet/inference.hpp"
#include "fusenet/io.hpp"
#include "fusenet/phantom.hpp"
#include "fusenet/rng.hpp"

namespace fs = std::filesystem;
using namespace fusenet;

namespace {

std::string now_stamp() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::localtime(&t));
    return buf;
}

// Worker cap from the environment; this build executes serially, so the
// cap only bounds the reported worker count.
std::size_t effective_workers() {
    const char* env = std::getenv("FUSENET_THREADS");
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (!env) return std::min<std::size_t>(hw, 1);
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (!end || *end != '\0' || v < 1)
        throw PreconditionError(std::string("FUSENET_THREADS must be a positive integer, got '")
                                + env + "'");
    return std::min<std::size_t>(static_cast<std::size_t>(v), 1);
}

RunConfig load_run_config(const std::string& path) {
    RunConfig rc = parse_config(path);
    validate_run_config(rc);
    return rc;
}

// "single" rows carry their modality in the file label
std::string row_label(const std::string& scheme_token, const std::vector<std::string>& modalities) {
    if (scheme_token == "single") return "single-" + modalities[0];
    return scheme_token;
}

int cmd_phantom(const std::string& config_path, std::string out_dir) {
    RunConfig rc = load_run_config(config_path);
    if (out_dir.empty()) out_dir = rc.cohort_dir;
    if (out_dir.empty())
        throw PreconditionError("phantom: no output directory (--out or cohort_dir)");
    validate_phantom(rc.phantom);
    std::vector<SubjectVolume> cohort = generate_cohort(rc.phantom);
    write_cohort(out_dir, cohort);
    std::printf("wrote %zu subjects (%zux%zu, %zu modalities) to %s\n", cohort.size(),
                rc.phantom.height, rc.phantom.width, rc.phantom.contrasts.size(),
                out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& scheme_arg,
              const std::string& out_path) {
    RunConfig rc = load_run_config(config_path);
    if (rc.cohort_dir.empty()) throw PreconditionError("train: config lacks cohort_dir");

    FusionScheme scheme;
    std::vector<std::string> modalities;
    if (scheme_arg.rfind("single:", 0) == 0) {
        scheme = FusionScheme::Single;
        std::string mod = scheme_arg.substr(7);
        bool known = false;
        for (const std::string& m : rc.modalities) known = known || m == mod;
        if (!known)
            throw PreconditionError("train: modality '" + mod
                                    + "' is not in the config's modality list");
        modalities = {mod};
    } else {
        scheme = scheme_from_name(scheme_arg);
        if (scheme == FusionScheme::Single) {
            if (rc.modalities.size() != 1)
                throw PreconditionError(
                    "train: scheme 'single' is ambiguous with several modalities; use "
                    "single:<modality>");
            modalities = rc.modalities;
        } else {
            if (rc.modalities.size() < 2)
                throw PreconditionError("train: " + scheme_arg
                                        + " requires at least 2 modalities (modalities has "
                                        + std::to_string(rc.modalities.size()) + ")");
            modalities = rc.modalities;
        }
    }

    std::vector<SubjectVolume> cohort = load_cohort(rc.cohort_dir);
    for (SubjectVolume& v : cohort) normalize_volume(v);
    std::vector<std::size_t> all_ids(cohort.size());
    for (std::size_t i = 0; i < all_ids.size(); ++i) all_ids[i] = i;
    std::vector<PatchRef> refs = balanced_sample(cohort, all_ids, rc.n_per_class,
                                                 derive_seed(rc.base.seed, "sample:train"));
    SampleSet samples = materialize_samples(cohort, refs, modalities, 28);
    TrainedNetwork net = train_scheme(scheme, modalities, samples, rc.base, 28);
    save_model(out_path, net);

    for (std::size_t u = 0; u < net.history.size(); ++u) {
        const auto& log = net.history[u];
        if (log.empty()) continue;
        std::printf("%s: %zu epochs, final loss %s, final accuracy %s\n",
                    net.history.size() > 1 ? net.parts[u].name.c_str() : scheme_arg.c_str(),
                    log.size(), fmt_double(log.back().loss).c_str(),
                    fmt_double(log.back().accuracy).c_str());
    }
    std::printf("saved %s\n", out_path.c_str());
    return 0;
}

int cmd_crossval(const std::string& config_path) {
    RunConfig rc = load_run_config(config_path);
    if (rc.cohort_dir.empty()) throw PreconditionError("crossval: config lacks cohort_dir");

    std::error_code ec;
    fs::create_directories(rc.out_dir, ec);
    std::ofstream log((fs::path(rc.out_dir) / "run.log").string(), std::ios::app);
    auto t0 = std::chrono::steady_clock::now();
    log << "[" << now_stamp() << "] crossval start config=" << config_path
        << " seed=" << rc.base.seed << " workers=" << effective_workers() << "\n";

    std::vector<SubjectVolume> cohort = load_cohort(rc.cohort_dir);

    CrossvalSinks sinks;
    if (rc.save_models)
        sinks.model = [&](std::size_t fold, const TrainedNetwork& net) {
            fs::path dir = fs::path(rc.out_dir) / "models" / ("fold" + std::to_string(fold));
            save_model((dir / (row_label(scheme_name(net.scheme), net.modalities) + ".model"))
                           .string(),
                       net);
        };
    if (rc.save_maps)
        sinks.maps = [&](const std::string& label, std::size_t fold, const SubjectVolume& vol,
                         const Heatmap& heat, const Labelmap& lab) {
            fs::path dir = fs::path(rc.out_dir) / "maps" / ("fold" + std::to_string(fold));
            std::string stem = vol.id + "-" + label;
            write_heatmap((dir / (stem + ".heat.mmimg")).string(), heat);
            write_heatmap_pgm((dir / (stem + ".heat.pgm")).string(), heat);
            write_labelmap_pgm((dir / (stem + ".lab.pgm")).string(), lab);
        };

    CrossvalResult result = run_crossval(cohort, rc.schemes, rc.modalities, rc.base, rc.folds,
                                         rc.n_per_class, sinks);
    write_crossval_csvs(result, rc.out_dir);

    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "[" << now_stamp() << "] crossval done in " << fmt_double(dt) << " s\n";

    std::string summary = crossval_summary_csv(result);
    std::fputs(summary.c_str(), stdout);
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& subject_dir,
                const std::string& out_dir) {
    TrainedNetwork net = load_model(model_path);
    SubjectVolume vol = load_subject(subject_dir);
    normalize_volume(vol);

    auto emit = [&](const std::string& label, const Heatmap& heat, const Labelmap& lab) {
        std::string stem = vol.id + "-" + label;
        write_heatmap((fs::path(out_dir) / (stem + ".heat.mmimg")).string(), heat);
        write_heatmap_pgm((fs::path(out_dir) / (stem + ".heat.pgm")).string(), heat);
        write_labelmap_pgm((fs::path(out_dir) / (stem + ".lab.pgm")).string(), lab);
    };

    if (net.scheme == FusionScheme::Type3) {
        std::vector<Heatmap> heats;
        std::vector<Labelmap> labs;
        for (std::size_t m = 0; m < net.modalities.size(); ++m) {
            heats.push_back(predict_member_heatmap(net, m, vol));
            labs.push_back(threshold(heats.back()));
            emit("single-" + net.modalities[m], heats.back(), labs.back());
        }
        Labelmap vote = majority_vote(labs, heats);
        Heatmap mean(vol.id, vol.h, vol.w);
        for (const Heatmap& h : heats)
            for (std::size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += h.v[i];
        for (double& p : mean.v) p /= static_cast<double>(heats.size());
        emit("type3", mean, vote);
    } else {
        Heatmap heat = predict_heatmap(net, vol);
        emit(row_label(scheme_name(net.scheme), net.modalities), heat, threshold(heat));
    }
    std::printf("wrote predictions for %s to %s\n", vol.id.c_str(), out_dir.c_str());
    return 0;
}

int cmd_evaluate(const std::string& maps_dir, const std::string& cohort_dir) {
    std::vector<SubjectVolume> cohort = load_cohort(cohort_dir);
    if (!fs::is_directory(maps_dir)) throw IoError("maps directory " + maps_dir + " does not exist");

    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(maps_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.size() > 8 && name.substr(name.size() - 8) == ".lab.pgm")
            files.push_back(entry.path().string());
    }
    if (files.empty()) throw IoError("no .lab.pgm files under " + maps_dir);
    std::sort(files.begin(), files.end());

    std::printf("subject,scheme,accuracy\n");
    for (const std::string& f : files) {
        std::string name = fs::path(f).filename().string();
        std::string stem = name.substr(0, name.size() - 8);
        std::size_t dash = stem.find('-');
        if (dash == std::string::npos)
            throw PreconditionError("evaluate: map file '" + name
                                    + "' is not named <subject>-<scheme>.lab.pgm");
        std::string sid = stem.substr(0, dash);
        std::string label = stem.substr(dash + 1);

        const SubjectVolume* vol = nullptr;
        for (const SubjectVolume& v : cohort)
            if (v.id == sid) vol = &v;
        if (!vol)
            throw PreconditionError("evaluate: map subject '" + sid + "' is not in the cohort");
        Labelmap lab = read_labelmap_pgm(f);
        lab.subject_id = sid;
        if (lab.h != vol->h || lab.w != vol->w)
            throw PreconditionError("evaluate: map " + name + " is " + std::to_string(lab.h) + "x"
                                    + std::to_string(lab.w) + ", subject is "
                                    + std::to_string(vol->h) + "x" + std::to_string(vol->w));
        std::printf("%s,%s,%s\n", sid.c_str(), label.c_str(),
                    fmt_double(pixel_accuracy(lab, vol->mask)).c_str());
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    auto cases = gradcheck_battery(seed, 10, 1e-5, 1e-6);
    bool all = true;
    for (const auto& c : cases) {
        std::printf("%-16s max_rel_err %-12s %s\n", c.name.c_str(),
                    fmt_double(c.max_rel_err).c_str(), c.pass ? "PASS" : "FAIL");
        all = all && c.pass;
    }
    if (!all) {
        std::fprintf(stderr, "gradient check failed\n");
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal patch CNN segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_arg, scheme_arg, model_path, subject_dir, maps_dir, cohort_dir;
    std::uint64_t seed = 1;

    CLI::App* phantom = app.add_subcommand("phantom", "Generate a synthetic cohort");
    phantom->add_option("--config", config_path, "Run config file")->required();
    phantom->add_option("--out", out_arg, "Output cohort directory (default: cohort_dir)");

    CLI::App* train = app.add_subcommand("train", "Train one network on the whole cohort");
    train->add_option("--config", config_path, "Run config file")->required();
    train->add_option("--scheme", scheme_arg, "type1|type2|type3|single:<modality>")->required();
    train->add_option("--out", model_path, "Model output path")->required();

    CLI::App* crossval = app.add_subcommand("crossval", "Subject-level cross-validation");
    crossval->add_option("--config", config_path, "Run config file")->required();

    CLI::App* predict = app.add_subcommand("predict", "Predict maps for one subject");
    predict->add_option("--model", model_path, "Model file")->required();
    predict->add_option("--subject", subject_dir, "Subject directory")->required();
    predict->add_option("--out", out_arg, "Output directory for maps")->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "Score saved labelmaps against masks");
    evaluate->add_option("--maps", maps_dir, "Directory of .lab.pgm files")->required();
    evaluate->add_option("--cohort", cohort_dir, "Cohort directory with masks")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    gradcheck->add_option("--seed", seed, "Battery seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (*phantom) return cmd_phantom(config_path, out_arg);
        if (*train) return cmd_train(config_path, scheme_arg, model_path);
        if (*crossval) return cmd_crossval(config_path);
        if (*predict) return cmd_predict(model_path, subject_dir, out_arg);
        if (*evaluate) return cmd_evaluate(maps_dir, cohort_dir);
        if (*gradcheck) return cmd_gradcheck(seed);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
