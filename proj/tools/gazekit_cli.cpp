// gazekit command line: synthesize recordings, run the evaluation matrix and
// rebuild reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gazekit/error.hpp"
#include "gazekit/harness.hpp"
#include "gazekit/recording.hpp"
#include "gazekit/synth.hpp"

namespace fs = std::filesystem;
using namespace gazekit;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIngest = 3, kAllFailed = 4 };

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

RigConfig load_rig(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot read " + file.string());
    RigConfig cfg;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.contains("eyeball_center")) {
            const auto v = j["eyeball_center"].get<std::vector<double>>();
            if (v.size() != 3) throw Error(ErrorKind::ConfigError, "eyeball_center needs 3 values");
            cfg.eyeball_center = Vec3(v[0], v[1], v[2]);
        }
        cfg.eyeball_radius = j.value("eyeball_radius", cfg.eyeball_radius);
        cfg.pupil_radius = j.value("pupil_radius", cfg.pupil_radius);
        cfg.iris_radius = j.value("iris_radius", cfg.iris_radius);
        if (j.contains("eye_camera")) {
            const auto& c = j["eye_camera"];
            const int w = c.at("width"), h = c.at("height");
            const auto pp = c.value("principal_point", std::vector<double>{w / 2.0, h / 2.0});
            cfg.eye_cam = CameraIntrinsics{w, h, c.at("focal_length").get<double>(), Vec2(pp.at(0), pp.at(1))};
        }
        if (j.contains("world_camera")) {
            const auto& c = j["world_camera"];
            const int w = c.at("width"), h = c.at("height");
            cfg.world_cam = c.contains("hfov_deg")
                                ? CameraIntrinsics::from_hfov(w, h, c["hfov_deg"].get<double>())
                                : CameraIntrinsics{w, h, c.at("focal_length").get<double>(),
                                                   Vec2(c.at("principal_point").at(0).get<double>(),
                                                        c.at("principal_point").at(1).get<double>())};
        }
        cfg.cam_offaxis_deg = j.value("cam_offaxis_deg", cfg.cam_offaxis_deg);
        cfg.noise_sigma_px = j.value("noise_sigma_px", cfg.noise_sigma_px);
        cfg.dropout_prob = j.value("dropout_prob", cfg.dropout_prob);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.sample_rate_hz = j.value("sample_rate_hz", cfg.sample_rate_hz);
        cfg.pentagon_radius_deg = j.value("pentagon_radius_deg", cfg.pentagon_radius_deg);
        cfg.calibration_depths = j.value("calibration_depths", cfg.calibration_depths);
        cfg.assessment_diameters_deg = j.value("assessment_diameters_deg", cfg.assessment_diameters_deg);
        cfg.assessment_depth = j.value("assessment_depth", cfg.assessment_depth);
        cfg.subject_id = j.value("subject_id", cfg.subject_id);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, "malformed rig config " + file.string() + ": " + e.what());
    }
    return cfg;
}

int report_error(const Error& e) {
    std::cerr << "gazekit: " << e.what() << '\n';
    switch (e.kind()) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidParams:
    case ErrorKind::InvalidCamera: return kConfig;
    default: return kIngest;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pupil detection and gaze estimation evaluation toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Simulate recordings with known gaze");
    std::string synth_config, synth_out;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise, dropout;
    int subjects = 1;
    bool masks = false, frames = false;
    synth->add_option("--config", synth_config, "Rig configuration (JSON)")->check(CLI::ExistingFile);
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--noise", noise, "Ellipse noise sigma in pixels");
    synth->add_option("--dropout", dropout, "Probability of a missing sample");
    synth->add_option("--subjects", subjects, "Number of simulated subjects")->check(CLI::PositiveNumber);
    synth->add_flag("--masks", masks, "Also render segmentation masks");
    synth->add_flag("--frames", frames, "Also render eye images");
    synth->add_option("--out", synth_out, "Output directory")->required();

    // run
    auto* run = app.add_subcommand("run", "Evaluate detector x gazer combinations on recordings");
    std::vector<std::string> run_recs;
    std::string run_config, run_out, run_detectors, run_gazers;
    std::optional<double> run_threshold;
    std::optional<int> run_workers;
    run->add_option("recordings", run_recs, "Recording directories");
    run->add_option("--config", run_config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    run->add_option("--detectors", run_detectors, "Comma separated: native,mask,direct-pupil,direct-iris");
    run->add_option("--gazers", run_gazers, "Comma separated: feature,model3d");
    run->add_option("--dropout-threshold", run_threshold, "Angular error (deg) above which a sample counts as lost");
    run->add_option("--workers", run_workers, "Worker threads");
    run->add_option("--out", run_out, "Result directory");

    // report / sweep
    auto* report = app.add_subcommand("report", "Rebuild tables and plots from a result directory");
    std::string report_dir;
    report->add_option("dir", report_dir, "Result directory")->required()->check(CLI::ExistingDirectory);

    auto* sweep = app.add_subcommand("sweep", "Write the dropout threshold sweep for a result directory");
    std::string sweep_dir;
    double sweep_max = 50.0, sweep_step = 1.0;
    sweep->add_option("dir", sweep_dir, "Result directory")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--max", sweep_max, "Largest threshold (deg)");
    sweep->add_option("--step", sweep_step, "Threshold step (deg)");

    auto* validate = app.add_subcommand("validate", "Check that recordings ingest cleanly");
    std::vector<std::string> validate_recs;
    validate->add_option("recordings", validate_recs, "Recording directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) {
            RigConfig cfg = synth_config.empty() ? RigConfig{} : load_rig(synth_config);
            if (seed) cfg.seed = *seed;
            if (noise) cfg.noise_sigma_px = *noise;
            if (dropout) cfg.dropout_prob = *dropout;
            const auto calib = gen_calibration_protocol(cfg);
            const auto assess = gen_assessment_protocol(cfg);
            const RenderOptions render{masks, frames};
            const std::string base_subject = cfg.subject_id;
            const std::uint64_t base_seed = cfg.seed;
            for (int s = 0; s < subjects; ++s) {
                fs::path dir = synth_out;
                if (subjects > 1) {
                    char name[32];
                    std::snprintf(name, sizeof name, "subject_%02d", s + 1);
                    dir /= name;
                    cfg.subject_id = base_subject + "_" + std::to_string(s + 1);
                    cfg.seed = base_seed + static_cast<std::uint64_t>(s);
                }
                write_recording(dir, cfg, simulate_recording(cfg, calib, assess), render);
                std::cout << "wrote " << dir.string() << '\n';
            }
            return kOk;
        }
        if (*run) {
            RunConfig cfg;
            if (!run_config.empty()) cfg = load_run_config(run_config);
            if (!run_recs.empty()) cfg.recordings.assign(run_recs.begin(), run_recs.end());
            if (!run_detectors.empty()) {
                cfg.detectors.clear();
                for (const auto& d : split_list(run_detectors)) cfg.detectors.push_back(parse_detector(d));
            }
            if (!run_gazers.empty()) {
                cfg.gazers.clear();
                for (const auto& g : split_list(run_gazers)) cfg.gazers.push_back(parse_gazer(g));
            }
            if (cfg.detectors.empty()) cfg.detectors = {DetectorKind::DirectPupil};
            if (cfg.gazers.empty()) cfg.gazers = {GazerKind::Feature, GazerKind::Model3D};
            if (run_threshold) cfg.options.dropout_threshold = *run_threshold;
            if (run_workers) cfg.workers = *run_workers;
            if (!run_out.empty()) cfg.output_dir = run_out;
            cfg.validate();
            const auto summary = run_matrix(cfg);
            for (const auto& e : summary.errors)
                std::cerr << "cell " << e.recording << '/' << e.detector << '/' << e.gazer << " failed: " << e.message
                          << '\n';
            std::cout << summary.cells_ok << " cells ok, " << summary.errors.size() << " failed\n";
            return summary.cells_ok == 0 ? kAllFailed : kOk;
        }
        if (*report) {
            emit_report(report_dir);
            return kOk;
        }
        if (*sweep) {
            emit_sweep(sweep_dir, sweep_max, sweep_step);
            return kOk;
        }
        if (*validate) {
            int bad = 0;
            for (const auto& r : validate_recs) {
                try {
                    const auto rec = ingest_recording(r);
                    std::cout << r << ": ok (" << rec.meta.calibration.size() << " calibration, "
                              << rec.meta.assessment.size() << " assessment windows)\n";
                } catch (const Error& e) {
                    std::cout << r << ": " << e.what() << '\n';
                    ++bad;
                }
            }
            return bad ? kIngest : kOk;
        }
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        std::cerr << "gazekit: " << e.what() << '\n';
        return kIngest;
    }
    return kOk;
}
