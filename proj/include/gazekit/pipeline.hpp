#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazekit/detect.hpp"
#include "gazekit/gaze_feature.hpp"
#include "gazekit/gaze_model3d.hpp"
#include "gazekit/metrics.hpp"
#include "gazekit/recording.hpp"

namespace gazekit {

enum class DetectorKind { Native, Mask, DirectPupil, DirectIris };
enum class GazerKind { Feature, Model3D };

std::string to_string(DetectorKind d);
std::string to_string(GazerKind g);
/// Accepts the names produced by to_string. Throws Error(ConfigError) otherwise.
DetectorKind parse_detector(const std::string& name);
GazerKind parse_gazer(const std::string& name);

struct PipelineOptions {
    /// Keyed by resolution tag ("192x192") or "*" for any; falls back to
    /// DetectorParams::for_resolution.
    std::map<std::string, DetectorParams> detector_params;
    double dropout_threshold = 10.0;
    DistanceMode distance = DistanceMode::Flat;
    bool raw_calibration_samples = false;
    ModelFitFilter model_filter;
    double eyeball_radius = 0.012;
    double pupil_radius_prior = 0.002;

    DetectorParams params_for(const SessionMeta& meta) const;
};

struct GroupResult {
    int target_index = 0;
    int repeat = 0;
    int eccentricity = 0;
    SphericalDirection truth;
    GroupMetrics metrics;
    std::vector<double> timestamps;
    std::vector<std::optional<double>> errors; // per sample, nullopt for dropouts
};

struct CellResult {
    std::string recording;
    std::string subject;
    std::string resolution;
    DetectorKind detector = DetectorKind::DirectPupil;
    GazerKind gazer = GazerKind::Feature;
    std::vector<GroupResult> groups;

    // Calibration diagnostics.
    int calibration_pairs = 0;
    double calibration_residual = 0.0; // px for the feature gazer, degrees for the 3D gazer
    std::optional<EyeModel3D> model;
};

/// Runs the chosen detector over the recording's matching stream and applies
/// the temporal filter.
std::vector<PupilObservation> detect_stream(const Recording& rec, DetectorKind detector, const DetectorParams& params);

/// Calibrates on the calibration windows, maps every assessment sample and
/// scores one fixation group per assessment window.
CellResult evaluate_stream(const SessionMeta& meta, const std::vector<PupilObservation>& stream, GazerKind gazer,
                           const PipelineOptions& opts);

CellResult run_cell(const Recording& rec, DetectorKind detector, GazerKind gazer, const PipelineOptions& opts);

} // namespace gazekit
