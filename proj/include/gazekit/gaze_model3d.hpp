#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gazekit/detect.hpp"
#include "gazekit/geom.hpp"
#include "gazekit/protocol.hpp"

namespace gazekit {

/// Eyeball sphere in the eye-camera frame, fit once and then frozen.
struct EyeModel3D {
    Vec3 center = Vec3::Zero(); // m
    double eyeball_radius = 0.012;
    double pupil_radius_prior = 0.002;
    bool frozen = false;
    double fit_rms = 0.0; // RMS distance from the center to the selected gaze lines, m

    // Fit diagnostics.
    bool converged = false;
    int iterations = 0;
    int selection_flips = 0; // candidate changes after the first selection
    int n_used = 0;
};

struct ModelFitFilter {
    double max_aspect_ratio = 0.8;
    double min_confidence = 0.6;

    void validate() const;
    bool accepts(const PupilObservation& obs) const;
};

struct WorldAlignment {
    Mat3 rotation = Mat3::Identity(); // eye camera -> head
    double residual_deg = 0.0;
};

/// Minimum number of filtered observations fit_eyeball needs.
inline constexpr int kMinModelObservations = 10;

/// Unprojects every accepted pupil into its two circle candidates and finds
/// the point nearest to one gaze line per observation, starting from all 2N
/// lines and alternating candidate selection and re-solving up to 20 times.
/// `converged` is false when the selection never settled.
/// Throws Error(InsufficientCalibration) with fewer than 10 accepted observations.
EyeModel3D fit_eyeball(std::span<const PupilObservation> observations, const CameraIntrinsics& cam,
                       const ModelFitFilter& filter = {}, double eyeball_radius = 0.012,
                       double pupil_radius_prior = 0.002);

struct GazeRay {
    Ray3D ray;                  // origin at the eyeball center, unit direction
    bool on_silhouette = false; // the pixel ray missed the sphere; low confidence
};

/// Casts the camera ray through the pupil center onto the eyeball (near hit)
/// and returns the ray from the eyeball center through that point. nullopt
/// when the pupil is absent. Throws Error(ModelNotFitted) for an unfrozen model.
std::optional<GazeRay> gaze_ray(const EyeModel3D& model, const CameraIntrinsics& cam, const PupilObservation& obs);

/// Orthogonal Procrustes rotation taking eye_dirs onto target_dirs.
/// Throws Error(DegenerateAlignment) for < 3 pairs or a rank < 2 cross-covariance.
WorldAlignment align_world_rotation(std::span<const Vec3> eye_dirs, std::span<const Vec3> target_dirs);

std::optional<SphericalDirection> map_gaze_3d(const EyeModel3D& model, const WorldAlignment& alignment,
                                              const CameraIntrinsics& cam, const PupilObservation& obs);

/// Per calibration event, the normalized mean eye-space gaze direction of its
/// eligible samples paired with the target direction from the head origin.
std::pair<std::vector<Vec3>, std::vector<Vec3>> build_alignment_pairs(std::span<const PupilObservation> stream,
                                                                      std::span<const ProtocolEvent> calibration,
                                                                      const EyeModel3D& model,
                                                                      const CameraIntrinsics& cam);

} // namespace gazekit
