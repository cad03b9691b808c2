#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "gazekit/detect.hpp"
#include "gazekit/geom.hpp"
#include "gazekit/protocol.hpp"

namespace gazekit {

struct CalibPair {
    Vec2 pupil_center = Vec2::Zero();    // eye image, px
    Vec2 target_scene_px = Vec2::Zero(); // world camera, px
    Vec3 target_pos = Vec3::UnitZ();     // head frame, m
};

/// Bivariate quadratic map from eye-image pupil position to scene-camera pixel.
/// Coefficients follow the basis [1, u, v, u^2, uv, v^2].
struct PolyMapper {
    std::array<double, 6> coeffs_x{};
    std::array<double, 6> coeffs_y{};
    CameraIntrinsics world_cam;
    double fit_residual_rms = 0.0;

    Vec2 scene_point(const Vec2& pupil_center) const;
};

/// Least-squares fit of both output polynomials. Pupil coordinates are
/// normalized for conditioning and the solution is expanded back to raw pixels.
/// Throws Error(DegenerateCalibration) when the design matrix has rank < 6.
PolyMapper fit_polynomial(std::span<const CalibPair> pairs, const CameraIntrinsics& world_cam);

/// nullopt when the observation has no pupil.
std::optional<SphericalDirection> map_gaze(const PolyMapper& m, const PupilObservation& obs);

/// One pair per calibration event from the mean pupil center of its eligible
/// samples, or one pair per eligible sample when `raw_samples` is set. Events
/// without eligible samples contribute nothing.
std::vector<CalibPair> build_calib_pairs(std::span<const PupilObservation> stream,
                                         std::span<const ProtocolEvent> calibration,
                                         const CameraIntrinsics& world_cam, bool raw_samples = false);

} // namespace gazekit
