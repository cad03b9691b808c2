#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazekit/detect.hpp"
#include "gazekit/geom.hpp"
#include "gazekit/protocol.hpp"
#include "gazekit/recording.hpp"

namespace gazekit {

/// Simulated head-mounted eye rig. The eye sits at the head origin; the eye
/// camera looks at it from below and in front, `cam_offaxis_deg` away from the
/// eye's straight-ahead direction.
struct RigConfig {
    Vec3 eyeball_center{0.0, -0.004, 0.05}; // m, eye-camera frame
    double eyeball_radius = 0.012;
    double pupil_radius = 0.002;
    double iris_radius = 0.006;
    CameraIntrinsics eye_cam{192, 192, 320.0, Vec2(96.0, 96.0)};
    CameraIntrinsics world_cam = CameraIntrinsics::from_hfov(640, 480, 100.0);
    double cam_offaxis_deg = 20.0;
    double noise_sigma_px = 0.0;
    double dropout_prob = 0.0;
    std::uint64_t seed = 0;

    double sample_rate_hz = 200.0;
    double pentagon_radius_deg = 15.0;
    std::vector<double> calibration_depths{0.4, 0.65, 2.0};
    std::vector<double> assessment_diameters_deg{20.0, 30.0, 40.0};
    double assessment_depth = 1.0;
    std::string subject_id = "synth";

    void validate() const;

    /// Rotation taking head-frame directions to eye-camera-frame directions.
    Mat3 head_to_eye_cam() const;
};

/// 6 targets per depth (center plus pentagon), 1.5 s apart, each sampled for
/// 30 frames starting 0.3 s after onset.
std::vector<ProtocolEvent> gen_calibration_protocol(const RigConfig& cfg);

/// 9 targets per diameter (center plus 8-point ring at half the diameter),
/// each recorded in three 1 s windows.
std::vector<ProtocolEvent> gen_assessment_protocol(const RigConfig& cfg);

struct GroundTruthSample {
    long frame_index = 0;
    double timestamp = 0.0;
    std::string event;
    SphericalDirection direction; // head frame, degrees
    Ellipse pupil;                // noiseless
    Ellipse iris;
    bool dropped = false;
};

struct SimulatedRecording {
    SessionMeta meta;
    std::vector<EllipseRecord> records; // as emitted: noisy, with dropouts
    std::vector<GroundTruthSample> truth;
    Vec3 eyeball_center = Vec3::Zero();
};

/// Fixates every target in turn and samples the pupil and iris images at
/// `sample_rate_hz` inside each window. Deterministic for a given seed.
/// Throws Error(TargetUnviewable) when a target puts the pupil out of view.
SimulatedRecording simulate_recording(const RigConfig& cfg, const std::vector<ProtocolEvent>& calibration,
                                      const std::vector<ProtocolEvent>& assessment);

struct RenderOptions {
    bool masks = false;
    bool frames = false;
};

/// Label mask of the noiseless eye image for one sample.
cv::Mat render_mask(const RigConfig& cfg, const GroundTruthSample& s);

/// Gray frame matching the mask: dark pupil, mid-gray iris, bright sclera and skin.
cv::Mat render_frame(const cv::Mat& mask);

/// Writes meta.json, ellipses.csv, ground_truth.csv and truth.json, plus
/// masks/ and frames/ on request.
void write_recording(const std::filesystem::path& dir, const RigConfig& cfg, const SimulatedRecording& rec,
                     const RenderOptions& render = {});

} // namespace gazekit
