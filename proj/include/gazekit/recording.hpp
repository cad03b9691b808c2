#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "gazekit/detect.hpp"
#include "gazekit/geom.hpp"
#include "gazekit/protocol.hpp"

namespace gazekit {

inline constexpr int kMetaSchemaVersion = 1;

/// Contents of meta.json.
struct SessionMeta {
    int schema_version = kMetaSchemaVersion;
    std::string subject_id;
    std::string resolution; // e.g. "192x192"
    CameraIntrinsics eye_cam;
    CameraIntrinsics world_cam;
    std::vector<ProtocolEvent> calibration;
    std::vector<ProtocolEvent> assessment;
};

/// A recording directory:
///   meta.json
///   ellipses.csv                   optional ellipse stream
///   frames/frame_NNNNNN.pgm        optional gray frames, with frames/timestamps.txt
///   masks/frame_NNNNNN.png         optional label masks, with masks/timestamps.txt
struct Recording {
    std::filesystem::path root;
    SessionMeta meta;
    std::vector<EllipseRecord> ellipses;
    std::vector<double> frame_timestamps;
    std::vector<double> mask_timestamps;
    bool has_ellipses = false;
    bool has_frames = false;
    bool has_masks = false;

    cv::Mat load_frame(std::size_t index) const;
    SegMask load_mask(std::size_t index) const;
};

std::string frame_file_name(std::size_t index, const char* ext);

void write_meta(const std::filesystem::path& file, const SessionMeta& meta);
/// Throws Error(MissingMeta) when absent and Error(BadRecord) when malformed.
SessionMeta read_meta(const std::filesystem::path& file);

/// Header plus one line per record; missing features are empty fields.
void write_ellipses(const std::filesystem::path& file, const std::vector<EllipseRecord>& records);
std::vector<EllipseRecord> read_ellipses(const std::filesystem::path& file);

void write_timestamps(const std::filesystem::path& file, const std::vector<double>& ts);
std::vector<double> read_timestamps(const std::filesystem::path& file);

/// Loads and validates a recording directory: timestamps strictly increasing
/// (Error(BadTimestamps) naming the first offending index) and every protocol
/// window holding at least one sample of every stream (Error(EmptyWindow)).
Recording ingest_recording(const std::filesystem::path& dir);

/// Shortest round-trip text form of a double.
std::string format_exact(double v);

} // namespace gazekit
