#include "gazekit/pipeline.hpp"

#include <algorithm>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

std::vector<PupilObservation> calibration_subset(const SessionMeta& meta, const std::vector<PupilObservation>& stream) {
    std::vector<PupilObservation> out;
    for (const auto& obs : stream) {
        const bool inside = std::any_of(meta.calibration.begin(), meta.calibration.end(),
                                        [&](const ProtocolEvent& ev) { return ev.contains(obs.timestamp); });
        if (inside) out.push_back(obs);
    }
    return out;
}

} // namespace

std::string to_string(DetectorKind d) {
    switch (d) {
    case DetectorKind::Native: return "native";
    case DetectorKind::Mask: return "mask";
    case DetectorKind::DirectPupil: return "direct-pupil";
    case DetectorKind::DirectIris: return "direct-iris";
    }
    return "unknown";
}

std::string to_string(GazerKind g) { return g == GazerKind::Feature ? "feature" : "model3d"; }

DetectorKind parse_detector(const std::string& name) {
    for (auto d : {DetectorKind::Native, DetectorKind::Mask, DetectorKind::DirectPupil, DetectorKind::DirectIris})
        if (to_string(d) == name) return d;
    throw Error(ErrorKind::ConfigError, "unknown detector '" + name + "'");
}

GazerKind parse_gazer(const std::string& name) {
    for (auto g : {GazerKind::Feature, GazerKind::Model3D})
        if (to_string(g) == name) return g;
    throw Error(ErrorKind::ConfigError, "unknown gazer '" + name + "'");
}

DetectorParams PipelineOptions::params_for(const SessionMeta& meta) const {
    if (auto it = detector_params.find(meta.resolution); it != detector_params.end()) return it->second;
    if (auto it = detector_params.find("*"); it != detector_params.end()) return it->second;
    return DetectorParams::for_resolution(meta.eye_cam.width, meta.eye_cam.height);
}

std::vector<PupilObservation> detect_stream(const Recording& rec, DetectorKind detector, const DetectorParams& params) {
    params.validate();
    std::vector<PupilObservation> stream;
    switch (detector) {
    case DetectorKind::DirectPupil:
    case DetectorKind::DirectIris: {
        if (!rec.has_ellipses) throw Error(ErrorKind::BadRecord, "recording has no ellipse stream");
        const auto which = detector == DetectorKind::DirectPupil ? DirectFeature::Pupil : DirectFeature::Iris;
        stream.reserve(rec.ellipses.size());
        for (const auto& r : rec.ellipses) stream.push_back(accept_direct_ellipse(r, which, params));
        break;
    }
    case DetectorKind::Mask:
        if (!rec.has_masks) throw Error(ErrorKind::BadRecord, "recording has no masks");
        stream.reserve(rec.mask_timestamps.size());
        for (std::size_t i = 0; i < rec.mask_timestamps.size(); ++i)
            stream.push_back(detect_from_mask(rec.load_mask(i), params, rec.mask_timestamps[i]));
        break;
    case DetectorKind::Native:
        if (!rec.has_frames) throw Error(ErrorKind::BadRecord, "recording has no frames");
        stream.reserve(rec.frame_timestamps.size());
        for (std::size_t i = 0; i < rec.frame_timestamps.size(); ++i)
            stream.push_back(detect_native(rec.load_frame(i), params, rec.frame_timestamps[i]));
        break;
    }
    temporal_iou_filter(stream, params);
    return stream;
}

CellResult evaluate_stream(const SessionMeta& meta, const std::vector<PupilObservation>& stream, GazerKind gazer,
                           const PipelineOptions& opts) {
    CellResult cell;
    cell.subject = meta.subject_id;
    cell.resolution = meta.resolution;
    cell.gazer = gazer;

    std::optional<PolyMapper> mapper;
    std::optional<EyeModel3D> model;
    std::optional<WorldAlignment> alignment;
    if (gazer == GazerKind::Feature) {
        const auto pairs = build_calib_pairs(stream, meta.calibration, meta.world_cam, opts.raw_calibration_samples);
        cell.calibration_pairs = static_cast<int>(pairs.size());
        // Too little data is reported apart from degenerate target geometry.
        if (pairs.size() < 6)
            throw Error(ErrorKind::InsufficientCalibration,
                        std::to_string(pairs.size()) + " usable calibration targets, need 6");
        mapper = fit_polynomial(pairs, meta.world_cam);
        cell.calibration_residual = mapper->fit_residual_rms;
    } else {
        const auto calib = calibration_subset(meta, stream);
        model = fit_eyeball(calib, meta.eye_cam, opts.model_filter, opts.eyeball_radius, opts.pupil_radius_prior);
        const auto [eye, target] = build_alignment_pairs(stream, meta.calibration, *model, meta.eye_cam);
        cell.calibration_pairs = static_cast<int>(eye.size());
        alignment = align_world_rotation(eye, target);
        cell.calibration_residual = alignment->residual_deg;
        cell.model = model;
    }

    // Streams are time ordered, so each window is a contiguous run.
    for (const auto& ev : meta.assessment) {
        auto lo = std::lower_bound(stream.begin(), stream.end(), ev.start,
                                   [](const PupilObservation& o, double t) { return o.timestamp < t; });
        FixationGroup group;
        group.truth = dir_to_azel(ev.target_pos);
        group.eccentricity_bin = eccentricity_bin(ev.target_pos);
        GroupResult gr;
        for (auto it = lo; it != stream.end() && ev.contains(it->timestamp); ++it) {
            std::optional<SphericalDirection> d;
            if (mapper) d = map_gaze(*mapper, *it);
            else d = map_gaze_3d(*model, *alignment, meta.eye_cam, *it);
            group.samples.push_back({it->timestamp, d});
            gr.timestamps.push_back(it->timestamp);
        }
        if (group.samples.empty()) throw Error(ErrorKind::EmptyWindow, "window " + ev.id() + " has no samples");
        gr.target_index = ev.target_index;
        gr.repeat = ev.repeat;
        gr.eccentricity = group.eccentricity_bin;
        gr.truth = group.truth;
        gr.metrics = evaluate_group(group, opts.dropout_threshold, opts.distance);
        gr.errors = sample_errors(group, opts.distance);
        cell.groups.push_back(std::move(gr));
    }
    return cell;
}

CellResult run_cell(const Recording& rec, DetectorKind detector, GazerKind gazer, const PipelineOptions& opts) {
    const auto stream = detect_stream(rec, detector, opts.params_for(rec.meta));
    auto cell = evaluate_stream(rec.meta, stream, gazer, opts);
    cell.recording = rec.root.filename().string();
    cell.detector = detector;
    return cell;
}

} // namespace gazekit
