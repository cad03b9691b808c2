#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "gazekit/geom.hpp"

namespace gazekit {

struct DetectorParams {
    int intensity_range = 23;
    double pupil_size_min = 10.0; // radius, px
    double pupil_size_max = 100.0; // radius, px
    double confidence_floor = 0.6;
    double iou_threshold = 0.98;

    void validate() const;

    /// Defaults by eye-video resolution: intensity range 10 for 400x400 input, 23 otherwise.
    static DetectorParams for_resolution(int width, int height);
};

enum class MaskLabel : std::uint8_t { Background = 0, Sclera = 1, Iris = 2, Pupil = 3 };

/// Per-pixel semantic labels stored as CV_8UC1 with values in {0,1,2,3}.
class SegMask {
public:
    /// Throws Error(InvalidMask) for empty input, wrong type or unknown codes.
    explicit SegMask(cv::Mat labels);

    const cv::Mat& labels() const { return labels_; }
    int width() const { return labels_.cols; }
    int height() const { return labels_.rows; }

private:
    cv::Mat labels_;
};

enum class ObservationStatus { Detected, NotFound, FeatureMissing };

/// Per-frame detection result. `pupil` holds the tracked feature, which is the
/// iris ellipse on the direct-iris pathway.
struct PupilObservation {
    double timestamp = 0.0;
    std::optional<Ellipse> pupil;
    std::optional<Ellipse> iris;
    double confidence = 0.0;
    bool calibration_eligible = false;
    ObservationStatus status = ObservationStatus::NotFound;
};

/// One line of an ellipse stream.
struct EllipseRecord {
    long frame_index = 0;
    double timestamp = 0.0;
    std::optional<Ellipse> pupil;
    std::optional<Ellipse> iris;
    std::optional<double> confidence;
};

enum class DirectFeature { Pupil, Iris };

/// Thresholds an 8-bit gray frame at (dark anchor + intensity_range), keeps the
/// largest connected component whose equivalent radius is in the size window and
/// fits an ellipse to its boundary. Throws Error(InvalidFrame) on empty or non-8-bit input.
PupilObservation detect_native(const cv::Mat& frame, const DetectorParams& params, double timestamp = 0.0);

/// Same component pipeline on a binary image synthesized from the pupil label;
/// the iris is fit to the iris+pupil union.
PupilObservation detect_from_mask(const SegMask& mask, const DetectorParams& params, double timestamp = 0.0);

/// Wraps a network-provided ellipse without re-fitting. A record lacking the
/// requested feature yields an absent observation with status FeatureMissing.
PupilObservation accept_direct_ellipse(const EllipseRecord& rec, DirectFeature which,
                                       const DetectorParams& params);

/// 0.5 * shape agreement + 0.5 * fraction of 64 boundary samples whose
/// outside-minus-inside intensity step (2 px either side) exceeds intensity_range.
double confidence_score(const cv::Mat& source, const Ellipse& e, double component_area, int intensity_range);

/// Sets calibration_eligible on an ordered stream: confidence >= floor and IoU
/// with the immediately preceding observation >= iou_threshold.
void temporal_iou_filter(std::span<PupilObservation> stream, const DetectorParams& params);

/// Ellipse-specific direct least-squares conic fit (Fitzgibbon). nullopt when
/// fewer than 6 points or the fit is not an ellipse.
std::optional<Ellipse> fit_ellipse_direct(std::span<const Vec2> points);

/// Gray level at or below which a pixel counts as dark: the intensity reached
/// by the darkest half-minimum-pupil area of pixels, plus intensity_range.
int darkness_threshold(const cv::Mat& frame, const DetectorParams& params);

} // namespace gazekit
