#include "gazekit/detect.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

constexpr double kPi = std::numbers::pi;

struct Component {
    Ellipse ellipse;
    double area = 0.0;
};

// Midpoints of the pixel cracks separating the component from its 4-neighbors.
// Cracks on the image border are skipped: they are not pupil edges.
std::vector<Vec2> crack_points(const cv::Mat& labels, int id) {
    std::vector<Vec2> pts;
    const int rows = labels.rows, cols = labels.cols;
    for (int y = 0; y < rows; ++y) {
        const int* row = labels.ptr<int>(y);
        for (int x = 0; x < cols; ++x) {
            if (row[x] != id) continue;
            if (x > 0 && row[x - 1] != id) pts.emplace_back(x - 0.5, y);
            if (x + 1 < cols && row[x + 1] != id) pts.emplace_back(x + 0.5, y);
            if (y > 0 && labels.ptr<int>(y - 1)[x] != id) pts.emplace_back(x, y - 0.5);
            if (y + 1 < rows && labels.ptr<int>(y + 1)[x] != id) pts.emplace_back(x, y + 0.5);
        }
    }
    return pts;
}

std::optional<Ellipse> moment_ellipse(const cv::Mat& labels, int id) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int y = 0; y < labels.rows; ++y) {
        const int* row = labels.ptr<int>(y);
        for (int x = 0; x < labels.cols; ++x) {
            if (row[x] != id) continue;
            n += 1;
            sx += x;
            sy += y;
            sxx += double(x) * x;
            sxy += double(x) * y;
            syy += double(y) * y;
        }
    }
    if (n < 1) return std::nullopt;
    const Vec2 c(sx / n, sy / n);
    Eigen::Matrix2d cov;
    // Pixel squares add 1/12 variance along each axis.
    cov << sxx / n - c.x() * c.x() + 1.0 / 12, sxy / n - c.x() * c.y(), sxy / n - c.x() * c.y(),
        syy / n - c.y() * c.y() + 1.0 / 12;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Vec2 major = es.eigenvectors().col(1);
    return Ellipse::make(c, 2.0 * std::sqrt(es.eigenvalues()(1)), 2.0 * std::sqrt(es.eigenvalues()(0)),
                         std::atan2(major.y(), major.x()));
}

double crack_distance(const Conic& q, const Vec2& p) {
    const double x = p.x(), y = p.y();
    const double f = q.a * x * x + q.b * x * y + q.c * y * y + q.d * x + q.e * y + q.f;
    const double gx = 2 * q.a * x + q.b * y + q.d;
    const double gy = q.b * x + 2 * q.c * y + q.e;
    const double g = std::hypot(gx, gy);
    return g > 0 ? std::abs(f) / g : std::abs(f);
}

// Direct fit followed by trimmed refits that shed boundary points lying far off
// the ellipse (occluder cuts, lashes) until the inlier set stops changing.
std::optional<Ellipse> robust_boundary_fit(std::vector<Vec2> pts) {
    auto fit = fit_ellipse_direct(pts);
    for (int iter = 0; fit && iter < 6; ++iter) {
        const Conic q = to_conic(*fit);
        std::vector<double> d(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) d[i] = crack_distance(q, pts[i]);
        std::vector<double> sorted = d;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double limit = std::max(0.75, 2.5 * sorted[sorted.size() / 2]);

        std::vector<Vec2> kept;
        kept.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (d[i] <= limit) kept.push_back(pts[i]);
        if (kept.size() == pts.size() || kept.size() < 6) break;
        auto refit = fit_ellipse_direct(kept);
        if (!refit) break;
        fit = refit;
        pts = std::move(kept);
    }
    return fit;
}

std::size_t count_inliers(const Ellipse& e, const std::vector<Vec2>& pts, double tol, std::vector<Vec2>* out) {
    const Conic q = to_conic(e);
    std::size_t n = 0;
    for (const auto& p : pts) {
        if (crack_distance(q, p) > tol) continue;
        ++n;
        if (out) out->push_back(p);
    }
    return n;
}

// Seeded RANSAC with local refits, used when a large share of the boundary
// disagrees with the least-squares ellipse (a straight occluder cut pulls the
// direct fit off the true curve).
std::optional<Ellipse> consensus_fit(const std::vector<Vec2>& pts, const Ellipse& initial) {
    constexpr double kTol = 1.0;
    const std::size_t base = count_inliers(initial, pts, kTol, nullptr);
    if (base >= pts.size() * 95 / 100 || pts.size() < 12) return initial;

    Vec2 lo = pts.front(), hi = pts.front();
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = (hi - lo).norm();

    std::mt19937 rng(static_cast<std::uint32_t>(0x5eed + pts.size()));
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    std::optional<Ellipse> best;
    std::size_t best_count = base;
    std::vector<Vec2> sample(6);
    for (int iter = 0; iter < 500; ++iter) {
        for (auto& s : sample) s = pts[pick(rng)];
        auto hyp = fit_ellipse_direct(sample);
        if (!hyp || !hyp->valid() || hyp->semi_major > 2.0 * extent) continue;
        // Local optimization: refit on the consensus set a few times.
        for (int lo_iter = 0; lo_iter < 3; ++lo_iter) {
            std::vector<Vec2> inl;
            if (count_inliers(*hyp, pts, kTol, &inl) < 6) break;
            auto refit = fit_ellipse_direct(inl);
            if (!refit || !refit->valid() || refit->semi_major > 2.0 * extent) break;
            hyp = refit;
        }
        const std::size_t c = count_inliers(*hyp, pts, kTol, nullptr);
        if (c > best_count) {
            best_count = c;
            best = hyp;
        }
    }
    return best ? best : initial;
}

// Largest 8-connected component of `binary` (non-zero = candidate) whose
// equivalent radius sqrt(area/pi) is inside [rmin, rmax].
std::optional<Component> largest_component(const cv::Mat& binary, double rmin, double rmax) {
    cv::Mat labels, stats, centroids;
    const int count = cv::connectedComponentsWithStats(binary, labels, stats, centroids, 8, CV_32S);
    int best = -1;
    int best_area = 0;
    for (int id = 1; id < count; ++id) {
        const int area = stats.at<int>(id, cv::CC_STAT_AREA);
        const double r = std::sqrt(area / kPi);
        if (r < rmin || r > rmax) continue;
        if (area > best_area) {
            best_area = area;
            best = id;
        }
    }
    if (best < 0) return std::nullopt;

    std::optional<Ellipse> fit;
    auto pts = crack_points(labels, best);
    if (pts.size() >= 6) {
        fit = robust_boundary_fit(pts);
        if (fit) fit = consensus_fit(pts, *fit);
    }
    if (!fit) fit = moment_ellipse(labels, best);
    if (!fit || !fit->valid()) return std::nullopt;
    return Component{*fit, double(best_area)};
}

void check_frame(const cv::Mat& frame) {
    if (frame.empty() || frame.rows <= 0 || frame.cols <= 0)
        throw Error(ErrorKind::InvalidFrame, "empty frame");
    if (frame.type() != CV_8UC1) throw Error(ErrorKind::InvalidFrame, "frame must be 8-bit single channel");
}

PupilObservation detect_on_gray(const cv::Mat& gray, const DetectorParams& params, double timestamp) {
    PupilObservation obs;
    obs.timestamp = timestamp;
    const int threshold = darkness_threshold(gray, params);

    double max_value = 0;
    cv::minMaxLoc(gray, nullptr, &max_value);
    if (max_value <= threshold) return obs; // no contrast: nothing is darker than its surroundings

    cv::Mat binary;
    cv::compare(gray, cv::Scalar(threshold), binary, cv::CMP_LE);
    const auto comp = largest_component(binary, params.pupil_size_min, params.pupil_size_max);
    if (!comp) return obs;

    obs.pupil = comp->ellipse;
    obs.confidence = confidence_score(gray, comp->ellipse, comp->area, params.intensity_range);
    obs.status = ObservationStatus::Detected;
    return obs;
}

double sample_bilinear(const cv::Mat& img, const Vec2& p, bool& inside) {
    const double x = p.x(), y = p.y();
    if (x < 0 || y < 0 || x > img.cols - 1 || y > img.rows - 1) {
        inside = false;
        return 0.0;
    }
    inside = true;
    const int x0 = std::min(int(x), img.cols - 2 < 0 ? 0 : img.cols - 2);
    const int y0 = std::min(int(y), img.rows - 2 < 0 ? 0 : img.rows - 2);
    const int x1 = std::min(x0 + 1, img.cols - 1);
    const int y1 = std::min(y0 + 1, img.rows - 1);
    const double fx = x - x0, fy = y - y0;
    auto at = [&](int yy, int xx) { return double(img.at<std::uint8_t>(yy, xx)); };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

} // namespace

void DetectorParams::validate() const {
    if (!(intensity_range > 0 && intensity_range < 255))
        throw Error(ErrorKind::InvalidParams, "intensity_range must be in (0, 255)");
    if (!(pupil_size_min > 0 && pupil_size_min < pupil_size_max))
        throw Error(ErrorKind::InvalidParams, "need 0 < pupil_size_min < pupil_size_max");
    if (!(confidence_floor >= 0 && confidence_floor <= 1))
        throw Error(ErrorKind::InvalidParams, "confidence_floor must be in [0, 1]");
    if (!(iou_threshold >= 0 && iou_threshold <= 1))
        throw Error(ErrorKind::InvalidParams, "iou_threshold must be in [0, 1]");
}

DetectorParams DetectorParams::for_resolution(int width, int height) {
    DetectorParams p;
    if (width >= 400 && height >= 400) p.intensity_range = 10;
    return p;
}

SegMask::SegMask(cv::Mat labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw Error(ErrorKind::InvalidMask, "empty mask");
    if (labels_.type() != CV_8UC1) throw Error(ErrorKind::InvalidMask, "mask must be 8-bit single channel");
    double max_code = 0;
    cv::minMaxLoc(labels_, nullptr, &max_code);
    if (max_code > 3) throw Error(ErrorKind::InvalidMask, "label codes must be in {0,1,2,3}");
}

int darkness_threshold(const cv::Mat& frame, const DetectorParams& params) {
    std::array<long, 256> hist{};
    for (int y = 0; y < frame.rows; ++y) {
        const auto* row = frame.ptr<std::uint8_t>(y);
        for (int x = 0; x < frame.cols; ++x) ++hist[row[x]];
    }
    const long rank = std::max(1L, long(0.5 * kPi * params.pupil_size_min * params.pupil_size_min));
    long seen = 0;
    int anchor = 255;
    for (int v = 0; v < 256; ++v) {
        seen += hist[v];
        if (seen >= rank) {
            anchor = v;
            break;
        }
    }
    return anchor + params.intensity_range;
}

PupilObservation detect_native(const cv::Mat& frame, const DetectorParams& params, double timestamp) {
    check_frame(frame);
    params.validate();
    return detect_on_gray(frame, params, timestamp);
}

PupilObservation detect_from_mask(const SegMask& mask, const DetectorParams& params, double timestamp) {
    params.validate();
    const cv::Mat& labels = mask.labels();

    cv::Mat pupil_img(labels.size(), CV_8UC1, cv::Scalar(255));
    pupil_img.setTo(0, labels == int(MaskLabel::Pupil));
    PupilObservation obs = detect_on_gray(pupil_img, params, timestamp);

    cv::Mat iris_bin = (labels == int(MaskLabel::Iris)) | (labels == int(MaskLabel::Pupil));
    if (cv::countNonZero(labels == int(MaskLabel::Iris)) > 0) {
        if (auto iris = largest_component(iris_bin, params.pupil_size_min, 1e9)) obs.iris = iris->ellipse;
    }
    return obs;
}

PupilObservation accept_direct_ellipse(const EllipseRecord& rec, DirectFeature which, const DetectorParams&) {
    PupilObservation obs;
    obs.timestamp = rec.timestamp;
    obs.iris = rec.iris;
    const auto& feature = which == DirectFeature::Pupil ? rec.pupil : rec.iris;
    if (!feature) {
        const bool other = which == DirectFeature::Pupil ? rec.iris.has_value() : rec.pupil.has_value();
        obs.status = other ? ObservationStatus::FeatureMissing : ObservationStatus::NotFound;
        return obs;
    }
    obs.pupil = feature;
    obs.confidence = std::clamp(rec.confidence.value_or(1.0), 0.0, 1.0);
    obs.status = ObservationStatus::Detected;
    return obs;
}

double confidence_score(const cv::Mat& source, const Ellipse& e, double component_area, int intensity_range) {
    const double ell_area = e.area();
    double shape = 0.0;
    if (component_area > 0 && ell_area > 0)
        shape = std::min(component_area, ell_area) / std::max(component_area, ell_area);

    const double c = std::cos(e.angle), s = std::sin(e.angle);
    int supported = 0;
    constexpr int kSamples = 64;
    for (int i = 0; i < kSamples; ++i) {
        const double t = 2.0 * kPi * i / kSamples;
        const Vec2 p = e.point_at(t);
        // Outward normal from the gradient of the implicit form.
        const Vec2 local(std::cos(t) / e.semi_major, std::sin(t) / e.semi_minor);
        Vec2 n(c * local.x() - s * local.y(), s * local.x() + c * local.y());
        n.normalize();
        bool in_ok = false, out_ok = false;
        const double inner = sample_bilinear(source, p - 2.0 * n, in_ok);
        const double outer = sample_bilinear(source, p + 2.0 * n, out_ok);
        if (in_ok && out_ok && outer - inner > intensity_range) ++supported;
    }
    const double edge = double(supported) / kSamples;
    return std::clamp(0.5 * std::clamp(shape, 0.0, 1.0) + 0.5 * edge, 0.0, 1.0);
}

void temporal_iou_filter(std::span<PupilObservation> stream, const DetectorParams& params) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
        auto& cur = stream[i];
        cur.calibration_eligible = false;
        if (i == 0 || !cur.pupil || !stream[i - 1].pupil) continue;
        if (cur.confidence < params.confidence_floor) continue;
        cur.calibration_eligible = ellipse_iou(*cur.pupil, *stream[i - 1].pupil) >= params.iou_threshold;
    }
}

std::optional<Ellipse> fit_ellipse_direct(std::span<const Vec2> points) {
    const std::size_t n = points.size();
    if (n < 6) return std::nullopt;

    Vec2 mean = Vec2::Zero();
    for (const auto& p : points) mean += p;
    mean /= double(n);
    double scale = 0.0;
    for (const auto& p : points) scale += (p - mean).squaredNorm();
    scale = std::sqrt(scale / double(n));
    if (!(scale > 0)) return std::nullopt;

    // Halir-Flusser partitioning of the Fitzgibbon scatter matrix.
    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 q = (points[i] - mean) / scale;
        d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
        d2.row(i) << q.x(), q.y(), 1.0;
    }
    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Matrix3d t = -lu.inverse() * s2.transpose();
    const Eigen::Matrix3d m = s1 + s2 * t;
    Eigen::Matrix3d reduced;
    reduced.row(0) = m.row(2) / 2.0;
    reduced.row(1) = -m.row(1);
    reduced.row(2) = m.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
    std::optional<Eigen::Vector3d> a1;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d v = es.eigenvectors().col(k).real();
        if (4.0 * v(0) * v(2) - v(1) * v(1) > 0) {
            a1 = v;
            break;
        }
    }
    if (!a1) return std::nullopt;
    const Eigen::Vector3d a2 = t * *a1;

    auto local = ellipse_from_conic({(*a1)(0), (*a1)(1), (*a1)(2), a2(0), a2(1), a2(2)});
    if (!local) return std::nullopt;
    return Ellipse::make(mean + scale * local->center, scale * local->semi_major, scale * local->semi_minor,
                         local->angle);
}

} // namespace gazekit
