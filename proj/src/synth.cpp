#include "gazekit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "json.hpp"
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gazekit/error.hpp"

namespace gazekit {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kCalibSpacing = 1.5;
constexpr double kCalibDelay = 0.3;
constexpr int kCalibSamples = 30;
constexpr double kAssessGap = 1.0;
constexpr double kAssessBlock = 4.5;
constexpr double kAssessFirst = 0.5;
constexpr double kAssessStride = 1.5;
constexpr double kAssessWindow = 1.0;
constexpr int kAssessRepeats = 3;

Vec3 polar_dir(double ecc_deg, double polar_deg) {
    const double e = ecc_deg * kDeg, p = polar_deg * kDeg;
    return {std::sin(e) * std::cos(p), std::sin(e) * std::sin(p), std::cos(e)};
}

struct EyeImage {
    Ellipse pupil;
    Ellipse iris;
};

EyeImage image_for(const RigConfig& cfg, const Mat3& head_to_cam, const Vec3& target, const std::string& event) {
    const Vec3 g = head_to_cam * target.normalized();
    const Vec3 pupil_center = cfg.eyeball_center + cfg.eyeball_radius * g;
    const double iris_depth =
        std::sqrt(cfg.eyeball_radius * cfg.eyeball_radius - cfg.iris_radius * cfg.iris_radius);
    const Vec3 iris_center = cfg.eyeball_center + iris_depth * g;

    if (g.dot(-pupil_center.normalized()) <= 0.05)
        throw Error(ErrorKind::TargetUnviewable, event + ": pupil faces away from the eye camera");
    EyeImage out;
    try {
        out.pupil = project_circle(cfg.eye_cam, {pupil_center, g, cfg.pupil_radius});
        out.iris = project_circle(cfg.eye_cam, {iris_center, g, cfg.iris_radius});
    } catch (const Error&) {
        throw Error(ErrorKind::TargetUnviewable, event + ": eye is behind the eye camera");
    }
    const Vec2& c = out.pupil.center;
    const double a = out.pupil.semi_major;
    if (c.x() - a < 0 || c.y() - a < 0 || c.x() + a > cfg.eye_cam.width || c.y() + a > cfg.eye_cam.height)
        throw Error(ErrorKind::TargetUnviewable, event + ": pupil leaves the eye-camera image");
    return out;
}

Ellipse perturb(const Ellipse& e, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0) return e;
    std::normal_distribution<double> center(0.0, sigma);
    std::normal_distribution<double> axis(0.0, 0.5 * sigma);
    const Vec2 c = e.center + Vec2(center(rng), center(rng));
    const double a = std::max(0.1, e.semi_major + axis(rng));
    const double b = std::max(0.1, e.semi_minor + axis(rng));
    return Ellipse::make(c, a, b, e.angle);
}

// Labels every pixel whose center lies inside the ellipse. cv::ellipse also
// paints the outline, which inflates filled shapes by about half a pixel.
void fill_ellipse(cv::Mat& mask, const Ellipse& e, std::uint8_t label) {
    const int x0 = std::max(0, int(std::floor(e.center.x() - e.semi_major)));
    const int x1 = std::min(mask.cols - 1, int(std::ceil(e.center.x() + e.semi_major)));
    const int y0 = std::max(0, int(std::floor(e.center.y() - e.semi_major)));
    const int y1 = std::min(mask.rows - 1, int(std::ceil(e.center.y() + e.semi_major)));
    for (int y = y0; y <= y1; ++y) {
        auto* row = mask.ptr<std::uint8_t>(y);
        for (int x = x0; x <= x1; ++x)
            if (e.implicit(Vec2(x, y)) <= 0) row[x] = label;
    }
}

std::string fmt_opt(const Ellipse& e) {
    std::string s;
    for (double v : {e.center.x(), e.center.y(), e.semi_major, e.semi_minor, e.angle}) s += "," + format_exact(v);
    return s;
}

} // namespace

void RigConfig::validate() const {
    eye_cam.validate();
    world_cam.validate();
    if (!(pupil_radius > 0 && pupil_radius < iris_radius && iris_radius < eyeball_radius))
        throw Error(ErrorKind::InvalidParams, "need 0 < pupil_radius < iris_radius < eyeball_radius");
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0))
        throw Error(ErrorKind::InvalidParams, "dropout_prob must be in [0, 1)");
    if (!(noise_sigma_px >= 0.0)) throw Error(ErrorKind::InvalidParams, "noise_sigma_px must be >= 0");
    if (!(sample_rate_hz > 0.0)) throw Error(ErrorKind::InvalidParams, "sample_rate_hz must be positive");
    if (!(eyeball_center.z() > eyeball_radius))
        throw Error(ErrorKind::InvalidParams, "eyeball must lie in front of the eye camera");
    for (double d : calibration_depths)
        if (!(d > 0)) throw Error(ErrorKind::InvalidParams, "calibration depths must be positive");
    if (!(assessment_depth > 0)) throw Error(ErrorKind::InvalidParams, "assessment depth must be positive");
}

Mat3 RigConfig::head_to_eye_cam() const {
    const Vec3 to_cam = -eyeball_center.normalized();
    const double a = cam_offaxis_deg * kDeg;
    Mat3 rx;
    rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    const Vec3 z = rx * to_cam;
    const Vec3 up(0, -1, 0);
    const Vec3 y = (up - z * up.dot(z)).normalized();
    const Vec3 x = y.cross(z);
    Mat3 m;
    m.col(0) = x;
    m.col(1) = y;
    m.col(2) = z;
    return m;
}

std::vector<ProtocolEvent> gen_calibration_protocol(const RigConfig& cfg) {
    cfg.validate();
    std::vector<ProtocolEvent> out;
    int index = 0;
    for (double depth : cfg.calibration_depths) {
        std::vector<Vec3> dirs{Vec3::UnitZ()};
        for (int k = 0; k < 5; ++k) dirs.push_back(polar_dir(cfg.pentagon_radius_deg, 90.0 + 72.0 * k));
        for (const auto& d : dirs) {
            ProtocolEvent ev;
            ev.kind = EventKind::Calibration;
            ev.target_index = index;
            ev.target_pos = depth * d;
            ev.start = index * kCalibSpacing + kCalibDelay;
            ev.end = ev.start + kCalibSamples / cfg.sample_rate_hz;
            ev.samples_expected = kCalibSamples;
            out.push_back(ev);
            ++index;
        }
    }
    return out;
}

std::vector<ProtocolEvent> gen_assessment_protocol(const RigConfig& cfg) {
    cfg.validate();
    const double base = static_cast<double>(6 * cfg.calibration_depths.size()) * kCalibSpacing + kAssessGap;
    const int per_window = static_cast<int>(std::lround(kAssessWindow * cfg.sample_rate_hz));
    std::vector<ProtocolEvent> out;
    int index = 0;
    for (double diameter : cfg.assessment_diameters_deg) {
        std::vector<Vec3> dirs{Vec3::UnitZ()};
        for (int k = 0; k < 8; ++k) dirs.push_back(polar_dir(diameter / 2.0, 45.0 * k));
        for (const auto& d : dirs) {
            const double onset = base + index * kAssessBlock;
            for (int r = 0; r < kAssessRepeats; ++r) {
                ProtocolEvent ev;
                ev.kind = EventKind::Assessment;
                ev.target_index = index;
                ev.repeat = r;
                ev.target_pos = cfg.assessment_depth * d;
                ev.start = onset + kAssessFirst + r * kAssessStride;
                ev.end = ev.start + kAssessWindow;
                ev.samples_expected = per_window;
                out.push_back(ev);
            }
            ++index;
        }
    }
    return out;
}

SimulatedRecording simulate_recording(const RigConfig& cfg, const std::vector<ProtocolEvent>& calibration,
                                      const std::vector<ProtocolEvent>& assessment) {
    cfg.validate();
    const Mat3 m = cfg.head_to_eye_cam();

    SimulatedRecording rec;
    rec.eyeball_center = cfg.eyeball_center;
    rec.meta.subject_id = cfg.subject_id;
    rec.meta.resolution = std::to_string(cfg.eye_cam.width) + "x" + std::to_string(cfg.eye_cam.height);
    rec.meta.eye_cam = cfg.eye_cam;
    rec.meta.world_cam = cfg.world_cam;
    rec.meta.calibration = calibration;
    rec.meta.assessment = assessment;

    std::vector<const ProtocolEvent*> events;
    for (const auto& e : calibration) events.push_back(&e);
    for (const auto& e : assessment) events.push_back(&e);
    std::stable_sort(events.begin(), events.end(),
                     [](const ProtocolEvent* a, const ProtocolEvent* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i]->start < events[i - 1]->end)
            throw Error(ErrorKind::InvalidParams, "protocol windows " + events[i - 1]->id() + " and " +
                                                      events[i]->id() + " overlap");
    }

    std::mt19937_64 rng(cfg.seed);
    std::bernoulli_distribution drop(cfg.dropout_prob);
    long frame = 0;
    for (const ProtocolEvent* ev : events) {
        const EyeImage img = image_for(cfg, m, ev->target_pos, ev->id());
        const SphericalDirection truth = dir_to_azel(ev->target_pos);
        for (int i = 0; i < ev->samples_expected; ++i) {
            const double t = ev->start + i / cfg.sample_rate_hz;
            if (!ev->contains(t)) break;
            const bool dropped = drop(rng);
            const Ellipse pupil = perturb(img.pupil, cfg.noise_sigma_px, rng);
            const Ellipse iris = perturb(img.iris, cfg.noise_sigma_px, rng);

            EllipseRecord r;
            r.frame_index = frame;
            r.timestamp = t;
            if (!dropped) {
                r.pupil = pupil;
                r.iris = iris;
            }
            rec.records.push_back(r);
            rec.truth.push_back({frame, t, ev->id(), truth, img.pupil, img.iris, dropped});
            ++frame;
        }
    }
    return rec;
}

cv::Mat render_mask(const RigConfig& cfg, const GroundTruthSample& s) {
    cv::Mat mask(cfg.eye_cam.height, cfg.eye_cam.width, CV_8UC1, cv::Scalar(0));
    const Vec2 eye = cfg.eye_cam.project(cfg.eyeball_center);
    const double sclera = 0.95 * cfg.eye_cam.focal_length * cfg.eyeball_radius / cfg.eyeball_center.z();
    fill_ellipse(mask, Ellipse::make(eye, sclera, sclera, 0.0), 1);
    fill_ellipse(mask, s.iris, 2);
    fill_ellipse(mask, s.pupil, 3);
    return mask;
}

cv::Mat render_frame(const cv::Mat& mask) {
    static const std::uint8_t gray[4] = {150, 215, 110, 25};
    cv::Mat frame(mask.size(), CV_8UC1);
    for (int y = 0; y < mask.rows; ++y) {
        const auto* m = mask.ptr<std::uint8_t>(y);
        auto* f = frame.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.cols; ++x) f[x] = gray[m[x] & 3];
    }
    return frame;
}

void write_recording(const fs::path& dir, const RigConfig& cfg, const SimulatedRecording& rec,
                     const RenderOptions& render) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

    write_meta(dir / "meta.json", rec.meta);
    write_ellipses(dir / "ellipses.csv", rec.records);

    {
        std::ofstream gt(dir / "ground_truth.csv", std::ios::binary);
        if (!gt) throw Error(ErrorKind::IoError, "cannot write ground_truth.csv");
        gt << "frame_index,timestamp_s,event,azimuth_deg,elevation_deg,"
              "pupil_cx,pupil_cy,pupil_a,pupil_b,pupil_theta,iris_cx,iris_cy,iris_a,iris_b,iris_theta,dropped\n";
        for (const auto& s : rec.truth) {
            gt << s.frame_index << ',' << format_exact(s.timestamp) << ',' << s.event << ','
               << format_exact(s.direction.azimuth) << ',' << format_exact(s.direction.elevation) << fmt_opt(s.pupil)
               << fmt_opt(s.iris) << ',' << (s.dropped ? 1 : 0) << '\n';
        }
    }
    {
        const Mat3 m = cfg.head_to_eye_cam();
        nlohmann::json j;
        j["eyeball_center"] = {rec.eyeball_center.x(), rec.eyeball_center.y(), rec.eyeball_center.z()};
        j["eyeball_radius"] = cfg.eyeball_radius;
        j["pupil_radius"] = cfg.pupil_radius;
        j["iris_radius"] = cfg.iris_radius;
        j["head_to_eye_camera"] = nlohmann::json::array();
        for (int r = 0; r < 3; ++r) j["head_to_eye_camera"].push_back({m(r, 0), m(r, 1), m(r, 2)});
        j["noise_sigma_px"] = cfg.noise_sigma_px;
        j["dropout_prob"] = cfg.dropout_prob;
        j["seed"] = cfg.seed;
        std::ofstream out(dir / "truth.json", std::ios::binary);
        if (!out) throw Error(ErrorKind::IoError, "cannot write truth.json");
        out << j.dump(2) << '\n';
    }

    if (!render.masks && !render.frames) return;
    std::vector<double> ts;
    for (const auto& s : rec.truth) ts.push_back(s.timestamp);
    if (render.masks) fs::create_directories(dir / "masks");
    if (render.frames) fs::create_directories(dir / "frames");
    for (std::size_t i = 0; i < rec.truth.size(); ++i) {
        const cv::Mat mask = render_mask(cfg, rec.truth[i]);
        if (render.masks && !cv::imwrite((dir / "masks" / frame_file_name(i, "png")).string(), mask))
            throw Error(ErrorKind::IoError, "cannot write mask " + std::to_string(i));
        if (render.frames && !cv::imwrite((dir / "frames" / frame_file_name(i, "pgm")).string(), render_frame(mask)))
            throw Error(ErrorKind::IoError, "cannot write frame " + std::to_string(i));
    }
    if (render.masks) write_timestamps(dir / "masks" / "timestamps.txt", ts);
    if (render.frames) write_timestamps(dir / "frames" / "timestamps.txt", ts);
}

} // namespace gazekit
