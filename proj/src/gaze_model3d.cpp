#include "gazekit/gaze_model3d.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

struct Line {
    Vec3 point;
    Vec3 dir; // unit
};

constexpr int kMaxIterations = 20;

Vec3 nearest_point(const std::vector<const Line*>& lines) {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const Line* l : lines) {
        const Mat3 p = Mat3::Identity() - l->dir * l->dir.transpose();
        a += p;
        b += p * l->point;
    }
    return a.colPivHouseholderQr().solve(b);
}

double point_line_distance(const Vec3& x, const Line& l) {
    const Vec3 d = x - l.point;
    return (d - d.dot(l.dir) * l.dir).norm();
}

// The pupil sits where the gaze line leaves the eyeball, so the circle center
// lies along +normal from the eyeball center.
int pick(const std::pair<Line, Line>& cand, const Vec3& center) {
    const double s0 = cand.first.dir.dot((cand.first.point - center).normalized());
    const double s1 = cand.second.dir.dot((cand.second.point - center).normalized());
    return s1 > s0 ? 1 : 0;
}

} // namespace

void ModelFitFilter::validate() const {
    if (!(max_aspect_ratio > 0.0 && max_aspect_ratio <= 1.0))
        throw Error(ErrorKind::InvalidParams, "max_aspect_ratio must be in (0, 1]");
}

bool ModelFitFilter::accepts(const PupilObservation& obs) const {
    return obs.pupil && obs.confidence >= min_confidence && obs.pupil->aspect_ratio() <= max_aspect_ratio;
}

EyeModel3D fit_eyeball(std::span<const PupilObservation> observations, const CameraIntrinsics& cam,
                       const ModelFitFilter& filter, double eyeball_radius, double pupil_radius_prior) {
    cam.validate();
    filter.validate();
    if (!(eyeball_radius > 0) || !(pupil_radius_prior > 0))
        throw Error(ErrorKind::InvalidParams, "eyeball and pupil radii must be positive");

    std::vector<std::pair<Line, Line>> cands;
    for (const auto& obs : observations) {
        if (!filter.accepts(obs)) continue;
        try {
            const auto [c0, c1] = unproject_ellipse(cam, *obs.pupil, pupil_radius_prior);
            cands.push_back({{c0.center, c0.normal.normalized()}, {c1.center, c1.normal.normalized()}});
        } catch (const Error&) {
            continue;
        }
    }
    if (static_cast<int>(cands.size()) < kMinModelObservations) {
        throw Error(ErrorKind::InsufficientCalibration,
                    std::to_string(cands.size()) + " observations pass the model-fit filter, need " +
                        std::to_string(kMinModelObservations));
    }

    std::vector<const Line*> lines;
    for (const auto& c : cands) {
        lines.push_back(&c.first);
        lines.push_back(&c.second);
    }
    Vec3 center = nearest_point(lines);

    EyeModel3D model;
    model.eyeball_radius = eyeball_radius;
    model.pupil_radius_prior = pupil_radius_prior;
    model.n_used = static_cast<int>(cands.size());

    std::vector<int> sel(cands.size(), -1);
    for (int it = 1; it <= kMaxIterations; ++it) {
        bool changed = false;
        lines.clear();
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const int s = pick(cands[i], center);
            if (s != sel[i]) {
                if (sel[i] >= 0) ++model.selection_flips;
                changed = true;
                sel[i] = s;
            }
            lines.push_back(s == 0 ? &cands[i].first : &cands[i].second);
        }
        center = nearest_point(lines);
        model.iterations = it;
        if (!changed && it > 1) {
            model.converged = true;
            break;
        }
    }

    double ss = 0.0;
    for (const Line* l : lines) {
        const double d = point_line_distance(center, *l);
        ss += d * d;
    }
    model.center = center;
    model.fit_rms = std::sqrt(ss / static_cast<double>(lines.size()));
    model.frozen = true;
    return model;
}

std::optional<GazeRay> gaze_ray(const EyeModel3D& model, const CameraIntrinsics& cam, const PupilObservation& obs) {
    if (!model.frozen) throw Error(ErrorKind::ModelNotFitted, "eye model has not been fitted");
    if (!obs.pupil) return std::nullopt;

    const Vec3 d = pixel_to_ray(cam, obs.pupil->center).direction;
    const Vec3& c = model.center;
    const double r = model.eyeball_radius;
    const double along = d.dot(c);
    const double disc = along * along - c.squaredNorm() + r * r;

    GazeRay out;
    Vec3 surface;
    if (disc >= 0.0) {
        surface = (along - std::sqrt(disc)) * d;
    } else {
        const Vec3 closest = along * d;
        surface = c + r * (closest - c).normalized();
        out.on_silhouette = true;
    }
    out.ray = {c, (surface - c).normalized()};
    return out;
}

WorldAlignment align_world_rotation(std::span<const Vec3> eye_dirs, std::span<const Vec3> target_dirs) {
    if (eye_dirs.size() != target_dirs.size())
        throw Error(ErrorKind::DegenerateAlignment, "direction lists differ in length");
    if (eye_dirs.size() < 3)
        throw Error(ErrorKind::DegenerateAlignment,
                    "need at least 3 direction pairs, got " + std::to_string(eye_dirs.size()));

    Mat3 h = Mat3::Zero();
    for (std::size_t i = 0; i < eye_dirs.size(); ++i)
        h += eye_dirs[i].normalized() * target_dirs[i].normalized().transpose();

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (!(s(0) > 0) || s(1) <= 1e-12 * s(0))
        throw Error(ErrorKind::DegenerateAlignment, "cross-covariance has rank < 2");

    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Mat3 fix = Mat3::Identity();
    fix(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;

    WorldAlignment a;
    a.rotation = v * fix * u.transpose();
    double sum = 0.0;
    for (std::size_t i = 0; i < eye_dirs.size(); ++i) sum += angle_between_deg(a.rotation * eye_dirs[i], target_dirs[i]);
    a.residual_deg = sum / static_cast<double>(eye_dirs.size());
    return a;
}

std::optional<SphericalDirection> map_gaze_3d(const EyeModel3D& model, const WorldAlignment& alignment,
                                              const CameraIntrinsics& cam, const PupilObservation& obs) {
    const auto g = gaze_ray(model, cam, obs);
    if (!g) return std::nullopt;
    return dir_to_azel(alignment.rotation * g->ray.direction);
}

std::pair<std::vector<Vec3>, std::vector<Vec3>> build_alignment_pairs(std::span<const PupilObservation> stream,
                                                                      std::span<const ProtocolEvent> calibration,
                                                                      const EyeModel3D& model,
                                                                      const CameraIntrinsics& cam) {
    std::pair<std::vector<Vec3>, std::vector<Vec3>> out;
    for (const auto& ev : calibration) {
        Vec3 sum = Vec3::Zero();
        int n = 0;
        for (const auto& obs : stream) {
            if (!ev.contains(obs.timestamp) || !obs.calibration_eligible) continue;
            const auto g = gaze_ray(model, cam, obs);
            if (!g) continue;
            sum += g->ray.direction;
            ++n;
        }
        if (n == 0 || sum.norm() == 0.0) continue;
        out.first.push_back(sum.normalized());
        out.second.push_back(ev.target_pos.normalized());
    }
    return out;
}

} // namespace gazekit
