#include "gazekit/gaze_feature.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

using Basis = Eigen::Matrix<double, 1, 6>;

Basis basis(double u, double v) {
    Basis b;
    b << 1.0, u, v, u * u, u * v, v * v;
    return b;
}

double eval(const std::array<double, 6>& c, const Vec2& p) {
    const double u = p.x(), v = p.y();
    return c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v;
}

// Coefficients of f(su*u + tu, sv*v + tv) in the raw basis, given f's
// coefficients in the normalized basis.
std::array<double, 6> expand(const Eigen::Matrix<double, 6, 1>& c, double su, double tu, double sv, double tv) {
    std::array<double, 6> r{};
    r[0] = c(0) + c(1) * tu + c(2) * tv + c(3) * tu * tu + c(4) * tu * tv + c(5) * tv * tv;
    r[1] = su * (c(1) + 2.0 * c(3) * tu + c(4) * tv);
    r[2] = sv * (c(2) + c(4) * tu + 2.0 * c(5) * tv);
    r[3] = c(3) * su * su;
    r[4] = c(4) * su * sv;
    r[5] = c(5) * sv * sv;
    return r;
}

} // namespace

Vec2 PolyMapper::scene_point(const Vec2& pupil_center) const {
    return {eval(coeffs_x, pupil_center), eval(coeffs_y, pupil_center)};
}

PolyMapper fit_polynomial(std::span<const CalibPair> pairs, const CameraIntrinsics& world_cam) {
    world_cam.validate();
    const auto n = static_cast<Eigen::Index>(pairs.size());
    if (n < 6) {
        throw Error(ErrorKind::DegenerateCalibration,
                    "need at least 6 calibration pairs, got " + std::to_string(n));
    }

    Vec2 mean = Vec2::Zero();
    for (const auto& p : pairs) mean += p.pupil_center;
    mean /= static_cast<double>(n);
    Vec2 spread = Vec2::Zero();
    for (const auto& p : pairs) spread += (p.pupil_center - mean).cwiseAbs2();
    spread = (spread / static_cast<double>(n)).cwiseSqrt();
    const double su = spread.x() > 0 ? 1.0 / spread.x() : 1.0;
    const double sv = spread.y() > 0 ? 1.0 / spread.y() : 1.0;
    const double tu = -mean.x() * su, tv = -mean.y() * sv;

    Eigen::MatrixXd a(n, 6);
    Eigen::MatrixXd rhs(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        a.row(i) = basis(su * p.pupil_center.x() + tu, sv * p.pupil_center.y() + tv);
        rhs.row(i) = p.target_scene_px.transpose();
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    if (svd.rank() < 6) {
        std::ostringstream msg;
        msg << "design matrix rank " << svd.rank() << " < 6 over " << n << " pairs";
        if (spread.minCoeff() == 0.0) msg << "; pupil centers share a coordinate";
        else msg << "; pupil centers lie on a line or conic";
        throw Error(ErrorKind::DegenerateCalibration, msg.str());
    }
    const Eigen::MatrixXd sol = svd.solve(rhs);

    PolyMapper m;
    m.world_cam = world_cam;
    m.coeffs_x = expand(sol.col(0), su, tu, sv, tv);
    m.coeffs_y = expand(sol.col(1), su, tu, sv, tv);
    double ss = 0.0;
    for (const auto& p : pairs) ss += (m.scene_point(p.pupil_center) - p.target_scene_px).squaredNorm();
    m.fit_residual_rms = std::sqrt(ss / static_cast<double>(n));
    return m;
}

std::optional<SphericalDirection> map_gaze(const PolyMapper& m, const PupilObservation& obs) {
    if (!obs.pupil) return std::nullopt;
    const Vec2 px = m.scene_point(obs.pupil->center);
    if (!px.allFinite()) return std::nullopt;
    return dir_to_azel(scene_pixel_to_head_dir(m.world_cam, px));
}

std::vector<CalibPair> build_calib_pairs(std::span<const PupilObservation> stream,
                                         std::span<const ProtocolEvent> calibration,
                                         const CameraIntrinsics& world_cam, bool raw_samples) {
    std::vector<CalibPair> pairs;
    for (const auto& ev : calibration) {
        const Vec2 scene = head_to_scene_pixel(world_cam, ev.target_pos);
        Vec2 sum = Vec2::Zero();
        int count = 0;
        for (const auto& obs : stream) {
            if (!ev.contains(obs.timestamp) || !obs.calibration_eligible || !obs.pupil) continue;
            if (raw_samples) pairs.push_back({obs.pupil->center, scene, ev.target_pos});
            sum += obs.pupil->center;
            ++count;
        }
        if (!raw_samples && count > 0) pairs.push_back({sum / count, scene, ev.target_pos});
    }
    return pairs;
}

} // namespace gazekit
