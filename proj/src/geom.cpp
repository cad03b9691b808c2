#include "gazekit/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

constexpr double kPi = std::numbers::pi;

double normalize_angle(double a) {
    a = std::fmod(a, kPi);
    if (a < 0) a += kPi;
    if (a >= kPi) a -= kPi;
    return a;
}

Mat3 intrinsic_matrix(const CameraIntrinsics& cam) {
    Mat3 k;
    k << cam.focal_length, 0, cam.principal_point.x(), 0, cam.focal_length, cam.principal_point.y(), 0,
        0, 1;
    return k;
}

// Any unit vector perpendicular to n.
Vec3 any_perpendicular(const Vec3& n) {
    const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return n.cross(seed).normalized();
}

double polygon_area(const std::vector<Vec2>& poly) {
    double s = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        s += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * s;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Sutherland-Hodgman clip of `subject` against a convex counter-clockwise `clip`.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
    for (std::size_t i = 0, n = clip.size(); i < n && !subject.empty(); ++i) {
        const Vec2& a = clip[i];
        const Vec2& b = clip[(i + 1) % n];
        const Vec2 edge = b - a;
        auto side = [&](const Vec2& p) { return cross2(edge, p - a); };

        std::vector<Vec2> out;
        out.reserve(subject.size() + 4);
        for (std::size_t j = 0, m = subject.size(); j < m; ++j) {
            const Vec2& cur = subject[j];
            const Vec2& prev = subject[(j + m - 1) % m];
            const double sc = side(cur);
            const double sp = side(prev);
            if (sc >= 0) {
                if (sp < 0) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
                out.push_back(cur);
            } else if (sp >= 0) {
                out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
        subject = std::move(out);
    }
    return subject;
}

} // namespace

void CameraIntrinsics::validate() const {
    if (width <= 0 || height <= 0 || !(focal_length > 0) || !std::isfinite(focal_length))
        throw Error(ErrorKind::InvalidCamera, "width, height and focal length must be positive");
    if (!(principal_point.x() >= 0 && principal_point.x() <= width && principal_point.y() >= 0 &&
          principal_point.y() <= height))
        throw Error(ErrorKind::InvalidCamera, "principal point outside the sensor");
}

Vec2 CameraIntrinsics::project(const Vec3& p) const {
    return principal_point + focal_length * Vec2(p.x() / p.z(), p.y() / p.z());
}

CameraIntrinsics CameraIntrinsics::from_hfov(int width, int height, double hfov_deg) {
    CameraIntrinsics cam;
    cam.width = width;
    cam.height = height;
    cam.focal_length = 0.5 * width / std::tan(0.5 * hfov_deg * kPi / 180.0);
    cam.principal_point = Vec2(0.5 * width, 0.5 * height);
    return cam;
}

Ellipse Ellipse::make(const Vec2& center, double a, double b, double angle) {
    Ellipse e;
    e.center = center;
    if (b > a) {
        std::swap(a, b);
        angle += 0.5 * kPi;
    }
    e.semi_major = a;
    e.semi_minor = b;
    e.angle = normalize_angle(angle);
    return e;
}

double Ellipse::area() const { return kPi * semi_major * semi_minor; }

bool Ellipse::valid() const {
    return std::isfinite(center.x()) && std::isfinite(center.y()) && semi_minor > 0 &&
           semi_major >= semi_minor && std::isfinite(semi_major) && angle >= 0 && angle < kPi;
}

Vec2 Ellipse::point_at(double t) const {
    const Vec2 u(std::cos(angle), std::sin(angle));
    const Vec2 v(-u.y(), u.x());
    return center + semi_major * std::cos(t) * u + semi_minor * std::sin(t) * v;
}

double Ellipse::implicit(const Vec2& p) const {
    const Vec2 d = p - center;
    const double c = std::cos(angle), s = std::sin(angle);
    const double x = (c * d.x() + s * d.y()) / semi_major;
    const double y = (-s * d.x() + c * d.y()) / semi_minor;
    return x * x + y * y - 1.0;
}

Mat3 Conic::matrix() const {
    Mat3 m;
    m << a, b / 2, d / 2, b / 2, c, e / 2, d / 2, e / 2, f;
    return m;
}

Conic Conic::from_matrix(const Mat3& m) {
    return {m(0, 0), m(0, 1) + m(1, 0), m(1, 1), m(0, 2) + m(2, 0), m(1, 2) + m(2, 1), m(2, 2)};
}

Conic to_conic(const Ellipse& el) {
    const double a2 = el.semi_major * el.semi_major;
    const double b2 = el.semi_minor * el.semi_minor;
    const double s = std::sin(el.angle), c = std::cos(el.angle);
    const double h = el.center.x(), k = el.center.y();
    Conic q;
    q.a = a2 * s * s + b2 * c * c;
    q.b = 2.0 * (b2 - a2) * s * c;
    q.c = a2 * c * c + b2 * s * s;
    q.d = -2.0 * q.a * h - q.b * k;
    q.e = -q.b * h - 2.0 * q.c * k;
    q.f = q.a * h * h + q.b * h * k + q.c * k * k - a2 * b2;
    return q;
}

std::optional<Ellipse> ellipse_from_conic(const Conic& conic) {
    Eigen::Matrix2d m;
    m << conic.a, conic.b / 2, conic.b / 2, conic.c;
    const double det = m.determinant();
    const double scale = std::max({std::abs(conic.a), std::abs(conic.b), std::abs(conic.c)});
    if (!(scale > 0) || !(det > 1e-14 * scale * scale)) return std::nullopt;

    const Vec2 center = -m.inverse() * Vec2(conic.d / 2, conic.e / 2);
    const double f0 = conic.f + 0.5 * (conic.d * center.x() + conic.e * center.y());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
    Vec2 lambda = es.eigenvalues();
    double g = f0;
    if (lambda(0) < 0) {
        lambda = -lambda;
        g = -g;
    }
    if (!(g < 0)) return std::nullopt;

    // Smaller eigenvalue belongs to the major axis.
    const int imaj = lambda(0) <= lambda(1) ? 0 : 1;
    const double a = std::sqrt(-g / lambda(imaj));
    const double b = std::sqrt(-g / lambda(1 - imaj));
    const Vec2 major = es.eigenvectors().col(imaj);
    if (!std::isfinite(a) || !std::isfinite(b)) return std::nullopt;
    return Ellipse::make(center, a, b, std::atan2(major.y(), major.x()));
}

Ray3D pixel_to_ray(const CameraIntrinsics& cam, const Vec2& pixel) {
    const Vec2 d = (pixel - cam.principal_point) / cam.focal_length;
    return {Vec3::Zero(), Vec3(d.x(), d.y(), 1.0).normalized()};
}

Vec3 scene_pixel_to_head_dir(const CameraIntrinsics& world_cam, const Vec2& pixel) {
    const Vec3 d = pixel_to_ray(world_cam, pixel).direction;
    return {d.x(), -d.y(), d.z()};
}

Vec2 head_to_scene_pixel(const CameraIntrinsics& world_cam, const Vec3& head_point) {
    if (!(head_point.z() > 0)) throw Error(ErrorKind::BehindCamera, "point is not in front of the scene camera");
    return world_cam.project(Vec3(head_point.x(), -head_point.y(), head_point.z()));
}

SphericalDirection dir_to_azel(const Vec3& v) {
    const double n = v.norm();
    if (!(n > 0) || !std::isfinite(n)) throw Error(ErrorKind::InvalidDirection, "zero or non-finite direction");
    const Vec3 u = v / n;
    const double az = std::atan2(u.x(), u.z());
    const double el = std::atan2(u.y(), std::hypot(u.x(), u.z()));
    return {az * 180.0 / kPi, el * 180.0 / kPi};
}

Vec3 azel_to_dir(const SphericalDirection& d) {
    const double az = d.azimuth * kPi / 180.0;
    const double el = d.elevation * kPi / 180.0;
    return {std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
}

double angle_between_deg(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / kPi;
}

Ellipse project_circle(const CameraIntrinsics& cam, const Circle3D& circle) {
    const Vec3 n = circle.normal.normalized();
    const double reach = circle.radius * std::sqrt(std::max(0.0, 1.0 - n.z() * n.z()));
    if (!(circle.center.z() - reach > 0))
        throw Error(ErrorKind::BehindCamera, "circle crosses the z <= 0 half-space");

    const Vec3 u = any_perpendicular(n);
    const Vec3 v = n.cross(u);
    Mat3 basis;
    basis.col(0) = u;
    basis.col(1) = v;
    basis.col(2) = circle.center;
    const Mat3 h = intrinsic_matrix(cam) * basis;
    const Mat3 h_inv = h.inverse();

    Mat3 plane = Mat3::Identity();
    plane(2, 2) = -circle.radius * circle.radius;
    Mat3 image = h_inv.transpose() * plane * h_inv;
    image /= image.cwiseAbs().maxCoeff();

    auto el = ellipse_from_conic(Conic::from_matrix(0.5 * (image + image.transpose())));
    if (!el) throw Error(ErrorKind::BehindCamera, "circle does not image to an ellipse");
    return *el;
}

std::pair<Circle3D, Circle3D> unproject_ellipse(const CameraIntrinsics& cam, const Ellipse& e,
                                                double radius) {
    if (!(radius > 0)) throw Error(ErrorKind::InvalidEllipse, "circle radius must be positive");
    if (!e.valid()) throw Error(ErrorKind::InvalidEllipse, "ellipse violates its invariants");
    if (e.aspect_ratio() < 1e-6) throw Error(ErrorKind::DegenerateEllipse, "aspect ratio below 1e-6");

    // Oblique cone through the camera center with the ellipse as its base.
    const Mat3 k = intrinsic_matrix(cam);
    Mat3 cone = k.transpose() * to_conic(e).matrix() * k;
    cone = 0.5 * (cone + cone.transpose());
    cone /= cone.cwiseAbs().maxCoeff();

    Eigen::SelfAdjointEigenSolver<Mat3> es(cone);
    Vec3 lambda = es.eigenvalues();
    Mat3 vecs = es.eigenvectors();
    if ((lambda.array() > 0).count() == 1) {
        lambda = -lambda;
        vecs = vecs.rowwise().reverse().eval();
        lambda = lambda.reverse().eval();
    }
    // Ascending: lambda(0) < 0 < lambda(1) <= lambda(2).
    const double l3 = lambda(0), l2 = lambda(1), l1 = lambda(2);
    const Vec3 e1 = vecs.col(2);
    const Vec3 e3 = vecs.col(0);
    const double span = l1 - l3;
    const double ca = std::sqrt(std::max(0.0, (l1 - l2) / span));
    const double cb = std::sqrt(std::max(0.0, (l2 - l3) / span));

    auto solve = [&](const Vec3& normal_raw) {
        const Vec3 n = normal_raw.normalized();
        // Cut the cone with n.X = 1; the section is a circle, found as a 2D conic.
        const Vec3 bu = any_perpendicular(n);
        const Vec3 bv = n.cross(bu);
        const Vec3& p0 = n;
        Conic section;
        section.a = bu.dot(cone * bu);
        section.b = 2.0 * bu.dot(cone * bv);
        section.c = bv.dot(cone * bv);
        section.d = 2.0 * bu.dot(cone * p0);
        section.e = 2.0 * bv.dot(cone * p0);
        section.f = p0.dot(cone * p0);
        const auto sec = ellipse_from_conic(section);
        if (!sec) throw Error(ErrorKind::DegenerateEllipse, "cone section is not a circle");
        const double r1 = 0.5 * (sec->semi_major + sec->semi_minor);

        Circle3D c;
        c.center = (p0 + sec->center.x() * bu + sec->center.y() * bv) * (radius / r1);
        if (c.center.z() < 0) c.center = -c.center;
        c.normal = n.z() > 0 ? Vec3(-n) : n;
        c.radius = radius;
        return c;
    };

    return {solve(ca * e1 + cb * e3), solve(-ca * e1 + cb * e3)};
}

std::vector<Vec2> ellipse_polygon(const Ellipse& e, int n) {
    std::vector<Vec2> poly;
    poly.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) poly.push_back(e.point_at(2.0 * kPi * i / n));
    return poly;
}

double ellipse_iou(const Ellipse& a, const Ellipse& b) {
    const auto pa = ellipse_polygon(a);
    const auto pb = ellipse_polygon(b);
    const double area_a = polygon_area(pa);
    const double area_b = polygon_area(pb);
    const auto inter = clip_convex(pa, pb);
    const double area_i = inter.size() >= 3 ? std::max(0.0, polygon_area(inter)) : 0.0;
    const double uni = area_a + area_b - area_i;
    if (!(uni > 0)) return 0.0;
    return std::clamp(area_i / uni, 0.0, 1.0);
}

} // namespace gazekit
