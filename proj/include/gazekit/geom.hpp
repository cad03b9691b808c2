#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gazekit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ideal pinhole camera, no distortion. Camera frame is right-handed with +z
/// into the scene, +x along image columns and +y along image rows.
struct CameraIntrinsics {
    int width = 0;
    int height = 0;
    double focal_length = 0.0;
    Vec2 principal_point = Vec2::Zero();

    /// Throws Error(InvalidCamera) when an invariant is broken.
    void validate() const;

    /// Perspective projection of a camera-frame point (z must be non-zero).
    Vec2 project(const Vec3& p) const;

    /// Centered principal point with the focal length chosen for a horizontal field of view.
    static CameraIntrinsics from_hfov(int width, int height, double hfov_deg);
};

/// Image-space ellipse. `angle` is the major-axis orientation, atan2 of the
/// axis direction in pixel coordinates, normalized to [0, pi).
struct Ellipse {
    Vec2 center = Vec2::Zero();
    double semi_major = 0.0;
    double semi_minor = 0.0;
    double angle = 0.0;

    /// Builds a normalized ellipse from any pair of semi-axes; swaps them and
    /// rotates the angle when b > a.
    static Ellipse make(const Vec2& center, double a, double b, double angle);

    double aspect_ratio() const { return semi_minor / semi_major; }
    double area() const;
    bool valid() const;

    /// Boundary point at parameter t (radians); t increasing runs counter-clockwise
    /// in (x, y) coordinates.
    Vec2 point_at(double t) const;

    /// Signed algebraic test: < 0 inside, 0 on boundary, > 0 outside.
    double implicit(const Vec2& p) const;
};

/// General conic a x^2 + b xy + c y^2 + d x + e y + f = 0.
struct Conic {
    double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;

    Mat3 matrix() const;
    static Conic from_matrix(const Mat3& m);
};

Conic to_conic(const Ellipse& e);

/// Recovers ellipse parameters from a conic; nullopt when the conic is not a real ellipse.
std::optional<Ellipse> ellipse_from_conic(const Conic& conic);

/// Head-centered gaze direction in degrees. +azimuth rightward, +elevation upward.
struct SphericalDirection {
    double azimuth = 0.0;
    double elevation = 0.0;
};

struct Circle3D {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    double radius = 0.0;
};

struct Ray3D {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
};

Ray3D pixel_to_ray(const CameraIntrinsics& cam, const Vec2& pixel);

/// (0,0,1) maps to (0,0). Throws Error(InvalidDirection) for a zero vector.
SphericalDirection dir_to_azel(const Vec3& v);
Vec3 azel_to_dir(const SphericalDirection& d);

/// The scene camera sits at the head origin looking along +z with image rows
/// growing downward, so head and scene-camera frames differ by a y flip.
Vec3 scene_pixel_to_head_dir(const CameraIntrinsics& world_cam, const Vec2& pixel);

/// Throws Error(BehindCamera) for points with z <= 0.
Vec2 head_to_scene_pixel(const CameraIntrinsics& world_cam, const Vec3& head_point);

/// Great-circle angle between two non-zero vectors, in degrees.
double angle_between_deg(const Vec3& a, const Vec3& b);

/// Exact perspective image of a 3D circle. Throws Error(BehindCamera) when any
/// part of the circle lies at z <= 0.
Ellipse project_circle(const CameraIntrinsics& cam, const Circle3D& circle);

/// The two circles of the given radius whose image is `e`. Normals point
/// toward the camera (z <= 0). Throws Error(DegenerateEllipse) for aspect < 1e-6.
std::pair<Circle3D, Circle3D> unproject_ellipse(const CameraIntrinsics& cam, const Ellipse& e,
                                                double radius);

/// Boundary polygon with `n` vertices, counter-clockwise.
std::vector<Vec2> ellipse_polygon(const Ellipse& e, int n = 64);

/// Intersection over union of the filled ellipses, via 64-gon clipping.
double ellipse_iou(const Ellipse& a, const Ellipse& b);

} // namespace gazekit
