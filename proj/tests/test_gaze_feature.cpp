#include "doctest.h"

#include <algorithm>
#include <random>

#include "gazekit/error.hpp"
#include "gazekit/gaze_feature.hpp"

using namespace gazekit;

namespace {

const CameraIntrinsics kWorld = CameraIntrinsics::from_hfov(640, 480, 100.0);

constexpr std::array<double, 6> kTruthX{310.0, 2.1, -0.3, 0.004, 0.002, -0.001};
constexpr std::array<double, 6> kTruthY{250.0, 0.2, 1.8, -0.0015, 0.003, 0.0025};

double quad(const std::array<double, 6>& c, double u, double v) {
    return c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v;
}

std::vector<CalibPair> exact_pairs(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(40.0, 150.0);
    std::vector<CalibPair> pairs;
    for (int i = 0; i < n; ++i) {
        const double u = pos(rng), v = pos(rng);
        pairs.push_back({Vec2(u, v), Vec2(quad(kTruthX, u, v), quad(kTruthY, u, v)), Vec3::UnitZ()});
    }
    return pairs;
}

PupilObservation at(const Vec2& c) {
    PupilObservation o;
    o.pupil = Ellipse::make(c, 10, 8, 0);
    o.status = ObservationStatus::Detected;
    o.confidence = 1.0;
    return o;
}

} // namespace

TEST_CASE("fit_polynomial recovers an exact quadratic map") {
    const auto pairs = exact_pairs(18, 1);
    const auto m = fit_polynomial(pairs, kWorld);
    for (int i = 0; i < 6; ++i) {
        CHECK(m.coeffs_x[i] == doctest::Approx(kTruthX[i]).epsilon(1e-6));
        CHECK(m.coeffs_y[i] == doctest::Approx(kTruthY[i]).epsilon(1e-6));
    }
    CHECK(m.fit_residual_rms <= 1e-6);
    CHECK(m.fit_residual_rms >= 0.0);
}

TEST_CASE("fit_polynomial rejects under-determined and degenerate input") {
    const auto pairs = exact_pairs(5, 2);
    CHECK_THROWS_AS(fit_polynomial(pairs, kWorld), Error);
    try {
        fit_polynomial(pairs, kWorld);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateCalibration);
    }

    // Ten points on one line: rank 3.
    std::vector<CalibPair> line;
    for (int i = 0; i < 10; ++i) line.push_back({Vec2(50 + i, 60 + 2 * i), Vec2(i, i), Vec3::UnitZ()});
    try {
        fit_polynomial(line, kWorld);
        FAIL("expected DegenerateCalibration");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateCalibration);
        CHECK(std::string(e.what()).find("rank 3") != std::string::npos);
    }

    // Points on a circle satisfy u^2 + v^2 = const, which removes one rank.
    std::vector<CalibPair> circle;
    for (int i = 0; i < 12; ++i) {
        const double t = i * 0.5;
        circle.push_back({Vec2(100 + 30 * std::cos(t), 100 + 30 * std::sin(t)), Vec2(i, -i), Vec3::UnitZ()});
    }
    CHECK_THROWS_AS(fit_polynomial(circle, kWorld), Error);
}

TEST_CASE("fit_polynomial is invariant to pair order") {
    std::mt19937_64 rng(7);
    auto pairs = exact_pairs(30, 3);
    std::normal_distribution<double> noise(0.0, 2.0);
    for (auto& p : pairs) p.target_scene_px += Vec2(noise(rng), noise(rng));
    const auto ref = fit_polynomial(pairs, kWorld);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(pairs.begin(), pairs.end(), rng);
        const auto m = fit_polynomial(pairs, kWorld);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(m.coeffs_x[i] - ref.coeffs_x[i]) < 1e-9);
            CHECK(std::abs(m.coeffs_y[i] - ref.coeffs_y[i]) < 1e-9);
        }
    }
}

TEST_CASE("adding a pair on the fitted surface does not raise the residual") {
    std::mt19937_64 rng(11);
    auto pairs = exact_pairs(12, 4);
    std::normal_distribution<double> noise(0.0, 3.0);
    for (auto& p : pairs) p.target_scene_px += Vec2(noise(rng), noise(rng));
    auto m = fit_polynomial(pairs, kWorld);
    std::uniform_real_distribution<double> pos(40.0, 150.0);
    for (int k = 0; k < 20; ++k) {
        const Vec2 q(pos(rng), pos(rng));
        pairs.push_back({q, m.scene_point(q), Vec3::UnitZ()});
        const auto next = fit_polynomial(pairs, kWorld);
        CHECK(next.fit_residual_rms <= m.fit_residual_rms + 1e-9);
        m = next;
    }
}

TEST_CASE("translating all pupil centers is absorbed by the basis") {
    std::mt19937_64 rng(5);
    auto pairs = exact_pairs(18, 6);
    std::normal_distribution<double> noise(0.0, 1.5);
    for (auto& p : pairs) p.target_scene_px += Vec2(noise(rng), noise(rng));
    const auto m = fit_polynomial(pairs, kWorld);
    const Vec2 delta(13.5, -7.25);
    for (auto& p : pairs) p.pupil_center += delta;
    const auto moved = fit_polynomial(pairs, kWorld);
    std::uniform_real_distribution<double> pos(40.0, 150.0);
    for (int k = 0; k < 50; ++k) {
        const Vec2 q(pos(rng), pos(rng));
        CHECK((moved.scene_point(q + delta) - m.scene_point(q)).norm() < 1e-6);
    }
}

TEST_CASE("map_gaze") {
    PolyMapper id;
    id.world_cam = kWorld;
    id.coeffs_x = {0, 1, 0, 0, 0, 0};
    id.coeffs_y = {0, 0, 1, 0, 0, 0};
    const auto d = map_gaze(id, at(kWorld.principal_point));
    REQUIRE(d);
    CHECK(d->azimuth == doctest::Approx(0.0));
    CHECK(d->elevation == doctest::Approx(0.0));

    // Upper-right of the scene image is up and to the right in head terms.
    const auto ur = map_gaze(id, at(kWorld.principal_point + Vec2(100, -100)));
    REQUIRE(ur);
    CHECK(ur->azimuth > 0);
    CHECK(ur->elevation > 0);

    PupilObservation none;
    CHECK_FALSE(map_gaze(id, none).has_value());
}

TEST_CASE("build_calib_pairs averages eligible samples per event") {
    std::vector<ProtocolEvent> events(2);
    events[0].target_index = 0;
    events[0].target_pos = Vec3(0, 0, 1);
    events[0].start = 0.0;
    events[0].end = 1.0;
    events[1].target_index = 1;
    events[1].target_pos = Vec3(0.2, 0.1, 2.0);
    events[1].start = 2.0;
    events[1].end = 3.0;

    std::vector<PupilObservation> stream;
    for (int i = 0; i < 4; ++i) {
        auto o = at(Vec2(10 + i, 20));
        o.timestamp = 0.1 + 0.2 * i;
        o.calibration_eligible = i != 3;
        stream.push_back(o);
    }
    auto outside = at(Vec2(500, 500));
    outside.timestamp = 1.5;
    outside.calibration_eligible = true;
    stream.push_back(outside);

    const auto pairs = build_calib_pairs(stream, events, kWorld);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].pupil_center.x() == doctest::Approx(11.0));
    CHECK(pairs[0].pupil_center.y() == doctest::Approx(20.0));
    CHECK((pairs[0].target_scene_px - kWorld.principal_point).norm() < 1e-9);

    const auto raw = build_calib_pairs(stream, events, kWorld, true);
    CHECK(raw.size() == 3);

    // Scene pixel is the world-camera image of the 3D target.
    const Vec2 px = head_to_scene_pixel(kWorld, events[1].target_pos);
    const Vec3 back = scene_pixel_to_head_dir(kWorld, px);
    CHECK(angle_between_deg(back, events[1].target_pos) < 1e-9);
    CHECK(px.y() < kWorld.principal_point.y());
}
