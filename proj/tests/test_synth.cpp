#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

#include "gazekit/detect.hpp"
#include "gazekit/error.hpp"
#include "gazekit/gaze_feature.hpp"
#include "gazekit/metrics.hpp"
#include "gazekit/synth.hpp"

using namespace gazekit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gazekit_synth_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("calibration protocol layout") {
    const RigConfig cfg;
    const auto cal = gen_calibration_protocol(cfg);
    REQUIRE(cal.size() == 18);
    std::map<double, int> depths;
    for (const auto& e : cal) {
        depths[std::round(e.target_pos.norm() * 1000) / 1000]++;
        CHECK(e.samples_expected == 30);
        CHECK(e.kind == EventKind::Calibration);
    }
    CHECK(depths[0.4] == 6);
    CHECK(depths[0.65] == 6);
    CHECK(depths[2.0] == 6);
    for (std::size_t i = 0; i < cal.size(); ++i) {
        CHECK(cal[i].start == doctest::Approx(1.5 * i + 0.3));
        CHECK(cal[i].end - cal[i].start == doctest::Approx(30 / cfg.sample_rate_hz));
    }
    // Pentagon vertices 72 degrees apart around the center, 15 degrees out.
    for (int d = 0; d < 3; ++d) {
        for (int k = 1; k <= 5; ++k) {
            const Vec3& p = cal[6 * d + k].target_pos;
            CHECK(eccentricity_deg(p) == doctest::Approx(15.0));
            const Vec3& q = cal[6 * d + (k % 5) + 1].target_pos;
            const double a0 = std::atan2(p.y(), p.x()), a1 = std::atan2(q.y(), q.x());
            double diff = std::remainder(a1 - a0, 2 * std::numbers::pi) * 180 / std::numbers::pi;
            CHECK(std::abs(diff) == doctest::Approx(72.0));
        }
    }
}

TEST_CASE("assessment protocol layout") {
    const RigConfig cfg;
    const auto as = gen_assessment_protocol(cfg);
    REQUIRE(as.size() == 81);
    std::map<int, int> targets_per_ring;
    std::map<int, int> windows;
    for (const auto& e : as) {
        CHECK(e.target_pos.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(e.target_pos.norm() - 1.0) < 1e-9);
        CHECK(e.end - e.start == doctest::Approx(1.0));
        windows[e.target_index]++;
        if (e.repeat == 0) targets_per_ring[eccentricity_bin(e.target_pos)]++;
    }
    CHECK(windows.size() == 27);
    for (const auto& [t, n] : windows) CHECK(n == 3);
    CHECK(targets_per_ring[0] == 3);
    CHECK(targets_per_ring[10] == 8);
    CHECK(targets_per_ring[15] == 8);
    CHECK(targets_per_ring[20] == 8);
    // Ring points are 45 degrees apart.
    const Vec3& a = as[3].target_pos;
    const Vec3& b = as[6].target_pos;
    CHECK(std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x()) == doctest::Approx(std::numbers::pi / 4));
}

TEST_CASE("noiseless simulation emits the exact projections") {
    RigConfig cfg;
    const auto cal = gen_calibration_protocol(cfg);
    const auto as = gen_assessment_protocol(cfg);
    const auto rec = simulate_recording(cfg, cal, as);
    REQUIRE(rec.records.size() == 18 * 30 + 81 * 200);
    REQUIRE(rec.truth.size() == rec.records.size());
    const Mat3 m = cfg.head_to_eye_cam();
    CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0));
    for (std::size_t i = 0; i < rec.records.size(); i += 97) {
        const auto& r = rec.records[i];
        REQUIRE(r.pupil);
        const auto& tr = rec.truth[i];
        // Recompute from the stored truth direction.
        const Vec3 g = m * azel_to_dir(tr.direction);
        const Ellipse e =
            project_circle(cfg.eye_cam, {cfg.eyeball_center + cfg.eyeball_radius * g, g, cfg.pupil_radius});
        CHECK((r.pupil->center - e.center).norm() < 1e-9);
        CHECK(std::abs(r.pupil->semi_major - e.semi_major) < 1e-9);
        CHECK(std::abs(r.pupil->semi_minor - e.semi_minor) < 1e-9);
        CHECK(r.iris->semi_major > r.pupil->semi_major);
    }
    for (std::size_t i = 1; i < rec.records.size(); ++i) CHECK(rec.records[i].timestamp > rec.records[i - 1].timestamp);
}

TEST_CASE("dropout fraction follows dropout_prob") {
    RigConfig cfg;
    cfg.dropout_prob = 0.1;
    cfg.seed = 42;
    const auto rec = simulate_recording(cfg, gen_calibration_protocol(cfg), gen_assessment_protocol(cfg));
    const auto n = std::min<std::size_t>(10000, rec.records.size());
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < n; ++i) dropped += rec.records[i].pupil ? 0 : 1;
    const double frac = static_cast<double>(dropped) / static_cast<double>(n);
    CHECK(frac >= 0.08);
    CHECK(frac <= 0.12);
}

TEST_CASE("aspect ratio falls as gaze turns away from the eye camera") {
    RigConfig cfg;
    const Mat3 m = cfg.head_to_eye_cam();
    // Head direction that points the eye straight at the camera.
    const Vec3 at_cam = m.transpose() * (-cfg.eyeball_center.normalized());
    const Vec3 side = at_cam.cross(Vec3::UnitX()).normalized();
    double prev = 2.0;
    for (int deg = 0; deg <= 50; deg += 5) {
        const Vec3 d = Eigen::AngleAxisd(deg * std::numbers::pi / 180, side) * at_cam;
        const Vec3 g = m * d;
        const Ellipse e =
            project_circle(cfg.eye_cam, {cfg.eyeball_center + cfg.eyeball_radius * g, g, cfg.pupil_radius});
        CHECK(e.aspect_ratio() < prev + 1e-12);
        prev = e.aspect_ratio();
    }
}

TEST_CASE("truth directions score zero error") {
    RigConfig cfg;
    cfg.dropout_prob = 0.2;
    cfg.seed = 5;
    const auto as = gen_assessment_protocol(cfg);
    const auto rec = simulate_recording(cfg, {}, as);
    std::size_t k = 0, dropped = 0, total = 0;
    for (const auto& ev : as) {
        FixationGroup g;
        g.truth = dir_to_azel(ev.target_pos);
        for (; k < rec.truth.size() && ev.contains(rec.truth[k].timestamp); ++k) {
            const auto& t = rec.truth[k];
            g.samples.push_back({t.timestamp, rec.records[k].pupil ? std::optional(t.direction) : std::nullopt});
        }
        const auto gm = evaluate_group(g);
        if (gm.err_acc) CHECK(*gm.err_acc < 1e-9);
        dropped += static_cast<std::size_t>(std::lround(gm.dropout_rate * static_cast<double>(g.samples.size())));
        total += g.samples.size();
    }
    const double frac = static_cast<double>(dropped) / static_cast<double>(total);
    CHECK(frac == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("unviewable targets are reported") {
    RigConfig cfg;
    auto as = gen_assessment_protocol(cfg);
    as[5].target_pos = Vec3(0, -0.2, -1.0);
    try {
        simulate_recording(cfg, {}, as);
        FAIL("expected TargetUnviewable");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TargetUnviewable);
        CHECK(std::string(e.what()).find(as[5].id()) != std::string::npos);
    }
}

TEST_CASE("identical seeds write byte-identical recordings") {
    RigConfig cfg;
    cfg.noise_sigma_px = 0.5;
    cfg.dropout_prob = 0.05;
    cfg.seed = 77;
    cfg.assessment_diameters_deg = {20.0};
    const auto cal = gen_calibration_protocol(cfg);
    const auto as = gen_assessment_protocol(cfg);
    const auto a = scratch("a"), b = scratch("b");
    write_recording(a, cfg, simulate_recording(cfg, cal, as));
    write_recording(b, cfg, simulate_recording(cfg, cal, as));
    for (const char* f : {"meta.json", "ellipses.csv", "ground_truth.csv", "truth.json"})
        CHECK(slurp(a / f) == slurp(b / f));

    cfg.seed = 78;
    const auto c = scratch("c");
    write_recording(c, cfg, simulate_recording(cfg, cal, as));
    CHECK(slurp(a / "ellipses.csv") != slurp(c / "ellipses.csv"));

    const auto back = ingest_recording(a);
    CHECK(back.meta.calibration.size() == 18);
    CHECK(back.meta.assessment.size() == as.size());
    CHECK(back.ellipses.size() == 18 * 30 + as.size() * 200);
    for (auto* p : {&a, &b, &c}) fs::remove_all(*p);
}

TEST_CASE("rendered masks recover the simulated pupil") {
    RigConfig cfg;
    cfg.assessment_diameters_deg = {40.0};
    const auto rec = simulate_recording(cfg, {}, gen_assessment_protocol(cfg));
    for (std::size_t i = 0; i < rec.truth.size(); i += 200) {
        const auto& t = rec.truth[i];
        const cv::Mat mask = render_mask(cfg, t);
        const auto obs = detect_from_mask(SegMask(mask), {});
        REQUIRE(obs.pupil);
        CHECK((obs.pupil->center - t.pupil.center).norm() < 0.5);
        CHECK(obs.pupil->semi_major == doctest::Approx(t.pupil.semi_major).epsilon(0.05));
        const auto native = detect_native(render_frame(mask), {});
        REQUIRE(native.pupil);
        CHECK((native.pupil->center - t.pupil.center).norm() < 0.5);
    }
}

TEST_CASE("noiseless feature-based calibration reaches sub-degree accuracy") {
    RigConfig cfg;
    const auto cal = gen_calibration_protocol(cfg);
    const auto as = gen_assessment_protocol(cfg);
    const auto rec = simulate_recording(cfg, cal, as);
    std::vector<PupilObservation> stream;
    for (const auto& r : rec.records) stream.push_back(accept_direct_ellipse(r, DirectFeature::Pupil, {}));
    temporal_iou_filter(stream, {});

    const auto pairs = build_calib_pairs(stream, cal, cfg.world_cam);
    REQUIRE(pairs.size() == 18);
    const auto mapper = fit_polynomial(pairs, cfg.world_cam);
    CHECK(mapper.fit_residual_rms <= 1.0);

    std::map<int, double> worst;
    for (const auto& t : as) {
        const auto it = std::find_if(stream.begin(), stream.end(), [&](const auto& o) { return t.contains(o.timestamp); });
        REQUIRE(it != stream.end());
        const auto d = map_gaze(mapper, *it);
        REQUIRE(d);
        const double err = angular_distance(*d, dir_to_azel(t.target_pos));
        auto& w = worst[eccentricity_bin(t.target_pos)];
        w = std::max(w, err);
    }
    MESSAGE("worst error by ring: 0=", worst[0], " 10=", worst[10], " 15=", worst[15], " 20=", worst[20]);
    CHECK(worst[0] <= 0.5);
    CHECK(worst[10] <= 0.5);
    CHECK(worst[15] <= 0.5);
    CHECK(worst[20] <= 1.0);
}
