#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "gazekit/error.hpp"
#include "gazekit/metrics.hpp"

using namespace gazekit;

namespace {

GazeSample sample(double az, double el) { return {0.0, SphericalDirection{az, el}}; }
GazeSample lost() { return {0.0, std::nullopt}; }

FixationGroup group_with_errors(std::initializer_list<double> errs) {
    FixationGroup g;
    for (double e : errs) g.samples.push_back(sample(e, 0.0));
    return g;
}

} // namespace

TEST_CASE("dropout_rate examples") {
    const auto g = group_with_errors({1, 5, 12, 50});
    const auto r = dropout_rate(g, 10.0);
    CHECK(r.rate == 0.5);
    REQUIRE(r.retained.size() == 2);
    CHECK(r.retained[0].direction->azimuth == 1.0);
    CHECK(r.retained[1].direction->azimuth == 5.0);

    FixationGroup all_lost;
    all_lost.samples = {lost(), lost(), lost()};
    const auto a = dropout_rate(all_lost);
    CHECK(a.rate == 1.0);
    CHECK(a.retained.empty());

    CHECK(dropout_rate(g, 0.0).rate == 1.0);
    // Exactly at the threshold counts as a dropout.
    CHECK(dropout_rate(group_with_errors({10.0}), 10.0).rate == 1.0);

    FixationGroup empty;
    try {
        dropout_rate(empty);
        FAIL("expected EmptyGroup");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyGroup);
    }
}

TEST_CASE("accuracy_error examples") {
    const SphericalDirection truth{0, 0};
    const std::vector<GazeSample> one{sample(0, 0)};
    CHECK(*accuracy_error(one, truth) == 0.0);
    const std::vector<GazeSample> two{sample(3, 4), sample(0, 0)};
    CHECK(*accuracy_error(two, truth) == doctest::Approx(2.5));
    const std::vector<GazeSample> sym{sample(1, 0), sample(-1, 0)};
    CHECK(*accuracy_error(sym, truth) == doctest::Approx(1.0));
    CHECK_FALSE(accuracy_error(std::vector<GazeSample>{}, truth).has_value());
}

TEST_CASE("precision_error examples") {
    const std::vector<GazeSample> same{sample(2, 3), sample(2, 3), sample(2, 3)};
    CHECK(*precision_error(same) == 0.0);
    const std::vector<GazeSample> pair{sample(1, 0), sample(-1, 0)};
    CHECK(*precision_error(pair) == doctest::Approx(1.0));
    const std::vector<GazeSample> square{sample(0, 0), sample(2, 0), sample(0, 2), sample(2, 2)};
    CHECK(*precision_error(square) == doctest::Approx(1.4142135623730951));
    CHECK_FALSE(precision_error(std::vector<GazeSample>{sample(1, 1)}).has_value());
}

TEST_CASE("metric invariants under permutation and translation") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GazeSample> s;
        for (int i = 0; i < 25; ++i) s.push_back(sample(n(rng), n(rng)));
        const SphericalDirection truth{0.5, -0.25};
        const double acc = *accuracy_error(s, truth);
        const double prec = *precision_error(s);

        auto shuffled = s;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(*accuracy_error(shuffled, truth) == doctest::Approx(acc).epsilon(1e-12));
        CHECK(*precision_error(shuffled) == doctest::Approx(prec).epsilon(1e-12));

        const double da = n(rng), de = n(rng);
        auto moved = s;
        for (auto& m : moved) {
            m.direction->azimuth += da;
            m.direction->elevation += de;
        }
        CHECK(std::abs(*precision_error(moved) - prec) < 1e-12);
        CHECK(std::abs(*accuracy_error(moved, truth) - acc) <= std::hypot(da, de) + 1e-12);
    }

    std::vector<GazeSample> at_truth(5, sample(1.0, 2.0));
    for (auto& m : at_truth) {
        m.direction->azimuth += 3.0;
        m.direction->elevation -= 4.0;
    }
    CHECK(*accuracy_error(at_truth, {1.0, 2.0}) == doctest::Approx(5.0));
}

TEST_CASE("dropout rate and retained fraction sum to one") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-15.0, 15.0);
    std::bernoulli_distribution drop(0.2);
    for (int trial = 0; trial < 200; ++trial) {
        FixationGroup g;
        for (int i = 0; i < 1 + trial % 40; ++i) g.samples.push_back(drop(rng) ? lost() : sample(u(rng), u(rng)));
        const auto r = dropout_rate(g);
        const double retained = static_cast<double>(r.retained.size()) / static_cast<double>(g.samples.size());
        CHECK(r.rate + retained == 1.0);
    }
}

TEST_CASE("threshold_sweep") {
    const std::vector<std::optional<double>> errs{1.0, 5.0, 12.0, 50.0};
    const auto c = threshold_sweep(errs, 51.0);
    REQUIRE(c.size() == 52);
    CHECK(c[0].retained_pct == 0.0);
    CHECK(c[10].retained_pct == 50.0);
    CHECK(c[51].retained_pct == 100.0);
    CHECK(c[50].retained_pct == 75.0);

    std::mt19937_64 rng(9);
    std::exponential_distribution<double> ex(0.2);
    std::bernoulli_distribution drop(0.1);
    std::vector<std::optional<double>> many;
    for (int i = 0; i < 500; ++i) many.push_back(drop(rng) ? std::nullopt : std::optional<double>(ex(rng)));
    const auto curve = threshold_sweep(many, 500.0);
    CHECK(curve.front().retained_pct == 0.0);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].retained_pct >= curve[i - 1].retained_pct);
    CHECK(curve.back().retained_pct < 100.0);
}

TEST_CASE("great-circle distance is close to the flat formula near the center") {
    const SphericalDirection a{0, 0}, b{3, 4};
    CHECK(angular_distance(a, b, DistanceMode::GreatCircle) == doctest::Approx(5.0).epsilon(0.01));
    const SphericalDirection c{20, 0}, d{20, 1};
    CHECK(angular_distance(c, d, DistanceMode::GreatCircle) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("aggregate") {
    std::vector<MetricRecord> one{{"native", "feature", "192", 10, "s1", "err_acc", 1.5}};
    auto rows = aggregate(one, true);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean == 1.5);
    CHECK(rows[0].std_error == 0.0);
    CHECK(rows[0].n_subjects == 1);
    CHECK(rows[0].eccentricity == 10);

    // Subject means {2, 4}: the first subject has two groups averaging to 2.
    std::vector<MetricRecord> recs{
        {"native", "feature", "192", 0, "s1", "err_acc", 1.0},
        {"native", "feature", "192", 10, "s1", "err_acc", 3.0},
        {"native", "feature", "192", 0, "s2", "err_acc", 4.0},
        {"native", "feature", "192", 0, "s2", "err_prec", std::nullopt},
    };
    rows = aggregate(recs, false);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean == doctest::Approx(3.0));
    CHECK(rows[0].std_error == doctest::Approx(1.0));
    CHECK(rows[0].ci95 == doctest::Approx(1.96));
    CHECK(rows[0].n_subjects == 2);
    CHECK_FALSE(rows[0].eccentricity.has_value());

    auto reversed = recs;
    std::reverse(reversed.begin(), reversed.end());
    const auto again = aggregate(reversed, true);
    const auto fwd = aggregate(recs, true);
    REQUIRE(again.size() == fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        CHECK(again[i].mean == fwd[i].mean);
        CHECK(again[i].std_error == fwd[i].std_error);
    }
}
