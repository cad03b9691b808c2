#include "gazekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "gazekit/error.hpp"

namespace gazekit {

namespace {

// Sorted summation makes folds independent of input order.
double sorted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

double angular_distance(const SphericalDirection& a, const SphericalDirection& b, DistanceMode mode) {
    if (mode == DistanceMode::GreatCircle) return angle_between_deg(azel_to_dir(a), azel_to_dir(b));
    return std::hypot(a.azimuth - b.azimuth, a.elevation - b.elevation);
}

DropoutResult dropout_rate(const FixationGroup& group, double threshold_deg, DistanceMode mode) {
    if (group.samples.empty()) throw Error(ErrorKind::EmptyGroup, "fixation group has no samples");
    DropoutResult r;
    for (const auto& s : group.samples) {
        if (s.direction && angular_distance(group.truth, *s.direction, mode) < threshold_deg)
            r.retained.push_back(s);
    }
    const double total = static_cast<double>(group.samples.size());
    r.rate = (total - static_cast<double>(r.retained.size())) / total;
    return r;
}

std::optional<double> accuracy_error(std::span<const GazeSample> retained, const SphericalDirection& truth,
                                     DistanceMode mode) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : retained) {
        if (!s.direction) continue;
        sum += angular_distance(truth, *s.direction, mode);
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> precision_error(std::span<const GazeSample> retained, DistanceMode mode) {
    double sa = 0.0, se = 0.0;
    int n = 0;
    for (const auto& s : retained) {
        if (!s.direction) continue;
        sa += s.direction->azimuth;
        se += s.direction->elevation;
        ++n;
    }
    if (n < 2) return std::nullopt;
    const SphericalDirection centroid{sa / n, se / n};
    double sum = 0.0;
    for (const auto& s : retained)
        if (s.direction) sum += angular_distance(centroid, *s.direction, mode);
    return sum / n;
}

GroupMetrics evaluate_group(const FixationGroup& group, double threshold_deg, DistanceMode mode) {
    const auto d = dropout_rate(group, threshold_deg, mode);
    GroupMetrics m;
    m.dropout_rate = d.rate;
    m.err_acc = accuracy_error(d.retained, group.truth, mode);
    m.err_prec = precision_error(d.retained, mode);
    m.n_retained = static_cast<int>(d.retained.size());
    m.n_total = static_cast<int>(group.samples.size());
    return m;
}

std::vector<std::optional<double>> sample_errors(const FixationGroup& group, DistanceMode mode) {
    std::vector<std::optional<double>> out;
    out.reserve(group.samples.size());
    for (const auto& s : group.samples) {
        if (s.direction) out.emplace_back(angular_distance(group.truth, *s.direction, mode));
        else out.emplace_back(std::nullopt);
    }
    return out;
}

std::vector<SweepPoint> threshold_sweep(std::span<const std::optional<double>> errors, double max_deg,
                                        double step_deg) {
    if (!(step_deg > 0)) throw Error(ErrorKind::InvalidParams, "sweep step must be positive");
    std::vector<double> defined;
    for (const auto& e : errors)
        if (e) defined.push_back(*e);
    std::sort(defined.begin(), defined.end());
    const double total = static_cast<double>(errors.size());

    std::vector<SweepPoint> curve;
    const int steps = static_cast<int>(std::floor(max_deg / step_deg + 1e-9));
    for (int i = 0; i <= steps; ++i) {
        const double t = i * step_deg;
        const auto below = std::lower_bound(defined.begin(), defined.end(), t) - defined.begin();
        curve.push_back({t, total > 0 ? 100.0 * static_cast<double>(below) / total : 0.0});
    }
    return curve;
}

std::vector<SummaryRow> aggregate(std::span<const MetricRecord> records, bool by_eccentricity) {
    using Key = std::tuple<std::string, std::string, std::string, int, std::string>;
    std::map<Key, std::map<std::string, std::vector<double>>> cells;
    for (const auto& r : records) {
        if (!r.value) continue;
        const Key key{r.detector, r.gazer, r.resolution, by_eccentricity ? r.eccentricity : -1, r.metric};
        cells[key][r.subject].push_back(*r.value);
    }

    std::vector<SummaryRow> rows;
    for (auto& [key, subjects] : cells) {
        std::vector<double> means;
        for (auto& [subject, values] : subjects) means.push_back(sorted_mean(values));
        const auto k = static_cast<double>(means.size());
        const double mean = sorted_mean(means);
        double se = 0.0;
        if (means.size() > 1) {
            std::vector<double> sq;
            for (double m : means) sq.push_back((m - mean) * (m - mean));
            std::sort(sq.begin(), sq.end());
            const double var = std::accumulate(sq.begin(), sq.end(), 0.0) / (k - 1.0);
            se = std::sqrt(var) / std::sqrt(k);
        }
        SummaryRow row;
        row.detector = std::get<0>(key);
        row.gazer = std::get<1>(key);
        row.resolution = std::get<2>(key);
        if (by_eccentricity) row.eccentricity = std::get<3>(key);
        row.metric = std::get<4>(key);
        row.mean = mean;
        row.std_error = se;
        row.ci95 = 1.96 * se;
        row.n_subjects = static_cast<int>(means.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace gazekit
