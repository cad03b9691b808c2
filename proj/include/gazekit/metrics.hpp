#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazekit/geom.hpp"

namespace gazekit {

struct GazeSample {
    double timestamp = 0.0;
    std::optional<SphericalDirection> direction; // nullopt marks a dropout
};

struct FixationGroup {
    std::vector<GazeSample> samples;
    SphericalDirection truth;
    int eccentricity_bin = 0;
};

/// Flat is the Euclidean distance in (azimuth, elevation) degrees; GreatCircle
/// is the true angle between the two directions.
enum class DistanceMode { Flat, GreatCircle };

double angular_distance(const SphericalDirection& a, const SphericalDirection& b,
                        DistanceMode mode = DistanceMode::Flat);

struct DropoutResult {
    double rate = 0.0;
    std::vector<GazeSample> retained;
};

/// A sample drops out when it has no direction or its error is >= threshold.
/// Throws Error(EmptyGroup) for a group without samples.
DropoutResult dropout_rate(const FixationGroup& group, double threshold_deg = 10.0,
                           DistanceMode mode = DistanceMode::Flat);

/// Mean distance of the samples to the truth; nullopt when there are none.
std::optional<double> accuracy_error(std::span<const GazeSample> retained, const SphericalDirection& truth,
                                     DistanceMode mode = DistanceMode::Flat);

/// Mean distance of the samples to their own centroid; nullopt below 2 samples.
std::optional<double> precision_error(std::span<const GazeSample> retained,
                                      DistanceMode mode = DistanceMode::Flat);

struct GroupMetrics {
    double dropout_rate = 0.0;
    std::optional<double> err_acc;
    std::optional<double> err_prec;
    int n_retained = 0;
    int n_total = 0;
};

GroupMetrics evaluate_group(const FixationGroup& group, double threshold_deg = 10.0,
                            DistanceMode mode = DistanceMode::Flat);

/// Per-sample error against the truth, nullopt for dropouts.
std::vector<std::optional<double>> sample_errors(const FixationGroup& group,
                                                 DistanceMode mode = DistanceMode::Flat);

struct SweepPoint {
    double threshold = 0.0;
    double retained_pct = 0.0;
};

/// Percentage of samples whose error is defined and strictly below each
/// threshold, for thresholds 0, step, ... up to max_deg inclusive.
std::vector<SweepPoint> threshold_sweep(std::span<const std::optional<double>> errors, double max_deg = 50.0,
                                        double step_deg = 1.0);

/// One metric value of one fixation group, tagged with everything it is aggregated by.
struct MetricRecord {
    std::string detector;
    std::string gazer;
    std::string resolution;
    int eccentricity = 0;
    std::string subject;
    std::string metric; // dropout_rate, err_acc or err_prec
    std::optional<double> value;
};

struct SummaryRow {
    std::string detector;
    std::string gazer;
    std::string resolution;
    std::optional<int> eccentricity; // nullopt when pooled over eccentricities
    std::string metric;
    double mean = 0.0;
    double std_error = 0.0;
    double ci95 = 0.0;
    int n_subjects = 0;
};

/// Subject means first, then the mean and standard error across subjects.
/// Absent values are skipped; a cell left with no subjects produces no row.
/// Output is sorted by key and independent of input order.
std::vector<SummaryRow> aggregate(std::span<const MetricRecord> records, bool by_eccentricity);

} // namespace gazekit
