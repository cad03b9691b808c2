#pragma once

#include <string>
#include <vector>

#include "gazekit/geom.hpp"

namespace gazekit {

enum class EventKind { Calibration, Assessment };

std::string to_string(EventKind kind);

/// One fixation window on one target. Assessment targets are shown three times,
/// so they appear as three events sharing a target_index.
struct ProtocolEvent {
    EventKind kind = EventKind::Calibration;
    int target_index = 0;
    int repeat = 0;
    Vec3 target_pos = Vec3::UnitZ(); // meters, head frame
    double start = 0.0;              // seconds
    double end = 0.0;
    int samples_expected = 0;

    bool contains(double t) const { return t >= start && t < end; }

    /// Stable name used in error messages and reports, e.g. "calibration/3" or "assessment/12.2".
    std::string id() const;
};

/// Angular distance of the target from straight ahead, degrees.
double eccentricity_deg(const Vec3& target_pos);

/// Nearest of the protocol rings {0, 10, 15, 20}.
int eccentricity_bin(const Vec3& target_pos);

} // namespace gazekit
