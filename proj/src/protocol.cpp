#include "gazekit/protocol.hpp"

#include <array>
#include <cmath>

namespace gazekit {

std::string to_string(EventKind kind) {
    return kind == EventKind::Calibration ? "calibration" : "assessment";
}

std::string ProtocolEvent::id() const {
    std::string s = to_string(kind) + "/" + std::to_string(target_index);
    if (kind == EventKind::Assessment) s += "." + std::to_string(repeat);
    return s;
}

double eccentricity_deg(const Vec3& target_pos) {
    return angle_between_deg(target_pos, Vec3::UnitZ());
}

int eccentricity_bin(const Vec3& target_pos) {
    static constexpr std::array<int, 4> rings{0, 10, 15, 20};
    const double ecc = eccentricity_deg(target_pos);
    int best = rings[0];
    for (int r : rings)
        if (std::abs(ecc - r) < std::abs(ecc - best)) best = r;
    return best;
}

} // namespace gazekit
