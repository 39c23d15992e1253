#include "flock/types.hpp"

#include <cmath>
#include <string>

#include "flock/error.hpp"

namespace flock {

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) throw InvalidAngle("angle is not finite");
  if (theta >= -kPi && theta < kPi) return theta;
  constexpr double two_pi = 2.0 * kPi;
  double r = std::fmod(theta + kPi, two_pi);
  if (r < 0.0) r += two_pi;
  double out = r - kPi;
  // fmod can land exactly on 2*pi after the shift for tiny negative r
  if (out >= kPi) out -= two_pi;
  if (out < -kPi) out = -kPi;
  return out;
}

TrajectoryPoint TrajectoryPoint::make(TimestampMs t, AgentId id, double x, double y, double v,
                                      double motion, double face) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(v))
    throw InvalidInput("trajectory point has non-finite field (agent " + std::to_string(id) + ")");
  if (v < 0.0)
    throw InvalidInput("negative velocity for agent " + std::to_string(id));
  return TrajectoryPoint{t, id, x, y, v, normalize_angle(motion), normalize_angle(face)};
}

std::pair<AgentId, AgentId> canonical_pair(AgentId a, AgentId b) {
  if (a == b) throw InvalidPair("pair of identical agents " + std::to_string(a));
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

}  // namespace flock
