#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace flock {

using AgentId = std::int64_t;
using TimestampMs = std::int64_t;

inline constexpr double kPi = 3.14159265358979323846;

/// Maps theta onto the half-open interval [-pi, pi). Throws InvalidAngle
/// for non-finite input.
double normalize_angle(double theta);

/// One tracked sample of a pedestrian. Angles are normalized and the
/// velocity is checked on construction through make().
struct TrajectoryPoint {
  TimestampMs timestamp_ms = 0;
  AgentId agent_id = 0;
  double x_mm = 0.0;
  double y_mm = 0.0;
  double velocity_mm_s = 0.0;
  double motion_angle_rad = 0.0;
  double face_angle_rad = 0.0;

  static TrajectoryPoint make(TimestampMs t, AgentId id, double x, double y, double v,
                              double motion, double face);

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

struct Trajectory {
  AgentId agent_id = 0;
  std::vector<TrajectoryPoint> points;  // strictly increasing timestamp_ms

  std::size_t size() const { return points.size(); }
  TimestampMs first_timestamp() const { return points.front().timestamp_ms; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct GroupAnnotation {
  AgentId pedestrian_id = 0;
  int group_size = 2;
  std::vector<AgentId> partner_ids;
  int interacting_count = 0;
  std::vector<AgentId> interacting_ids;

  friend bool operator==(const GroupAnnotation&, const GroupAnnotation&) = default;
};

struct PairLabel {
  AgentId agent_a = 0;  // agent_a < agent_b
  AgentId agent_b = 0;
  int label = 0;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
  friend auto operator<=>(const PairLabel&, const PairLabel&) = default;
};

/// Returns (min(a,b), max(a,b)); throws InvalidPair when a == b.
std::pair<AgentId, AgentId> canonical_pair(AgentId a, AgentId b);

}  // namespace flock
