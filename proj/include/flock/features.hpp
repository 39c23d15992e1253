#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flock/keyvalue.hpp"
#include "flock/scene.hpp"
#include "flock/types.hpp"

namespace flock {

inline constexpr int kFeatureCount = 6;

/// Column order of every feature matrix.
enum FeatureColumn : int {
  kInterDistance = 0,
  kTimeDifference = 1,
  kVelocityDifference = 2,
  kMotionAngleDifference = 3,
  kFaceAngleDifference = 4,
  kDtwValue = 5,
};

const char* feature_name(int column);

/// How the pair-level DTW value fills the per-step dtw column.
enum class DtwMode { full_broadcast, prefix };

std::string to_string(DtwMode m);
DtwMode dtw_mode_from(std::string_view s);

/// L x 6 matrix, one row per aligned step.
using FeatureMatrix = Eigen::MatrixXd;

struct PairSample {
  AgentId agent_a = 0;
  AgentId agent_b = 0;
  FeatureMatrix features;
  int label = 0;
};

double inter_distance(const TrajectoryPoint& p, const TrajectoryPoint& q);

struct AbsDiffs {
  double dt_ms = 0.0;
  double dv_mm_s = 0.0;
  double dmotion_rad = 0.0;
  double dface_rad = 0.0;
};

/// Absolute differences; angle differences are circular, in [0, pi].
AbsDiffs scalar_abs_diffs(const TrajectoryPoint& p, const TrajectoryPoint& q);

using Point2 = std::array<double, 2>;

/// Classic DTW, Euclidean local cost, steps (1,0) (0,1) (1,1), both ends
/// matched. Returns the unnormalized optimal cumulative cost.
double dtw_distance(std::span<const Point2> a, std::span<const Point2> b);

/// Cumulative cost of the length-(k+1) prefixes for k = 0..min(n,m)-1.
std::vector<double> dtw_prefix_costs(std::span<const Point2> a, std::span<const Point2> b);

/// Multi-resolution approximation: coarsen by pairwise averaging, solve
/// recursively, then refine inside the projected path widened by radius.
/// Never below the exact value; exact once radius >= max(len a, len b).
double fast_dtw_distance(std::span<const Point2> a, std::span<const Point2> b, int radius = 1);

std::vector<Point2> positions(std::span<const TrajectoryPoint> block);

FeatureMatrix featurize_pair(std::span<const TrajectoryPoint> block_a, std::span<const TrajectoryPoint> block_b,
                             DtwMode mode = DtwMode::full_broadcast);

PairSample featurize(const PairSampleRaw& raw, DtwMode mode = DtwMode::full_broadcast);
std::vector<PairSample> featurize_all(const std::vector<PairSampleRaw>& raw, DtwMode mode = DtwMode::full_broadcast);

// ---------------------------------------------------------------------------

enum class ScalerKind { robust, minmax, standard };

std::string to_string(ScalerKind k);

/// x -> (x - center) / scale. A zero scale marks a degenerate column that
/// maps to zero.
struct ColumnScaler {
  ScalerKind kind = ScalerKind::standard;
  double center = 0.0;
  double scale = 1.0;

  bool degenerate() const { return !(scale > 0.0); }
  friend bool operator==(const ColumnScaler&, const ColumnScaler&) = default;
};

struct ScalerState {
  std::array<ColumnScaler, kFeatureCount> columns{};
  std::size_t fit_samples = 0;
  std::vector<std::string> warnings;  // not part of the persisted state

  bool operator==(const ScalerState& o) const { return columns == o.columns && fit_samples == o.fit_samples; }
};

/// Type-7 (linear interpolation) sample quantile. Sorts a copy.
double quantile_linear(std::vector<double> values, double q);

/// Robust scaler on interDistance, min-max on timeDifference, standard
/// scaling on the rest; statistics pooled over every step of every sample.
ScalerState fit_scalers(std::span<const PairSample> train);

void apply_scalers_inplace(const ScalerState& state, FeatureMatrix& m);
PairSample apply_scalers(const ScalerState& state, const PairSample& sample);
FeatureMatrix inverse_apply(const ScalerState& state, const FeatureMatrix& scaled);

inline constexpr int kScalerFormatVersion = 1;

KeyValues to_key_values(const ScalerState& state);
ScalerState scaler_state_from(const KeyValues& kv);

}  // namespace flock
