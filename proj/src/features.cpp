#include "flock/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flock/error.hpp"

namespace flock {

const char* feature_name(int column) {
  static constexpr const char* names[kFeatureCount] = {
      "interDistance", "timeDifference", "velocityDifference", "motionAngleDifference", "faceAngleDifference",
      "dtwValues"};
  return column >= 0 && column < kFeatureCount ? names[column] : "?";
}

std::string to_string(DtwMode m) { return m == DtwMode::prefix ? "prefix" : "full_broadcast"; }

DtwMode dtw_mode_from(std::string_view s) {
  if (s == "full_broadcast" || s == "full") return DtwMode::full_broadcast;
  if (s == "prefix") return DtwMode::prefix;
  throw InvalidConfig("unknown dtw mode '" + std::string(s) + "'");
}

double inter_distance(const TrajectoryPoint& p, const TrajectoryPoint& q) {
  return std::hypot(p.x_mm - q.x_mm, p.y_mm - q.y_mm);
}

AbsDiffs scalar_abs_diffs(const TrajectoryPoint& p, const TrajectoryPoint& q) {
  AbsDiffs d;
  d.dt_ms = std::fabs(static_cast<double>(p.timestamp_ms - q.timestamp_ms));
  d.dv_mm_s = std::fabs(p.velocity_mm_s - q.velocity_mm_s);
  d.dmotion_rad = std::fabs(normalize_angle(p.motion_angle_rad - q.motion_angle_rad));
  d.dface_rad = std::fabs(normalize_angle(p.face_angle_rad - q.face_angle_rad));
  return d;
}

// ---------------------------------------------------------------------------
// DTW

namespace {

inline double point_cost(const Point2& a, const Point2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

void require_non_empty(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.empty() || b.empty()) throw InvalidInput("DTW needs non-empty sequences");
}

/// Admissible columns [lo[i], hi[i]] per row.
struct Window {
  std::vector<int> lo, hi;
};

Window full_window(int n, int m) { return {std::vector<int>(n, 0), std::vector<int>(n, m - 1)}; }

/// Cumulative-cost DTW restricted to a window; optionally returns the path.
double windowed_dtw(std::span<const Point2> a, std::span<const Point2> b, const Window& w,
                    std::vector<std::pair<int, int>>* path) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(a.size());
  std::vector<std::vector<double>> D(n);
  auto at = [&](int i, int j) -> double {
    if (i < 0 || j < 0) return (i < 0 && j < 0) ? 0.0 : inf;
    if (j < w.lo[i] || j > w.hi[i]) return inf;
    return D[i][j - w.lo[i]];
  };
  for (int i = 0; i < n; ++i) {
    D[i].assign(static_cast<std::size_t>(w.hi[i] - w.lo[i] + 1), inf);
    for (int j = w.lo[i]; j <= w.hi[i]; ++j) {
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)});
        if (i == 0) best = at(i, j - 1);
        if (j == 0) best = at(i - 1, j);
      }
      D[i][j - w.lo[i]] = best + point_cost(a[i], b[j]);
    }
  }
  const int m = static_cast<int>(b.size());
  const double total = at(n - 1, m - 1);
  if (path) {
    path->clear();
    int i = n - 1, j = m - 1;
    path->emplace_back(i, j);
    while (i > 0 || j > 0) {
      if (i == 0) {
        --j;
      } else if (j == 0) {
        --i;
      } else {
        const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
        if (diag <= up && diag <= left) {
          --i;
          --j;
        } else if (up <= left) {
          --i;
        } else {
          --j;
        }
      }
      path->emplace_back(i, j);
    }
    std::reverse(path->begin(), path->end());
  }
  return total;
}

std::vector<Point2> reduce_by_half(std::span<const Point2> x) {
  std::vector<Point2> out;
  out.reserve(x.size() / 2);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2)
    out.push_back({0.5 * (x[i][0] + x[i + 1][0]), 0.5 * (x[i][1] + x[i + 1][1])});
  return out;
}

Window expand_window(const std::vector<std::pair<int, int>>& low_path, int n, int m, int radius) {
  Window w{std::vector<int>(n, std::numeric_limits<int>::max()), std::vector<int>(n, -1)};
  for (const auto& [i, j] : low_path) {
    for (int di = -radius; di <= radius; ++di) {
      const int li = i + di;
      const int c0 = std::max(0, 2 * (j - radius));
      const int c1 = std::min(m - 1, 2 * (j + radius) + 1);
      if (c0 > c1) continue;
      for (int r = 2 * li; r <= 2 * li + 1; ++r) {
        if (r < 0 || r >= n) continue;
        w.lo[r] = std::min(w.lo[r], c0);
        w.hi[r] = std::max(w.hi[r], c1);
      }
    }
  }
  // rows left uncovered inherit their neighbour so the band stays connected
  for (int r = 0; r < n; ++r) {
    if (w.hi[r] >= 0) continue;
    w.lo[r] = r > 0 ? w.lo[r - 1] : 0;
    w.hi[r] = r > 0 ? w.hi[r - 1] : 0;
  }
  w.lo[0] = 0;
  w.hi[n - 1] = m - 1;
  return w;
}

double fast_dtw_recursive(std::span<const Point2> a, std::span<const Point2> b, int radius,
                          std::vector<std::pair<int, int>>* path) {
  const auto min_size = static_cast<std::size_t>(radius) + 2;
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  if (a.size() < min_size || b.size() < min_size) return windowed_dtw(a, b, full_window(n, m), path);
  const auto a_low = reduce_by_half(a);
  const auto b_low = reduce_by_half(b);
  std::vector<std::pair<int, int>> low_path;
  fast_dtw_recursive(a_low, b_low, radius, &low_path);
  return windowed_dtw(a, b, expand_window(low_path, n, m, radius), path);
}

}  // namespace

double dtw_distance(std::span<const Point2> a, std::span<const Point2> b) {
  require_non_empty(a, b);
  const std::size_t m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else if (i == 0) best = cur[j - 1];
      else if (j == 0) best = prev[j];
      else best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = best + point_cost(a[i], b[j]);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

std::vector<double> dtw_prefix_costs(std::span<const Point2> a, std::span<const Point2> b) {
  require_non_empty(a, b);
  const std::size_t m = b.size();
  const std::size_t k = std::min(a.size(), m);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m, inf), cur(m, inf), diag;
  diag.reserve(k);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double best;
      if (i == 0 && j == 0) best = 0.0;
      else if (i == 0) best = cur[j - 1];
      else if (j == 0) best = prev[j];
      else best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = best + point_cost(a[i], b[j]);
    }
    if (i < k) diag.push_back(cur[i]);
    std::swap(prev, cur);
  }
  return diag;
}

double fast_dtw_distance(std::span<const Point2> a, std::span<const Point2> b, int radius) {
  require_non_empty(a, b);
  if (radius < 1) throw InvalidInput("fast DTW radius must be >= 1");
  return fast_dtw_recursive(a, b, radius, nullptr);
}

std::vector<Point2> positions(std::span<const TrajectoryPoint> block) {
  std::vector<Point2> out;
  out.reserve(block.size());
  for (const auto& p : block) out.push_back({p.x_mm, p.y_mm});
  return out;
}

FeatureMatrix featurize_pair(std::span<const TrajectoryPoint> block_a, std::span<const TrajectoryPoint> block_b,
                             DtwMode mode) {
  if (block_a.size() != block_b.size())
    throw InvalidInput("pair blocks differ in length: " + std::to_string(block_a.size()) + " vs " +
                       std::to_string(block_b.size()));
  if (block_a.empty()) throw InvalidInput("empty pair blocks");
  const auto L = static_cast<Eigen::Index>(block_a.size());
  FeatureMatrix f(L, kFeatureCount);
  for (Eigen::Index k = 0; k < L; ++k) {
    const auto& p = block_a[static_cast<std::size_t>(k)];
    const auto& q = block_b[static_cast<std::size_t>(k)];
    const auto d = scalar_abs_diffs(p, q);
    f(k, kInterDistance) = inter_distance(p, q);
    f(k, kTimeDifference) = d.dt_ms;
    f(k, kVelocityDifference) = d.dv_mm_s;
    f(k, kMotionAngleDifference) = d.dmotion_rad;
    f(k, kFaceAngleDifference) = d.dface_rad;
  }
  const auto pa = positions(block_a), pb = positions(block_b);
  if (mode == DtwMode::full_broadcast) {
    f.col(kDtwValue).setConstant(dtw_distance(pa, pb));
  } else {
    const auto prefix = dtw_prefix_costs(pa, pb);
    for (Eigen::Index k = 0; k < L; ++k) f(k, kDtwValue) = prefix[static_cast<std::size_t>(k)];
  }
  if (!f.allFinite()) throw InvalidInput("non-finite pair features");
  return f;
}

PairSample featurize(const PairSampleRaw& raw, DtwMode mode) {
  return PairSample{raw.agent_a, raw.agent_b, featurize_pair(raw.block_a, raw.block_b, mode), raw.label};
}

std::vector<PairSample> featurize_all(const std::vector<PairSampleRaw>& raw, DtwMode mode) {
  std::vector<PairSample> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(featurize(r, mode));
  return out;
}

// ---------------------------------------------------------------------------
// Scalers

std::string to_string(ScalerKind k) {
  switch (k) {
    case ScalerKind::robust: return "robust";
    case ScalerKind::minmax: return "minmax";
    case ScalerKind::standard: return "standard";
  }
  return "standard";
}

namespace {

ScalerKind scaler_kind_from(std::string_view s) {
  if (s == "robust") return ScalerKind::robust;
  if (s == "minmax") return ScalerKind::minmax;
  if (s == "standard") return ScalerKind::standard;
  throw InvalidInput("unknown scaler kind '" + std::string(s) + "'");
}

constexpr std::array<ScalerKind, kFeatureCount> kColumnKinds = {
    ScalerKind::robust,   ScalerKind::minmax,   ScalerKind::standard,
    ScalerKind::standard, ScalerKind::standard, ScalerKind::standard};

}  // namespace

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw CannotFit("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ScalerState fit_scalers(std::span<const PairSample> train) {
  if (train.empty()) throw CannotFit("cannot fit scalers on an empty training set");
  std::size_t rows = 0;
  for (const auto& s : train) {
    if (s.features.cols() != kFeatureCount) throw InvalidInput("feature matrix must have 6 columns");
    rows += static_cast<std::size_t>(s.features.rows());
  }
  if (rows == 0) throw CannotFit("training samples have no steps");

  ScalerState state;
  state.fit_samples = train.size();
  std::vector<double> col(rows);
  for (int c = 0; c < kFeatureCount; ++c) {
    std::size_t k = 0;
    for (const auto& s : train)
      for (Eigen::Index r = 0; r < s.features.rows(); ++r) col[k++] = s.features(r, c);

    ColumnScaler cs;
    cs.kind = kColumnKinds[static_cast<std::size_t>(c)];
    switch (cs.kind) {
      case ScalerKind::robust: {
        cs.center = quantile_linear(col, 0.5);
        cs.scale = quantile_linear(col, 0.75) - quantile_linear(col, 0.25);
        break;
      }
      case ScalerKind::minmax: {
        const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
        cs.center = *mn;
        cs.scale = *mx - *mn;
        break;
      }
      case ScalerKind::standard: {
        const double n = static_cast<double>(col.size());
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        cs.center = mean;
        cs.scale = std::sqrt(ss / n);
        break;
      }
    }
    if (!std::isfinite(cs.center) || !std::isfinite(cs.scale)) throw CannotFit("non-finite scaler statistics");
    if (cs.degenerate()) {
      cs.scale = 0.0;
      state.warnings.push_back(std::string("degenerate ") + to_string(cs.kind) + " scale for column " +
                               feature_name(c) + "; column maps to zero");
    }
    state.columns[static_cast<std::size_t>(c)] = cs;
  }
  return state;
}

void apply_scalers_inplace(const ScalerState& state, FeatureMatrix& m) {
  if (m.cols() != kFeatureCount) throw InvalidInput("feature matrix must have 6 columns");
  for (int c = 0; c < kFeatureCount; ++c) {
    const auto& cs = state.columns[static_cast<std::size_t>(c)];
    if (cs.degenerate()) {
      m.col(c).setZero();
    } else {
      m.col(c) = (m.col(c).array() - cs.center) / cs.scale;
    }
  }
}

PairSample apply_scalers(const ScalerState& state, const PairSample& sample) {
  PairSample out = sample;
  apply_scalers_inplace(state, out.features);
  return out;
}

FeatureMatrix inverse_apply(const ScalerState& state, const FeatureMatrix& scaled) {
  FeatureMatrix m = scaled;
  for (int c = 0; c < kFeatureCount; ++c) {
    const auto& cs = state.columns[static_cast<std::size_t>(c)];
    if (cs.degenerate()) {
      m.col(c).setConstant(cs.center);
    } else {
      m.col(c) = m.col(c).array() * cs.scale + cs.center;
    }
  }
  return m;
}

KeyValues to_key_values(const ScalerState& state) {
  KeyValues kv;
  kv["scaler.version"] = std::to_string(kScalerFormatVersion);
  kv["scaler.fit_samples"] = std::to_string(state.fit_samples);
  for (int c = 0; c < kFeatureCount; ++c) {
    const auto& cs = state.columns[static_cast<std::size_t>(c)];
    const std::string prefix = "scaler." + std::string(feature_name(c)) + ".";
    kv[prefix + "kind"] = to_string(cs.kind);
    kv[prefix + "center"] = format_double(cs.center);
    kv[prefix + "scale"] = format_double(cs.scale);
  }
  return kv;
}

ScalerState scaler_state_from(const KeyValues& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw InvalidInput("scaler block missing '" + key + "'");
    return it->second;
  };
  const auto version = parse_int(get("scaler.version"));
  if (version != kScalerFormatVersion)
    throw InvalidInput("scaler block version " + std::to_string(version) + ", expected " +
                       std::to_string(kScalerFormatVersion));
  ScalerState state;
  state.fit_samples = static_cast<std::size_t>(parse_int(get("scaler.fit_samples")));
  for (int c = 0; c < kFeatureCount; ++c) {
    const std::string prefix = "scaler." + std::string(feature_name(c)) + ".";
    auto& cs = state.columns[static_cast<std::size_t>(c)];
    cs.kind = scaler_kind_from(get(prefix + "kind"));
    cs.center = parse_double(get(prefix + "center"));
    cs.scale = parse_double(get(prefix + "scale"));
  }
  return state;
}

}  // namespace flock
