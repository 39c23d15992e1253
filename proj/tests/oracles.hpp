#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "flock/features.hpp"
#include "flock/seqnet/model.hpp"

namespace oracle {

/// Minimum over every monotone alignment path, enumerated explicitly.
inline double brute_force_dtw(std::span<const flock::Point2> a, std::span<const flock::Point2> b) {
  const std::size_t n = a.size(), m = b.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    acc += std::hypot(a[i][0] - b[j][0], a[i][1] - b[j][1]);
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, acc);
    if (j + 1 < m) walk(i, j + 1, acc);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

/// Partition by boolean transitive closure (Warshall), members sorted,
/// components of size >= 2 ordered by smallest member.
inline std::vector<std::vector<flock::AgentId>> closure_components(const std::vector<flock::AgentId>& members,
                                                              const std::vector<std::pair<flock::AgentId, flock::AgentId>>& edges) {
  const std::size_t n = members.size();
  std::map<flock::AgentId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[members[i]] = i;
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = 1;
  for (const auto& [a, b] : edges) reach[index[a]][index[b]] = reach[index[b]][index[a]] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i][k])
        for (std::size_t j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = 1;
  std::set<std::vector<flock::AgentId>> comps;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<flock::AgentId> c;
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j]) c.push_back(members[j]);
    std::sort(c.begin(), c.end());
    if (c.size() >= 2) comps.insert(c);
  }
  return {comps.begin(), comps.end()};
}

struct GradCheckReport {
  double worst_relative = 0.0;
  std::size_t failures = 0;
  std::size_t checked = 0;
  std::string worst_name;
};

/// Central differences of the mean batch loss against backward().
inline GradCheckReport finite_difference_check(const flock::seqnet::ModelConfig& cfg,
                                               const flock::seqnet::ParameterSet& params,
                                               std::span<const flock::FeatureMatrix> batch, std::span<const int> labels,
                                               flock::seqnet::ClassWeights weights, double h, double rel_tol,
                                               double abs_tol) {
  using namespace flock::seqnet;
  const Gradient g = backward(cfg, params, batch, labels, weights);
  ParameterSet probe = params;
  GradCheckReport r;
  for (std::size_t t = 0; t < probe.tensors().size(); ++t) {
    auto& value = probe.tensors()[t].value;
    const auto& analytic = g.grads.tensors()[t].value;
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      const double up = batch_loss(cfg, probe, batch, labels, weights);
      value.data()[k] = saved - h;
      const double down = batch_loss(cfg, probe, batch, labels, weights);
      value.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data()[k];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const bool ok = diff <= abs_tol || diff <= rel_tol * scale;
      ++r.checked;
      if (!ok) ++r.failures;
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      if (diff > abs_tol && rel > r.worst_relative) {
        r.worst_relative = rel;
        r.worst_name = probe.tensors()[t].name;
      }
    }
  }
  return r;
}

}  // namespace oracle
