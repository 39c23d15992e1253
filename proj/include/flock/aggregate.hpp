#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flock/scene.hpp"
#include "flock/seqnet/model.hpp"
#include "flock/types.hpp"

namespace flock {

struct PairPrediction {
  AgentId agent_a = 0;  // agent_a < agent_b
  AgentId agent_b = 0;
  double probability = 0.0;
  int is_flock = 0;

  friend bool operator==(const PairPrediction&, const PairPrediction&) = default;
};

/// Partition of a scene: flocks (two or more members, sorted, ordered by
/// smallest member) plus the remaining singletons in ascending order.
struct FlockSet {
  std::int64_t bin_index = 0;
  std::vector<std::vector<AgentId>> flocks;
  std::vector<AgentId> singletons;

  friend bool operator==(const FlockSet&, const FlockSet&) = default;
};

/// Disjoint sets keyed by agent id. find_root compresses the traversed
/// path; unite makes the smaller root id the representative.
class UnionFind {
 public:
  void add(AgentId id);
  bool contains(AgentId id) const { return parent_.count(id) != 0; }
  AgentId find_root(AgentId id);
  void unite(AgentId a, AgentId b);
  /// Direct parent link, without compression.
  AgentId parent(AgentId id) const;
  /// Parent links followed by find_root so far.
  std::size_t link_traversals() const { return traversals_; }

 private:
  std::unordered_map<AgentId, AgentId> parent_;
  std::size_t traversals_ = 0;
};

/// Probabilities for every unordered member pair of a filled bin, in
/// canonical (a, b) order; is_flock = probability >= threshold.
std::vector<PairPrediction> evaluate_all_pairs(const seqnet::SequenceModel& model, const SceneBin& bin,
                                               double threshold);

/// Same, on the first prefix_length records of each block.
std::vector<PairPrediction> evaluate_prefix_pairs(const seqnet::SequenceModel& model, const SceneBin& bin,
                                                  int prefix_length, double threshold);

/// Recomputes is_flock for another threshold.
std::vector<PairPrediction> rethreshold(std::vector<PairPrediction> predictions, double threshold);

/// Keeps an edge positive only when it is positive in every pass. Passes
/// must list the same pairs in the same order.
std::vector<PairPrediction> consistent_edges(std::span<const std::vector<PairPrediction>> passes);

FlockSet aggregate_flocks(std::span<const PairPrediction> predictions, std::span<const AgentId> all_members);

/// Flock size -> count over every set; singletons are not counted.
std::map<std::size_t, std::size_t> size_histogram(std::span<const FlockSet> sets);

/// {"2": 1528, "3": 448} with keys in ascending numeric order.
std::string histogram_json(const std::map<std::size_t, std::size_t>& histogram);

struct ValidationMetrics {
  std::size_t truth_groups = 0;
  std::size_t matched_groups = 0;
  std::size_t true_positive_pairs = 0;
  std::size_t false_positive_pairs = 0;
  std::size_t false_negative_pairs = 0;
  std::size_t total_pairs = 0;

  double exact_match_rate() const;
  double precision() const;
  double recall() const;
  double f1() const;
  /// No annotated groups: exact-match is reported as 1.0.
  bool vacuous_truth() const { return truth_groups == 0; }
  /// No predicted co-flocked pairs: precision is reported as 1.0.
  bool no_predictions() const { return true_positive_pairs + false_positive_pairs == 0; }

  ValidationMetrics& operator+=(const ValidationMetrics& o);
};

/// Compares a scene's detection with annotated groups restricted to the
/// scene's members (groups left with fewer than two members are dropped).
/// Pairwise counts run over all C(n, 2) member pairs.
ValidationMetrics validate_against_annotations(const FlockSet& detected,
                                               std::span<const std::vector<AgentId>> truth_groups);

/// One JSON object per line for each scene, then a final histogram line.
void write_flock_report(std::ostream& out, std::span<const FlockSet> sets);

}  // namespace flock
