#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "flock/ingest.hpp"
#include "flock/types.hpp"

namespace flock {

inline constexpr std::int64_t kDefaultBinWidthMs = 60'000;

struct AgentBlock {
  AgentId agent_id = 0;
  std::vector<TrajectoryPoint> points;  // exactly sequence_length points once filled

  friend bool operator==(const AgentBlock&, const AgentBlock&) = default;
};

/// Cohort of agents whose first record falls in one width-T interval.
/// Members and blocks are ordered by first timestamp, then agent id.
struct SceneBin {
  std::int64_t bin_index = 0;
  TimestampMs bin_start_ms = 0;
  std::int64_t bin_width_ms = kDefaultBinWidthMs;
  int sequence_length = 0;
  std::vector<AgentId> member_ids;
  std::vector<AgentBlock> blocks;

  const AgentBlock* block_for(AgentId id) const;

  friend bool operator==(const SceneBin&, const SceneBin&) = default;
};

struct BinAssignment {
  std::vector<SceneBin> bins;
  std::vector<AgentId> excluded_agents;  // fewer than L records
  TimestampMs t_min = 0;                 // earliest first record among retained agents
};

/// floor((t - t_min) / width) with exact integer arithmetic.
std::int64_t time_bin_index(TimestampMs t, TimestampMs t_min, std::int64_t width_ms);

BinAssignment assign_time_bins(const Dataset& dataset, std::int64_t bin_width_ms, int sequence_length);

struct FillOptions {
  /// Records further apart than this break a run of consecutive points.
  /// Zero disables the gap check.
  std::int64_t max_gap_ms = 0;
};

std::vector<SceneBin> fill_sequence_blocks(const Dataset& dataset, std::vector<SceneBin> bins,
                                           int sequence_length, std::vector<Diagnostic>* diagnostics = nullptr,
                                           const FillOptions& opts = {});

/// assign_time_bins followed by fill_sequence_blocks.
std::vector<SceneBin> build_scenes(const Dataset& dataset, std::int64_t bin_width_ms, int sequence_length,
                                   std::vector<Diagnostic>* diagnostics = nullptr);

// ---------------------------------------------------------------------------

/// Two index-aligned length-L blocks plus the pair label.
struct PairSampleRaw {
  AgentId agent_a = 0;
  AgentId agent_b = 0;
  std::vector<TrajectoryPoint> block_a;
  std::vector<TrajectoryPoint> block_b;
  int label = 0;

  friend bool operator==(const PairSampleRaw&, const PairSampleRaw&) = default;
};

enum class BalanceStrategy { weighted_loss, oversample, undersample, synthetic_interpolation };

std::string to_string(BalanceStrategy s);
BalanceStrategy balance_strategy_from(std::string_view s);

struct PairDatasetSpec {
  int sequence_length = 100;
  double negative_ratio = 1.0;
  BalanceStrategy balance = BalanceStrategy::weighted_loss;
  double train_fraction = 0.8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct PairDataset {
  std::vector<PairSampleRaw> train;
  std::vector<PairSampleRaw> test;
  std::size_t excluded_agents = 0;  // agents with fewer than L records
  int sequence_length = 0;

  std::size_t total() const { return train.size() + test.size(); }
};

PairDataset build_pair_dataset(const Dataset& dataset, const PairDatasetSpec& spec);

/// Convex combination of two records; positions, velocity and timestamp
/// linearly, angles along the shorter arc.
TrajectoryPoint interpolate_point(const TrajectoryPoint& p, const TrajectoryPoint& q, double lambda);

/// k new positives, each mixing two distinct existing positives with
/// lambda ~ U(0.25, 0.75). New samples carry negative agent ids.
std::vector<PairSampleRaw> interpolate_synthetic_positives(const std::vector<PairSampleRaw>& samples, int k,
                                                           std::uint64_t rng_seed);

struct BalancedSet {
  std::vector<PairSampleRaw> samples;
  double weight_negative = 1.0;
  double weight_positive = 1.0;
};

/// Applies the imbalance mitigation to a training split.
BalancedSet apply_balance(std::vector<PairSampleRaw> train, BalanceStrategy strategy, std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Files

void write_scene(std::ostream& out, const SceneBin& bin);
SceneBin read_scene(std::istream& in);
/// One file per bin, scene_<index>.txt.
void write_scene_dir(const std::filesystem::path& dir, const std::vector<SceneBin>& bins);
std::vector<SceneBin> read_scene_dir(const std::filesystem::path& dir);

/// manifest.csv (sample_id, agent_a, agent_b, label, split) and
/// blocks.csv (sample_id, side, then the seven trajectory columns).
void write_pair_dataset(const std::filesystem::path& dir, const PairDataset& data);
PairDataset read_pair_dataset(const std::filesystem::path& dir);

}  // namespace flock
