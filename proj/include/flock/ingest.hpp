#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flock/keyvalue.hpp"
#include "flock/types.hpp"

namespace flock {

struct Diagnostic {
  std::size_t line = 0;  // 0 when not tied to an input line
  std::string message;
};

/// Trajectories and (optionally) group annotations for one recording.
struct Dataset {
  std::map<AgentId, Trajectory> trajectories;
  std::vector<GroupAnnotation> groups;
  std::string source_label;
  /// Partner ids referenced by groups that have no trajectory.
  std::vector<AgentId> unresolved_ids;
  std::vector<Diagnostic> diagnostics;
};

/// Builds a Dataset and fills the unresolved-id and group-consistency
/// diagnostics.
Dataset make_dataset(std::map<AgentId, Trajectory> trajectories,
                     std::vector<GroupAnnotation> groups, std::string source_label = {});

// ---------------------------------------------------------------------------
// Trajectory CSV: time[s.fff], person id, x[mm], y[mm], velocity[mm/s],
// motion angle[rad], facing angle[rad]. No header required.

struct CsvParseOptions {
  /// Maximum tolerated malformed rows. Unset means 1% of the data rows.
  std::optional<std::size_t> max_bad_rows;
};

struct TrajectoryCsv {
  std::map<AgentId, Trajectory> trajectories;
  std::size_t rows = 0;
  std::size_t bad_rows = 0;
  std::size_t duplicate_rows = 0;
  bool header_skipped = false;
  std::vector<Diagnostic> diagnostics;
};

TrajectoryCsv parse_trajectory_csv(std::istream& in, const CsvParseOptions& opts = {});
TrajectoryCsv read_trajectory_csv(const std::string& path, const CsvParseOptions& opts = {});

/// Decimal seconds ("1368000000.5") to integer milliseconds, rounding
/// half-up on the fourth fractional digit.
TimestampMs parse_seconds_to_ms(std::string_view text);
std::string format_ms_as_seconds(TimestampMs ms);

/// One CSV record; throws InvalidInput when malformed.
TrajectoryPoint parse_trajectory_row(std::string_view line);
void write_trajectory_row(std::ostream& out, const TrajectoryPoint& p);

/// Rows ordered by timestamp then agent id, canonical number formatting.
void write_trajectory_csv(std::ostream& out, const std::map<AgentId, Trajectory>& trajectories);

// ---------------------------------------------------------------------------
// Group file: PEDESTRIAN-ID GROUP-SIZE PARTNER-ID... N-INTERACTING ID...

struct GroupFile {
  std::vector<GroupAnnotation> groups;
  std::vector<Diagnostic> diagnostics;
};

GroupFile parse_group_file(std::istream& in);
GroupFile read_group_file(const std::string& path);
GroupAnnotation parse_group_row(std::string_view row, std::size_t line = 0);
void write_group_file(std::ostream& out, const std::vector<GroupAnnotation>& groups);

/// Positive pair labels from size-2 groups, deduplicated and sorted.
std::vector<PairLabel> extract_pair_labels(const Dataset& dataset);

/// Agents with trajectories that are not mentioned in any annotation.
std::vector<AgentId> list_singletons(const Dataset& dataset);

/// Disjoint member sets implied by the annotations (id plus partners,
/// merged transitively). Sorted members, sorted by smallest member.
std::vector<std::vector<AgentId>> annotated_groups(const std::vector<GroupAnnotation>& groups);

// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int n_flocks = 40;
  std::vector<std::pair<int, double>> flock_size_distribution{{2, 1.0}};
  int n_singletons = 80;
  std::int64_t duration_ms = 60'000;  // length of every track
  std::int64_t sample_period_ms = 500;
  double cohesion_radius_mm = 800.0;
  double noise_std_mm = 60.0;
  std::uint64_t rng_seed = 1;

  // Scene layout. Track starts are spread over start_spread_ms so that
  // several time bins are populated.
  TimestampMs base_time_ms = 1'368'000'000'000;
  std::int64_t start_spread_ms = 600'000;
  double arena_mm = 12'000.0;
  double mean_speed_mm_s = 1'200.0;
  std::int64_t heading_period_ms = 5'000;
  AgentId first_agent_id = 1000;

  void validate() const;
};

SyntheticConfig synthetic_config_from(const KeyValues& kv, SyntheticConfig base = {});
KeyValues to_key_values(const SyntheticConfig& cfg);

/// Deterministic for a fixed rng_seed. Flock members share a heading
/// process and stay within cohesion_radius_mm of their centroid;
/// singletons walk independently. Ground-truth annotations are emitted
/// for every flock.
Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace flock
