#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flock/aggregate.hpp"
#include "flock/features.hpp"
#include "flock/harness/csv.hpp"
#include "flock/ingest.hpp"
#include "flock/scene.hpp"
#include "flock/seqnet/model.hpp"
#include "flock/seqnet/train.hpp"

namespace flock::harness {

/// One row per sequence length: total, training and excluded counts.
struct DatasetSummary {
  int sequence_length = 0;
  std::size_t total_samples = 0;
  std::size_t training_samples = 0;
  std::size_t excluded_agents = 0;
};

DatasetSummary summarize(const PairDataset& data);
CsvTable summary_table(std::span<const DatasetSummary> rows);

/// bin_index, bin_start_ms, member_count
CsvTable bins_table(std::span<const SceneBin> bins);

/// Featurized splits ready for training.
struct PreparedSplits {
  int sequence_length = 0;
  std::vector<PairSample> train;  // after balancing, minus the validation carve
  std::vector<PairSample> val;
  std::vector<PairSample> test;
  seqnet::ClassWeights weights{};
  ScalerState scaler;
};

struct PrepareOptions {
  BalanceStrategy balance = BalanceStrategy::weighted_loss;
  DtwMode dtw_mode = DtwMode::full_broadcast;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Balances the training split, featurizes, carves validation and fits the
/// scalers on what remains for training.
PreparedSplits prepare_splits(const PairDataset& data, const PrepareOptions& opts);

struct RunRecord {
  seqnet::Arch arch = seqnet::Arch::lstm;
  int sequence_length = 0;
  int batch_size = 0;
  int hidden_size = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double wall_time_s = 0.0;
  int epochs_run = 0;
};

struct RunOutcome {
  seqnet::SequenceModel model;
  seqnet::TrainingHistory history;
  RunRecord record;
};

/// Builds a model for the splits, trains it and scores the test split.
/// model.sequence_length and model.dtw_mode are taken from the splits.
RunOutcome run_training(const PreparedSplits& splits, seqnet::ModelConfig model, const seqnet::TrainConfig& train,
                        DtwMode dtw_mode = DtwMode::full_broadcast);

CsvTable runs_table(std::span<const RunRecord> runs);
std::vector<RunRecord> runs_from_table(const CsvTable& table);

/// Mean accuracy and wall time per (arch, sequence_length), rows ordered
/// by arch then length.
CsvTable grid_summary(std::span<const RunRecord> runs);

struct ExperimentGrid {
  std::vector<int> sequence_lengths{30, 60, 100, 150, 200, 300, 500};
  std::vector<int> batch_sizes{64, 32, 16, 8};
  std::vector<int> hidden_sizes{256, 128, 64, 32, 16};
  std::vector<seqnet::Arch> archs{seqnet::Arch::rnn, seqnet::Arch::lstm, seqnet::Arch::transformer};
  int repeats = 1;
  std::uint64_t seed_base = 0;

  void validate() const;
  std::size_t cell_count() const;
};

struct GridOptions {
  std::int64_t bin_width_ms = kDefaultBinWidthMs;
  double negative_ratio = 1.0;
  PrepareOptions prepare{};
  seqnet::ModelConfig model{};  // arch, hidden size and seed are overridden per cell
  seqnet::TrainConfig train{};  // batch size and seed are overridden per cell
  int workers = 1;
  std::function<void(const RunRecord&)> on_run;  // called from the coordinator thread
};

struct GridResult {
  std::vector<RunRecord> runs;  // grid order: L, arch, batch, hidden, repeat
  std::vector<DatasetSummary> datasets;
};

GridResult run_grid(const Dataset& dataset, const ExperimentGrid& grid, const GridOptions& opts);

struct DetectOptions {
  double threshold = 0.9;
  /// Extra prefix lengths that every positive edge must also survive.
  std::vector<int> consistency_prefixes;
};

std::vector<FlockSet> detect_flocks(const seqnet::SequenceModel& model, std::span<const SceneBin> bins,
                                    const DetectOptions& opts);

struct DetectionValidation {
  std::vector<FlockSet> flocks;
  ValidationMetrics metrics;
};

DetectionValidation validate_detection(const seqnet::SequenceModel& model, std::span<const SceneBin> bins,
                                       const std::vector<GroupAnnotation>& groups, const DetectOptions& opts);

}  // namespace flock::harness
