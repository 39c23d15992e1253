#include "flock/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "flock/error.hpp"
#include "flock/keyvalue.hpp"

namespace flock::harness {

using seqnet::Arch;

DatasetSummary summarize(const PairDataset& data) {
  return {data.sequence_length, data.total(), data.train.size(), data.excluded_agents};
}

CsvTable summary_table(std::span<const DatasetSummary> rows) {
  CsvTable t{{"sequence_length", "total_samples", "training_samples", "excluded_agents"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.sequence_length), std::to_string(r.total_samples),
                      std::to_string(r.training_samples), std::to_string(r.excluded_agents)});
  return t;
}

CsvTable bins_table(std::span<const SceneBin> bins) {
  CsvTable t{{"bin_index", "bin_start_ms", "member_count"}, {}};
  for (const auto& b : bins)
    t.rows.push_back({std::to_string(b.bin_index), std::to_string(b.bin_start_ms), std::to_string(b.member_ids.size())});
  return t;
}

PreparedSplits prepare_splits(const PairDataset& data, const PrepareOptions& opts) {
  if (data.train.empty()) throw InvalidInput("pair dataset has no training samples");
  if (data.test.empty()) throw InvalidInput("pair dataset has no test samples");
  PreparedSplits out;
  out.sequence_length = data.sequence_length;

  // validation comes out of the raw training split, before any resampling
  auto [kept, held] = seqnet::carve_stratified(data.train, opts.val_fraction, opts.seed ^ 0x5eed);
  if (held.empty()) throw InvalidInput("training split too small to carve a validation set");
  BalancedSet balanced = apply_balance(std::move(kept), opts.balance, opts.seed);
  out.weights = {balanced.weight_negative, balanced.weight_positive};

  out.train = featurize_all(balanced.samples, opts.dtw_mode);
  out.val = featurize_all(held, opts.dtw_mode);
  out.test = featurize_all(data.test, opts.dtw_mode);
  out.scaler = fit_scalers(out.train);
  return out;
}

RunOutcome run_training(const PreparedSplits& splits, seqnet::ModelConfig model_cfg, const seqnet::TrainConfig& train_cfg,
                        DtwMode dtw_mode) {
  model_cfg.sequence_length = splits.sequence_length;
  model_cfg.dtw_mode = dtw_mode;
  seqnet::SequenceModel model = seqnet::make_model(model_cfg);
  model.scaler = splits.scaler;

  seqnet::TrainConfig cfg = train_cfg;
  cfg.class_weights.negative *= splits.weights.negative;
  cfg.class_weights.positive *= splits.weights.positive;

  auto result = seqnet::train(std::move(model), splits.train, splits.val, cfg);
  const auto eval = seqnet::evaluate(result.model, splits.test);
  RunOutcome out{std::move(result.model), std::move(result.history), {}};
  out.record = {model_cfg.arch,          splits.sequence_length,      train_cfg.batch_size,
                model_cfg.hidden_size,   model_cfg.seed,              eval.accuracy,
                out.model.meta.wall_time_s, out.model.meta.epochs_run};
  return out;
}

CsvTable runs_table(std::span<const RunRecord> runs) {
  CsvTable t{{"arch", "sequence_length", "batch_size", "hidden_size", "seed", "accuracy", "wall_time_s", "epochs_run"},
             {}};
  for (const auto& r : runs)
    t.rows.push_back({seqnet::to_string(r.arch), std::to_string(r.sequence_length), std::to_string(r.batch_size),
                      std::to_string(r.hidden_size), std::to_string(r.seed), format_double(r.accuracy),
                      format_double(r.wall_time_s), std::to_string(r.epochs_run)});
  return t;
}

std::vector<RunRecord> runs_from_table(const CsvTable& t) {
  std::vector<RunRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    RunRecord rec;
    rec.arch = seqnet::arch_from(t.text(r, "arch"));
    rec.sequence_length = static_cast<int>(parse_int(t.text(r, "sequence_length")));
    rec.batch_size = static_cast<int>(parse_int(t.text(r, "batch_size")));
    rec.hidden_size = static_cast<int>(parse_int(t.text(r, "hidden_size")));
    rec.seed = static_cast<std::uint64_t>(parse_int(t.text(r, "seed")));
    rec.accuracy = t.number(r, "accuracy");
    rec.wall_time_s = t.number(r, "wall_time_s");
    rec.epochs_run = static_cast<int>(parse_int(t.text(r, "epochs_run")));
    out.push_back(rec);
  }
  return out;
}

CsvTable grid_summary(std::span<const RunRecord> runs) {
  struct Acc {
    double accuracy = 0.0, wall = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<seqnet::Arch, int>, Acc> groups;
  for (const auto& r : runs) {
    auto& a = groups[{r.arch, r.sequence_length}];
    a.accuracy += r.accuracy;
    a.wall += r.wall_time_s;
    ++a.n;
  }
  CsvTable t{{"arch", "sequence_length", "runs", "mean_accuracy", "mean_wall_time_s"}, {}};
  for (const auto& [key, a] : groups) {
    const double n = static_cast<double>(a.n);
    t.rows.push_back({seqnet::to_string(key.first), std::to_string(key.second), std::to_string(a.n), format_double(a.accuracy / n),
                      format_double(a.wall / n)});
  }
  return t;
}

void ExperimentGrid::validate() const {
  if (sequence_lengths.empty() || batch_sizes.empty() || hidden_sizes.empty() || archs.empty())
    throw InvalidConfig("experiment grid lists must be non-empty");
  if (repeats < 1) throw InvalidConfig("repeats must be >= 1");
  for (int l : sequence_lengths)
    if (l < 1) throw InvalidConfig("sequence lengths must be positive");
}

std::size_t ExperimentGrid::cell_count() const {
  return sequence_lengths.size() * archs.size() * batch_sizes.size() * hidden_sizes.size() *
         static_cast<std::size_t>(repeats);
}

GridResult run_grid(const Dataset& dataset, const ExperimentGrid& grid, const GridOptions& opts) {
  grid.validate();
  GridResult result;

  struct Cell {
    std::size_t split = 0;
    Arch arch{};
    int batch = 0, hidden = 0, repeat = 0;
  };
  std::vector<PreparedSplits> splits;
  std::vector<Cell> cells;
  for (int L : grid.sequence_lengths) {
    PairDatasetSpec spec;
    spec.sequence_length = L;
    spec.negative_ratio = opts.negative_ratio;
    spec.balance = opts.prepare.balance;
    spec.rng_seed = grid.seed_base;
    const PairDataset data = build_pair_dataset(dataset, spec);
    result.datasets.push_back(summarize(data));
    PrepareOptions prep = opts.prepare;
    prep.seed = grid.seed_base;
    splits.push_back(prepare_splits(data, prep));
    for (Arch arch : grid.archs)
      for (int batch : grid.batch_sizes)
        for (int hidden : grid.hidden_sizes)
          for (int rep = 0; rep < grid.repeats; ++rep) cells.push_back({splits.size() - 1, arch, batch, hidden, rep});
  }

  result.runs.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const Cell& c = cells[i];
      try {
        seqnet::ModelConfig mc = opts.model;
        mc.arch = c.arch;
        mc.hidden_size = c.hidden;
        mc.seed = grid.seed_base + static_cast<std::uint64_t>(c.repeat);
        if (mc.arch == Arch::transformer && mc.hidden_size % mc.heads != 0) mc.heads = 1;
        seqnet::TrainConfig tc = opts.train;
        tc.batch_size = c.batch;
        tc.seed = mc.seed;
        RunRecord rec = run_training(splits[c.split], mc, tc, opts.prepare.dtw_mode).record;
        std::lock_guard lock(mu);
        result.runs[i] = rec;
        if (opts.on_run) opts.on_run(rec);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(cells.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

std::vector<FlockSet> detect_flocks(const seqnet::SequenceModel& model, std::span<const SceneBin> bins,
                                    const DetectOptions& opts) {
  std::vector<FlockSet> out;
  out.reserve(bins.size());
  for (const auto& bin : bins) {
    std::vector<PairPrediction> preds = evaluate_all_pairs(model, bin, opts.threshold);
    if (!opts.consistency_prefixes.empty()) {
      std::vector<std::vector<PairPrediction>> passes{std::move(preds)};
      for (int len : opts.consistency_prefixes) passes.push_back(evaluate_prefix_pairs(model, bin, len, opts.threshold));
      preds = consistent_edges(passes);
    }
    FlockSet fs = aggregate_flocks(preds, bin.member_ids);
    fs.bin_index = bin.bin_index;
    out.push_back(std::move(fs));
  }
  return out;
}

DetectionValidation validate_detection(const seqnet::SequenceModel& model, std::span<const SceneBin> bins,
                                       const std::vector<GroupAnnotation>& groups, const DetectOptions& opts) {
  DetectionValidation out;
  out.flocks = detect_flocks(model, bins, opts);
  const auto truth = annotated_groups(groups);
  for (const auto& fs : out.flocks) out.metrics += validate_against_annotations(fs, truth);
  return out;
}

}  // namespace flock::harness
