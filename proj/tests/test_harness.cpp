#include <gtest/gtest.h>

#include <sstream>

#include "flock/error.hpp"
#include "flock/harness/csv.hpp"
#include "flock/harness/experiments.hpp"
#include "flock/harness/svg.hpp"

using namespace flock;
using namespace flock::harness;

namespace {

RunRecord record(seqnet::Arch a, int L, int batch, int hidden, double acc, double t) {
  return {a, L, batch, hidden, 7, acc, t, 10};
}

Dataset small_dataset() {
  SyntheticConfig c;
  c.n_flocks = 10;
  c.n_singletons = 20;
  c.duration_ms = 4'000;
  c.rng_seed = 3;
  return generate_synthetic(c);
}

}  // namespace

TEST(Csv, RoundTripAndLookup) {
  const CsvTable t{{"a", "b"}, {{"1", "x"}, {"2.5", "y"}}};
  std::stringstream ss;
  write_csv(ss, t);
  EXPECT_EQ(ss.str(), "a,b\n1,x\n2.5,y\n");
  const auto back = read_csv(ss);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.number(1, "a"), 2.5);
  EXPECT_EQ(back.text(0, "b"), "x");
  EXPECT_THROW(back.column("c"), InvalidInput);
}

TEST(Tables, SummaryFromPairDataset) {
  const auto data = build_pair_dataset(small_dataset(), {.sequence_length = 5, .rng_seed = 1});
  const auto s = summarize(data);
  EXPECT_EQ(s.sequence_length, 5);
  EXPECT_EQ(s.total_samples, 20u);
  EXPECT_EQ(s.training_samples, 16u);
  EXPECT_EQ(s.excluded_agents, 0u);
  const std::vector<DatasetSummary> rows{s};
  const auto t = summary_table(rows);
  EXPECT_EQ(t.header, (std::vector<std::string>{"sequence_length", "total_samples", "training_samples",
                                                "excluded_agents"}));
  EXPECT_EQ(t.rows[0], (std::vector<std::string>{"5", "20", "16", "0"}));
  // L beyond every track: nothing left, every agent excluded
  const auto empty = summarize(build_pair_dataset(small_dataset(), {.sequence_length = 100}));
  EXPECT_EQ(empty.total_samples, 0u);
  EXPECT_EQ(empty.excluded_agents, 40u);
}

TEST(Tables, RunsRoundTripAndGridMeans) {
  using seqnet::Arch;
  const std::vector<RunRecord> runs{record(Arch::rnn, 30, 8, 16, 0.5, 1.0), record(Arch::rnn, 30, 16, 16, 0.75, 3.0),
                                    record(Arch::lstm, 30, 8, 16, 0.9, 2.0),
                                    record(Arch::rnn, 100, 8, 16, 1.0, 5.0)};
  const auto t = runs_table(runs);
  const auto back = runs_from_table(t);
  ASSERT_EQ(back.size(), runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EXPECT_EQ(back[i].arch, runs[i].arch);
    EXPECT_EQ(back[i].accuracy, runs[i].accuracy);
    EXPECT_EQ(back[i].wall_time_s, runs[i].wall_time_s);
  }
  const auto g = grid_summary(runs);
  ASSERT_EQ(g.rows.size(), 3u);
  // ordered by arch then length
  EXPECT_EQ(g.text(0, "arch"), "rnn");
  EXPECT_EQ(g.number(0, "sequence_length"), 30);
  EXPECT_EQ(g.number(0, "runs"), 2);
  EXPECT_EQ(g.number(0, "mean_accuracy"), 0.625);
  EXPECT_EQ(g.number(0, "mean_wall_time_s"), 2.0);
  EXPECT_EQ(g.number(1, "sequence_length"), 100);
  EXPECT_EQ(g.text(2, "arch"), "lstm");
}

TEST(Grid, ValidationAndCellCount) {
  ExperimentGrid g;
  EXPECT_EQ(g.cell_count(), 7u * 4u * 5u * 3u);
  g.repeats = 2;
  EXPECT_EQ(g.cell_count(), 7u * 4u * 5u * 3u * 2u);
  g.batch_sizes.clear();
  EXPECT_THROW(g.validate(), InvalidConfig);
}

TEST(Grid, RowCountMatchesCells) {
  ExperimentGrid g;
  g.sequence_lengths = {4, 6};
  g.batch_sizes = {8};
  g.hidden_sizes = {4, 8};
  g.archs = {seqnet::Arch::rnn, seqnet::Arch::transformer};
  g.repeats = 1;
  GridOptions opts;
  opts.train.max_epochs = 2;
  opts.workers = 3;
  std::size_t callbacks = 0;
  opts.on_run = [&](const RunRecord&) { ++callbacks; };
  const auto r = run_grid(small_dataset(), g, opts);
  EXPECT_EQ(r.runs.size(), g.cell_count());
  EXPECT_EQ(callbacks, g.cell_count());
  EXPECT_EQ(r.datasets.size(), 2u);
  for (const auto& run : r.runs) {
    EXPECT_GE(run.accuracy, 0.0);
    EXPECT_LE(run.accuracy, 1.0);
  }
  // single worker gives the same records apart from timing
  opts.workers = 1;
  const auto serial = run_grid(small_dataset(), g, opts);
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    EXPECT_EQ(serial.runs[i].arch, r.runs[i].arch);
    EXPECT_EQ(serial.runs[i].sequence_length, r.runs[i].sequence_length);
    EXPECT_EQ(serial.runs[i].hidden_size, r.runs[i].hidden_size);
    EXPECT_EQ(serial.runs[i].accuracy, r.runs[i].accuracy);
  }
}

TEST(Svg, PureFunctionOfTable) {
  using seqnet::Arch;
  const std::vector<RunRecord> runs{record(Arch::rnn, 30, 8, 16, 0.5, 1.0), record(Arch::rnn, 100, 8, 16, 0.7, 2.0),
                                    record(Arch::transformer, 30, 8, 16, 0.8, 4.0)};
  const auto summary = grid_summary(runs);
  std::stringstream ss;
  write_csv(ss, summary);
  const auto reread = read_csv(ss);
  const auto svg = plot_accuracy_vs_length(summary);
  EXPECT_EQ(svg, plot_accuracy_vs_length(reread));
  EXPECT_EQ(plot_runtime_vs_length(summary), plot_runtime_vs_length(reread));
  EXPECT_GT(svg.find("<!-- data:"), svg.find("<svg"));
  EXPECT_NE(svg.find("<!-- data:"), std::string::npos);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("transformer"), std::string::npos);

  const auto bins = build_scenes(small_dataset(), 60000, 5);
  const auto bars = plot_members_per_bin(bins_table(bins));
  EXPECT_NE(bars.find("<rect"), std::string::npos);
  FlockSet fs{bins[0].bin_index, {}, bins[0].member_ids};
  std::sort(fs.singletons.begin(), fs.singletons.end());
  const auto scene = render_scene(bins[0], fs);
  EXPECT_EQ(scene, render_scene(bins[0], fs));
  EXPECT_NE(scene.find("<polyline"), std::string::npos);
}

TEST(Detect, EmptyAndThresholdAboveOne) {
  seqnet::ModelConfig c;
  c.hidden_size = 8;
  c.sequence_length = 5;
  const auto model = seqnet::make_model(c);
  EXPECT_TRUE(detect_flocks(model, {}, {}).empty());
  const auto bins = build_scenes(small_dataset(), 60000, 5);
  const auto sets = detect_flocks(model, bins, {.threshold = 1.01});
  ASSERT_EQ(sets.size(), bins.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    EXPECT_TRUE(sets[i].flocks.empty());
    EXPECT_EQ(sets[i].singletons.size(), bins[i].member_ids.size());
  }
}
