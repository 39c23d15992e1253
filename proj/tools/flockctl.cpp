// flockctl: dataset preparation, training, grid runs and flock detection.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "flock/aggregate.hpp"
#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/harness/csv.hpp"
#include "flock/harness/experiments.hpp"
#include "flock/harness/svg.hpp"
#include "flock/ingest.hpp"
#include "flock/keyvalue.hpp"
#include "flock/scene.hpp"
#include "flock/seqnet/checkpoint.hpp"
#include "flock/seqnet/train.hpp"

namespace fs = std::filesystem;
using namespace flock;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Fills options that were not given on the command line from a
/// key=value file. Keys are long flag names without dashes.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  for (const auto& [key, value] : read_key_values(in)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("config file " + path + ": unknown option '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

struct Common {
  std::uint64_t seed = 0;
  int seq_len = 100;
  std::int64_t bin_ms = kDefaultBinWidthMs;
  double threshold = 0.9;
  std::string out;
  std::string config;
};

void add_seed(CLI::App& app, Common& c) { app.add_option("--seed", c.seed, "Random seed")->capture_default_str(); }
void add_seq_len(CLI::App& app, Common& c) {
  app.add_option("-L,--seq-len", c.seq_len, "Records per agent sequence")->capture_default_str();
}
void add_bin_ms(CLI::App& app, Common& c) {
  app.add_option("-T,--bin-ms", c.bin_ms, "Time bin width in milliseconds")->capture_default_str();
}
void add_threshold(CLI::App& app, Common& c) {
  app.add_option("--threshold", c.threshold, "Pair confidence threshold")->capture_default_str();
}
void add_out(CLI::App& app, Common& c, const std::string& what) { app.add_option("--out", c.out, what); }
void add_config(CLI::App& app, Common& c) {
  app.add_option("--config", c.config, "key=value file supplying option defaults");
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
  return value;
}

Dataset load_dataset(const std::string& csv, const std::string& groups) {
  TrajectoryCsv parsed = read_trajectory_csv(require(csv, "--input"));
  for (const auto& d : parsed.diagnostics) std::cerr << "warning: line " << d.line << ": " << d.message << '\n';
  std::vector<GroupAnnotation> annotations;
  if (!groups.empty()) {
    GroupFile gf = read_group_file(groups);
    for (const auto& d : gf.diagnostics) std::cerr << "warning: group line " << d.line << ": " << d.message << '\n';
    annotations = std::move(gf.groups);
  }
  return make_dataset(std::move(parsed.trajectories), std::move(annotations), csv);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common c;
  int flocks = -1, singletons = -1;
  std::string sizes;
  std::int64_t duration_ms = -1, period_ms = -1, spread_ms = -1;
  double cohesion = -1, noise = -1, arena = -1;
};

int cmd_synth(const SynthArgs& a) {
  KeyValues kv{{"rng_seed", std::to_string(a.c.seed)}};
  if (a.flocks >= 0) kv["n_flocks"] = std::to_string(a.flocks);
  if (a.singletons >= 0) kv["n_singletons"] = std::to_string(a.singletons);
  if (!a.sizes.empty()) kv["flock_size_distribution"] = a.sizes;
  if (a.duration_ms >= 0) kv["duration_ms"] = std::to_string(a.duration_ms);
  if (a.period_ms >= 0) kv["sample_period_ms"] = std::to_string(a.period_ms);
  if (a.spread_ms >= 0) kv["start_spread_ms"] = std::to_string(a.spread_ms);
  if (a.cohesion >= 0) kv["cohesion_radius_mm"] = format_double(a.cohesion);
  if (a.noise >= 0) kv["noise_std_mm"] = format_double(a.noise);
  if (a.arena >= 0) kv["arena_mm"] = format_double(a.arena);
  const SyntheticConfig cfg = synthetic_config_from(kv);
  const Dataset data = generate_synthetic(cfg);

  const fs::path dir = require(a.c.out, "--out");
  fs::create_directories(dir);
  std::ostringstream traj, groups, conf;
  write_trajectory_csv(traj, data.trajectories);
  write_group_file(groups, data.groups);
  write_key_values(conf, to_key_values(cfg));
  write_text(dir / "trajectories.csv", traj.str());
  write_text(dir / "groups.dat", groups.str());
  write_text(dir / "synthetic.cfg", conf.str());
  std::cout << "agents," << data.trajectories.size() << "\nannotated_rows," << data.groups.size() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  Common c;
  std::string input, groups, balance = "weighted_loss";
  double ratio = 1.0;
};

int cmd_prepare(const PrepareArgs& a) {
  const Dataset data = load_dataset(a.input, a.groups);
  const fs::path dir = require(a.c.out, "--out");
  fs::create_directories(dir);

  std::vector<Diagnostic> diags;
  const auto bins = build_scenes(data, a.c.bin_ms, a.c.seq_len, &diags);
  for (const auto& d : diags) std::cerr << "warning: " << d.message << '\n';
  fs::remove_all(dir / "scenes");
  write_scene_dir(dir / "scenes", bins);
  const auto bins_csv = harness::bins_table(bins);
  harness::write_csv_file((dir / "bins.csv").string(), bins_csv);
  write_text(dir / "members_per_bin.svg", harness::plot_members_per_bin(bins_csv));

  PairDatasetSpec spec;
  spec.sequence_length = a.c.seq_len;
  spec.negative_ratio = a.ratio;
  spec.balance = balance_strategy_from(a.balance);
  spec.rng_seed = a.c.seed;
  const PairDataset pairs = build_pair_dataset(data, spec);
  fs::remove_all(dir / "pairs");
  write_pair_dataset(dir / "pairs", pairs);

  const harness::DatasetSummary summary = harness::summarize(pairs);
  const auto table = harness::summary_table(std::span(&summary, 1));
  harness::write_csv_file((dir / "summary.csv").string(), table);
  harness::write_csv(std::cout, table);
  if (pairs.total() == 0) std::cerr << "warning: empty dataset, no agent pair has " << a.c.seq_len << " records\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::string arch = "lstm", optimizer = "adam", balance = "weighted_loss", dtw_mode = "full_broadcast";
  int hidden = 32, layers = 1, heads = 4, ff_multiplier = 4, batch = 32, epochs = 1000, patience = 50;
  double lr = 0.001, dropout = 0.0, min_delta = 0.0, val_fraction = 0.1;
  bool no_position_encoding = false;
};

void add_model_options(CLI::App& app, ModelArgs& m) {
  app.add_option("--arch", m.arch, "rnn, lstm or transformer")->capture_default_str();
  app.add_option("--hidden", m.hidden, "Hidden size")->capture_default_str();
  app.add_option("--layers", m.layers, "Stacked layers or encoder blocks")->capture_default_str();
  app.add_option("--heads", m.heads, "Attention heads (transformer)")->capture_default_str();
  app.add_option("--ff-multiplier", m.ff_multiplier, "Feed-forward width multiplier (transformer)")
      ->capture_default_str();
  app.add_flag("--no-position-encoding", m.no_position_encoding, "Disable sinusoidal positions (transformer)");
  app.add_option("--dropout", m.dropout, "Dropout on the pooled representation")->capture_default_str();
  app.add_option("--batch", m.batch, "Minibatch size")->capture_default_str();
  app.add_option("--lr", m.lr, "Learning rate")->capture_default_str();
  app.add_option("--epochs", m.epochs, "Maximum epochs")->capture_default_str();
  app.add_option("--patience", m.patience, "Early-stopping patience in epochs")->capture_default_str();
  app.add_option("--min-delta", m.min_delta, "Validation improvement that resets patience")->capture_default_str();
  app.add_option("--optimizer", m.optimizer, "adam or sgd")->capture_default_str();
  app.add_option("--balance", m.balance, "weighted_loss, oversample, undersample or synthetic_interpolation")
      ->capture_default_str();
  app.add_option("--dtw-mode", m.dtw_mode, "full_broadcast or prefix")->capture_default_str();
  app.add_option("--val-fraction", m.val_fraction, "Share of the training split held out for early stopping")
      ->capture_default_str();
}

seqnet::ModelConfig model_config(const ModelArgs& m, std::uint64_t seed) {
  seqnet::ModelConfig c;
  c.arch = seqnet::arch_from(m.arch);
  c.hidden_size = m.hidden;
  c.num_layers = m.layers;
  c.heads = m.heads;
  c.ff_multiplier = m.ff_multiplier;
  c.dropout = m.dropout;
  c.positional_encoding = !m.no_position_encoding;
  c.dtw_mode = dtw_mode_from(m.dtw_mode);
  c.seed = seed;
  return c;
}

seqnet::TrainConfig train_config(const ModelArgs& m, std::uint64_t seed) {
  seqnet::TrainConfig t;
  t.learning_rate = m.lr;
  t.max_epochs = m.epochs;
  t.batch_size = m.batch;
  t.early_stop_patience = m.patience;
  t.min_delta = m.min_delta;
  t.optimizer = seqnet::optimizer_from(m.optimizer);
  t.seed = seed;
  return t;
}

harness::PrepareOptions prepare_options(const ModelArgs& m, std::uint64_t seed) {
  return {balance_strategy_from(m.balance), dtw_mode_from(m.dtw_mode), m.val_fraction, seed};
}

struct TrainArgs {
  Common c;
  ModelArgs m;
  std::string data, history;
};

int cmd_train(const TrainArgs& a) {
  const PairDataset data = read_pair_dataset(require(a.data, "--data"));
  const auto splits = harness::prepare_splits(data, prepare_options(a.m, a.c.seed));
  auto outcome = harness::run_training(splits, model_config(a.m, a.c.seed), train_config(a.m, a.c.seed),
                                       dtw_mode_from(a.m.dtw_mode));
  seqnet::save_checkpoint(outcome.model, require(a.c.out, "--out"));
  if (!a.history.empty()) {
    std::ostringstream os;
    seqnet::write_history_csv(os, outcome.history);
    write_text(a.history, os.str());
  }
  harness::write_csv(std::cout, harness::runs_table(std::span(&outcome.record, 1)));
  return kOk;
}

// ---------------------------------------------------------------------------

struct GridArgs {
  Common c;
  ModelArgs m;
  std::string input, groups;
  std::vector<int> seq_lens{30, 60, 100, 150, 200, 300, 500};
  std::vector<int> batches{64, 32, 16, 8};
  std::vector<int> hiddens{256, 128, 64, 32, 16};
  std::vector<std::string> archs{"rnn", "lstm", "transformer"};
  int repeats = 1;
  int workers = 0;
  double ratio = 1.0;
};

void write_grid_outputs(const fs::path& dir, const harness::CsvTable& runs) {
  const auto summary = harness::grid_summary(harness::runs_from_table(runs));
  harness::write_csv_file((dir / "summary.csv").string(), summary);
  write_text(dir / "accuracy_vs_length.svg", harness::plot_accuracy_vs_length(summary));
  write_text(dir / "runtime_vs_length.svg", harness::plot_runtime_vs_length(summary));
}

int cmd_grid(const GridArgs& a) {
  const Dataset data = load_dataset(a.input, a.groups);
  harness::ExperimentGrid grid;
  grid.sequence_lengths = a.seq_lens;
  grid.batch_sizes = a.batches;
  grid.hidden_sizes = a.hiddens;
  grid.archs.clear();
  for (const auto& s : a.archs) grid.archs.push_back(seqnet::arch_from(s));
  grid.repeats = a.repeats;
  grid.seed_base = a.c.seed;

  harness::GridOptions opts;
  opts.bin_width_ms = a.c.bin_ms;
  opts.negative_ratio = a.ratio;
  opts.prepare = prepare_options(a.m, a.c.seed);
  opts.model = model_config(a.m, a.c.seed);
  opts.train = train_config(a.m, a.c.seed);
  opts.workers = a.workers > 0 ? a.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  opts.on_run = [](const harness::RunRecord& r) {
    std::cerr << "run " << seqnet::to_string(r.arch) << " L=" << r.sequence_length << " batch=" << r.batch_size
              << " hidden=" << r.hidden_size << " seed=" << r.seed << " accuracy=" << format_double(r.accuracy)
              << " epochs=" << r.epochs_run << '\n';
  };
  const auto result = harness::run_grid(data, grid, opts);

  const fs::path dir = require(a.c.out, "--out");
  fs::create_directories(dir);
  const auto runs = harness::runs_table(result.runs);
  harness::write_csv_file((dir / "runs.csv").string(), runs);
  harness::write_csv_file((dir / "table1.csv").string(), harness::summary_table(result.datasets));
  write_grid_outputs(dir, runs);
  harness::write_csv(std::cout, harness::read_csv_file((dir / "summary.csv").string()));
  return kOk;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
  Common c;
  std::string model, scenes, svg_dir;
  std::vector<int> prefixes;
};

int cmd_detect(const DetectArgs& a) {
  const auto model = seqnet::load_checkpoint(require(a.model, "--model"));
  const auto bins = read_scene_dir(require(a.scenes, "--scenes"));
  const auto sets = harness::detect_flocks(model, bins, {a.c.threshold, a.prefixes});
  std::ostringstream report;
  write_flock_report(report, sets);
  if (a.c.out.empty())
    std::cout << report.str();
  else
    write_text(a.c.out, report.str());
  if (!a.svg_dir.empty()) {
    fs::create_directories(a.svg_dir);
    for (std::size_t i = 0; i < bins.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "scene_%05lld.svg", static_cast<long long>(bins[i].bin_index));
      write_text(fs::path(a.svg_dir) / name, harness::render_scene(bins[i], sets[i]));
    }
  }
  std::cerr << "histogram " << histogram_json(size_histogram(sets)) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  Common c;
  std::string model, input, groups;
};

int cmd_validate(const ValidateArgs& a, bool seq_len_given) {
  const auto model = seqnet::load_checkpoint(require(a.model, "--model"));
  if (seq_len_given && a.c.seq_len != model.config.sequence_length)
    throw ConfigMismatch("checkpoint sequence length " + std::to_string(model.config.sequence_length) +
                         " differs from requested " + std::to_string(a.c.seq_len));
  const Dataset data = load_dataset(a.input, require(a.groups, "--groups"));
  const auto bins = build_scenes(data, a.c.bin_ms, model.config.sequence_length);
  const auto v = harness::validate_detection(model, bins, data.groups, {a.c.threshold, {}});

  harness::CsvTable t{{"metric", "value"}, {}};
  auto row = [&](const char* k, const std::string& val) { t.rows.push_back({k, val}); };
  row("scenes", std::to_string(bins.size()));
  row("truth_groups", std::to_string(v.metrics.truth_groups));
  row("matched_groups", std::to_string(v.metrics.matched_groups));
  row("exact_match_rate", format_double(v.metrics.exact_match_rate()));
  row("vacuous_truth", v.metrics.vacuous_truth() ? "1" : "0");
  row("pairwise_precision", format_double(v.metrics.precision()));
  row("pairwise_recall", format_double(v.metrics.recall()));
  row("pairwise_f1", format_double(v.metrics.f1()));
  row("no_predictions", v.metrics.no_predictions() ? "1" : "0");
  row("threshold", format_double(a.c.threshold));
  harness::write_csv(std::cout, t);
  const std::string hist = histogram_json(size_histogram(v.flocks));
  std::cout << "histogram," << hist << '\n';
  if (!a.c.out.empty()) {
    const fs::path dir = a.c.out;
    fs::create_directories(dir);
    harness::write_csv_file((dir / "metrics.csv").string(), t);
    std::ostringstream report;
    write_flock_report(report, v.flocks);
    write_text(dir / "flocks.jsonl", report.str());
    write_text(dir / "histogram.json", hist + "\n");
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  Common c;
  std::string grid_runs, bins;
};

int cmd_plot(const PlotArgs& a) {
  const fs::path dir = require(a.c.out, "--out");
  if (a.grid_runs.empty() && a.bins.empty()) throw UsageError("plot needs --runs or --bins");
  fs::create_directories(dir);
  if (!a.grid_runs.empty()) write_grid_outputs(dir, harness::read_csv_file(a.grid_runs));
  if (!a.bins.empty()) write_text(dir / "members_per_bin.svg", harness::plot_members_per_bin(harness::read_csv_file(a.bins)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian flock detection from pairwise trajectory classification"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic trajectory set with ground-truth groups");
  add_seed(*s, synth.c);
  add_out(*s, synth.c, "Output directory");
  add_config(*s, synth.c);
  s->add_option("--flocks", synth.flocks, "Number of flocks");
  s->add_option("--singletons", synth.singletons, "Number of independent walkers");
  s->add_option("--flock-sizes", synth.sizes, "Size distribution, e.g. 2:0.7,3:0.3");
  s->add_option("--duration-ms", synth.duration_ms, "Track duration");
  s->add_option("--period-ms", synth.period_ms, "Sampling period");
  s->add_option("--start-spread-ms", synth.spread_ms, "Spread of track start times");
  s->add_option("--cohesion-mm", synth.cohesion, "Flock cohesion radius");
  s->add_option("--noise-mm", synth.noise, "Position noise standard deviation");
  s->add_option("--arena-mm", synth.arena, "Side of the square arena");

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Build scene bins, the pair dataset and its summary row");
  add_seed(*p, prep.c);
  add_seq_len(*p, prep.c);
  add_bin_ms(*p, prep.c);
  add_out(*p, prep.c, "Output directory");
  add_config(*p, prep.c);
  p->add_option("--input", prep.input, "Trajectory CSV");
  p->add_option("--groups", prep.groups, "Group annotation file");
  p->add_option("--ratio", prep.ratio, "Negatives per positive")->capture_default_str();
  p->add_option("--balance", prep.balance, "Imbalance strategy recorded for training")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a pair classifier and save a checkpoint");
  add_seed(*t, tr.c);
  add_out(*t, tr.c, "Checkpoint path");
  add_config(*t, tr.c);
  add_model_options(*t, tr.m);
  t->add_option("--data", tr.data, "Pair dataset directory from prepare");
  t->add_option("--history", tr.history, "Write the per-epoch history CSV here");

  GridArgs gr;
  auto* g = app.add_subcommand("grid", "Train every combination of the experiment grid");
  add_seed(*g, gr.c);
  add_bin_ms(*g, gr.c);
  add_out(*g, gr.c, "Output directory");
  add_config(*g, gr.c);
  add_model_options(*g, gr.m);
  g->add_option("--input", gr.input, "Trajectory CSV");
  g->add_option("--groups", gr.groups, "Group annotation file");
  g->add_option("--seq-lens", gr.seq_lens, "Sequence lengths")->delimiter(',')->capture_default_str();
  g->add_option("--batches", gr.batches, "Batch sizes")->delimiter(',')->capture_default_str();
  g->add_option("--hiddens", gr.hiddens, "Hidden sizes")->delimiter(',')->capture_default_str();
  g->add_option("--archs", gr.archs, "Architectures")->delimiter(',')->capture_default_str();
  g->add_option("--repeats", gr.repeats, "Seeds per cell")->capture_default_str();
  g->add_option("--workers", gr.workers, "Parallel worker slots (0 = hardware threads)")->capture_default_str();
  g->add_option("--ratio", gr.ratio, "Negatives per positive")->capture_default_str();

  DetectArgs det;
  auto* d = app.add_subcommand("detect", "Detect flocks in prepared scene bins");
  add_threshold(*d, det.c);
  add_out(*d, det.c, "Report path (JSON lines); stdout when omitted");
  add_config(*d, det.c);
  d->add_option("--model", det.model, "Checkpoint");
  d->add_option("--scenes", det.scenes, "Scene directory from prepare");
  d->add_option("--svg-dir", det.svg_dir, "Write one trajectory plot per bin here");
  d->add_option("--consistency-prefixes", det.prefixes, "Prefix lengths every edge must also pass")
      ->delimiter(',');

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "Detect flocks and compare them with annotated groups");
  add_threshold(*v, val.c);
  add_seq_len(*v, val.c);
  add_bin_ms(*v, val.c);
  add_out(*v, val.c, "Directory for metrics, flock report and histogram");
  add_config(*v, val.c);
  v->add_option("--model", val.model, "Checkpoint");
  v->add_option("--input", val.input, "Trajectory CSV");
  v->add_option("--groups", val.groups, "Group annotation file");

  PlotArgs pl;
  auto* pc = app.add_subcommand("plot", "Regenerate SVG plots from CSV outputs");
  add_out(*pc, pl.c, "Output directory");
  pc->add_option("--runs", pl.grid_runs, "runs.csv from grid");
  pc->add_option("--bins", pl.bins, "bins.csv from prepare");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? kOk : kUsage;
    }
    struct Entry {
      CLI::App* sub;
      std::string* config;
    };
    for (const Entry& e : {Entry{s, &synth.c.config}, Entry{p, &prep.c.config}, Entry{t, &tr.c.config},
                           Entry{g, &gr.c.config}, Entry{d, &det.c.config}, Entry{v, &val.c.config}})
      if (e.sub->parsed() && !e.config->empty()) apply_config_file(*e.sub, *e.config);

    if (s->parsed()) return cmd_synth(synth);
    if (p->parsed()) return cmd_prepare(prep);
    if (t->parsed()) return cmd_train(tr);
    if (g->parsed()) return cmd_grid(gr);
    if (d->parsed()) return cmd_detect(det);
    if (v->parsed()) return cmd_validate(val, v->get_option("--seq-len")->count() > 0);
    if (pc->parsed()) return cmd_plot(pl);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const TrainingDiverged& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
