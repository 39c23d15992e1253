#include "flock/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "flock/error.hpp"
#include "flock/keyvalue.hpp"
#include "flock/random.hpp"

namespace flock {

const AgentBlock* SceneBin::block_for(AgentId id) const {
  for (const auto& b : blocks)
    if (b.agent_id == id) return &b;
  return nullptr;
}

std::int64_t time_bin_index(TimestampMs t, TimestampMs t_min, std::int64_t width_ms) {
  if (width_ms <= 0) throw InvalidBinWidth("bin width must be positive, got " + std::to_string(width_ms));
  const auto d = t - t_min;
  auto q = d / width_ms;
  if (d % width_ms != 0 && d < 0) --q;
  return q;
}

BinAssignment assign_time_bins(const Dataset& dataset, std::int64_t bin_width_ms, int sequence_length) {
  if (bin_width_ms <= 0)
    throw InvalidBinWidth("bin width must be positive, got " + std::to_string(bin_width_ms));
  if (sequence_length < 1) throw InvalidInput("sequence length must be >= 1");

  BinAssignment out;
  std::vector<std::pair<TimestampMs, AgentId>> firsts;
  for (const auto& [id, tr] : dataset.trajectories) {
    if (tr.points.size() < static_cast<std::size_t>(sequence_length)) {
      out.excluded_agents.push_back(id);
      continue;
    }
    firsts.emplace_back(tr.first_timestamp(), id);
  }
  if (firsts.empty()) return out;

  std::sort(firsts.begin(), firsts.end());
  out.t_min = firsts.front().first;
  std::map<std::int64_t, SceneBin> bins;
  for (const auto& [t, id] : firsts) {
    const auto idx = time_bin_index(t, out.t_min, bin_width_ms);
    auto& bin = bins[idx];
    bin.bin_index = idx;
    bin.bin_start_ms = out.t_min + idx * bin_width_ms;
    bin.bin_width_ms = bin_width_ms;
    bin.sequence_length = sequence_length;
    bin.member_ids.push_back(id);
  }
  for (auto& [idx, bin] : bins) out.bins.push_back(std::move(bin));
  return out;
}

std::vector<SceneBin> fill_sequence_blocks(const Dataset& dataset, std::vector<SceneBin> bins,
                                           int sequence_length, std::vector<Diagnostic>* diagnostics,
                                           const FillOptions& opts) {
  const auto L = static_cast<std::size_t>(sequence_length);
  std::vector<SceneBin> out;
  for (auto& bin : bins) {
    if (bin.sequence_length != sequence_length)
      throw ConfigMismatch("bin built for L=" + std::to_string(bin.sequence_length) +
                           " filled with L=" + std::to_string(sequence_length));
    SceneBin filled = bin;
    filled.member_ids.clear();
    filled.blocks.clear();
    for (auto id : bin.member_ids) {
      const auto it = dataset.trajectories.find(id);
      std::string reason;
      if (it == dataset.trajectories.end()) {
        reason = "no trajectory";
      } else if (it->second.points.size() < L) {
        reason = "fewer than L records";
      } else if (opts.max_gap_ms > 0) {
        const auto& pts = it->second.points;
        for (std::size_t k = 1; k < L; ++k) {
          if (pts[k].timestamp_ms - pts[k - 1].timestamp_ms > opts.max_gap_ms) {
            reason = "gap before record " + std::to_string(k);
            break;
          }
        }
      }
      if (!reason.empty()) {
        if (diagnostics)
          diagnostics->push_back({0, "bin " + std::to_string(bin.bin_index) + ": dropped agent " +
                                         std::to_string(id) + " (" + reason + ")"});
        continue;
      }
      const auto& pts = it->second.points;
      filled.blocks.push_back(AgentBlock{id, {pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(L)}});
    }
    if (filled.blocks.empty()) continue;
    std::sort(filled.blocks.begin(), filled.blocks.end(), [](const auto& a, const auto& b) {
      return std::pair(a.points.front().timestamp_ms, a.agent_id) <
             std::pair(b.points.front().timestamp_ms, b.agent_id);
    });
    for (const auto& b : filled.blocks) filled.member_ids.push_back(b.agent_id);
    out.push_back(std::move(filled));
  }
  return out;
}

std::vector<SceneBin> build_scenes(const Dataset& dataset, std::int64_t bin_width_ms, int sequence_length,
                                   std::vector<Diagnostic>* diagnostics) {
  auto assignment = assign_time_bins(dataset, bin_width_ms, sequence_length);
  return fill_sequence_blocks(dataset, std::move(assignment.bins), sequence_length, diagnostics);
}

// ---------------------------------------------------------------------------

std::string to_string(BalanceStrategy s) {
  switch (s) {
    case BalanceStrategy::weighted_loss: return "weighted_loss";
    case BalanceStrategy::oversample: return "oversample";
    case BalanceStrategy::undersample: return "undersample";
    case BalanceStrategy::synthetic_interpolation: return "synthetic_interpolation";
  }
  return "weighted_loss";
}

BalanceStrategy balance_strategy_from(std::string_view s) {
  if (s == "weighted_loss") return BalanceStrategy::weighted_loss;
  if (s == "oversample") return BalanceStrategy::oversample;
  if (s == "undersample") return BalanceStrategy::undersample;
  if (s == "synthetic_interpolation") return BalanceStrategy::synthetic_interpolation;
  throw InvalidConfig("unknown balance strategy '" + std::string(s) + "'");
}

void PairDatasetSpec::validate() const {
  if (sequence_length < 2) throw InvalidConfig("sequence length must be > 1");
  if (!(negative_ratio > 0.0)) throw InvalidConfig("negative_ratio must be > 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidConfig("train_fraction must be in (0,1)");
}

namespace {

std::vector<TrajectoryPoint> prefix(const Trajectory& tr, std::size_t L) {
  return {tr.points.begin(), tr.points.begin() + static_cast<std::ptrdiff_t>(L)};
}

}  // namespace

PairDataset build_pair_dataset(const Dataset& dataset, const PairDatasetSpec& spec) {
  spec.validate();
  const auto L = static_cast<std::size_t>(spec.sequence_length);
  PairDataset out;
  out.sequence_length = spec.sequence_length;

  auto long_enough = [&](AgentId id) {
    const auto it = dataset.trajectories.find(id);
    return it != dataset.trajectories.end() && it->second.points.size() >= L;
  };
  for (const auto& [id, tr] : dataset.trajectories)
    if (tr.points.size() < L) ++out.excluded_agents;

  std::vector<PairSampleRaw> positives;
  for (const auto& pl : extract_pair_labels(dataset)) {
    if (!long_enough(pl.agent_a) || !long_enough(pl.agent_b)) continue;
    positives.push_back(PairSampleRaw{pl.agent_a, pl.agent_b, prefix(dataset.trajectories.at(pl.agent_a), L),
                                      prefix(dataset.trajectories.at(pl.agent_b), L), 1});
  }
  if (positives.empty()) return out;

  std::vector<AgentId> singles;
  for (auto id : list_singletons(dataset))
    if (long_enough(id)) singles.push_back(id);

  const auto wanted = static_cast<std::size_t>(
      std::llround(spec.negative_ratio * static_cast<double>(positives.size())));
  const std::size_t s = singles.size();
  const std::size_t available = s < 2 ? 0 : s * (s - 1) / 2;
  if (available < wanted)
    throw InsufficientNegatives("need " + std::to_string(wanted) + " negative pairs, only " +
                                std::to_string(available) + " available from " + std::to_string(s) +
                                " singletons");

  Rng rng(spec.rng_seed);
  std::vector<std::pair<AgentId, AgentId>> neg_pairs;
  if (available <= 200'000) {
    std::vector<std::pair<AgentId, AgentId>> all;
    all.reserve(available);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) all.emplace_back(singles[i], singles[j]);
    rng.shuffle(all);
    neg_pairs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(wanted));
  } else {
    std::set<std::pair<AgentId, AgentId>> chosen;
    while (chosen.size() < wanted) {
      const auto i = rng.below(s), j = rng.below(s);
      if (i == j) continue;
      const auto p = canonical_pair(singles[i], singles[j]);
      if (chosen.insert(p).second) neg_pairs.push_back(p);
    }
  }
  std::vector<PairSampleRaw> negatives;
  for (const auto& [a, b] : neg_pairs)
    negatives.push_back(PairSampleRaw{a, b, prefix(dataset.trajectories.at(a), L),
                                      prefix(dataset.trajectories.at(b), L), 0});

  // stratified split
  rng.shuffle(positives);
  rng.shuffle(negatives);
  auto split_into = [&](std::vector<PairSampleRaw>& cls) {
    const auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(cls.size())));
    for (std::size_t i = 0; i < cls.size(); ++i)
      (i < n_train ? out.train : out.test).push_back(std::move(cls[i]));
  };
  split_into(positives);
  split_into(negatives);
  rng.shuffle(out.train);
  rng.shuffle(out.test);
  return out;
}

TrajectoryPoint interpolate_point(const TrajectoryPoint& p, const TrajectoryPoint& q, double lambda) {
  auto lerp = [lambda](double a, double b) { return a + lambda * (b - a); };
  auto arc = [lambda](double a, double b) { return normalize_angle(a + lambda * normalize_angle(b - a)); };
  TrajectoryPoint r;
  r.timestamp_ms = p.timestamp_ms + static_cast<TimestampMs>(std::llround(
                                        lambda * static_cast<double>(q.timestamp_ms - p.timestamp_ms)));
  r.agent_id = p.agent_id;
  r.x_mm = lerp(p.x_mm, q.x_mm);
  r.y_mm = lerp(p.y_mm, q.y_mm);
  r.velocity_mm_s = lerp(p.velocity_mm_s, q.velocity_mm_s);
  r.motion_angle_rad = arc(p.motion_angle_rad, q.motion_angle_rad);
  r.face_angle_rad = arc(p.face_angle_rad, q.face_angle_rad);
  return r;
}

std::vector<PairSampleRaw> interpolate_synthetic_positives(const std::vector<PairSampleRaw>& samples, int k,
                                                           std::uint64_t rng_seed) {
  std::vector<const PairSampleRaw*> pos;
  for (const auto& s : samples)
    if (s.label == 1) pos.push_back(&s);
  if (k <= 0) return {};
  if (pos.size() < 2)
    throw CannotInterpolate("need at least 2 positive samples, have " + std::to_string(pos.size()));

  Rng rng(rng_seed);
  std::vector<PairSampleRaw> out;
  for (int n = 0; n < k; ++n) {
    const auto i = rng.below(pos.size());
    auto j = rng.below(pos.size() - 1);
    if (j >= i) ++j;
    const double lambda = rng.uniform(0.25, 0.75);
    const auto& s1 = *pos[i];
    const auto& s2 = *pos[j];
    if (s1.block_a.size() != s2.block_a.size() || s1.block_b.size() != s2.block_b.size())
      throw CannotInterpolate("positive samples differ in length");
    PairSampleRaw r;
    r.agent_a = -2 * static_cast<AgentId>(n) - 2;
    r.agent_b = -2 * static_cast<AgentId>(n) - 1;
    r.label = 1;
    for (std::size_t t = 0; t < s1.block_a.size(); ++t) {
      r.block_a.push_back(interpolate_point(s1.block_a[t], s2.block_a[t], lambda));
      r.block_a.back().agent_id = r.agent_a;
    }
    for (std::size_t t = 0; t < s1.block_b.size(); ++t) {
      r.block_b.push_back(interpolate_point(s1.block_b[t], s2.block_b[t], lambda));
      r.block_b.back().agent_id = r.agent_b;
    }
    out.push_back(std::move(r));
  }
  return out;
}

BalancedSet apply_balance(std::vector<PairSampleRaw> train, BalanceStrategy strategy, std::uint64_t rng_seed) {
  BalancedSet out;
  std::vector<PairSampleRaw> pos, neg;
  for (auto& s : train) (s.label == 1 ? pos : neg).push_back(std::move(s));
  const auto n_pos = pos.size(), n_neg = neg.size();
  Rng rng(rng_seed);

  auto assemble = [&]() {
    out.samples = std::move(pos);
    out.samples.insert(out.samples.end(), std::make_move_iterator(neg.begin()),
                       std::make_move_iterator(neg.end()));
    rng.shuffle(out.samples);
  };

  if (n_pos == 0 || n_neg == 0 || n_pos == n_neg) {
    assemble();
    return out;
  }
  auto& minority = n_pos < n_neg ? pos : neg;
  auto& majority = n_pos < n_neg ? neg : pos;
  switch (strategy) {
    case BalanceStrategy::weighted_loss: {
      const double n = static_cast<double>(n_pos + n_neg);
      out.weight_positive = n / (2.0 * static_cast<double>(n_pos));
      out.weight_negative = n / (2.0 * static_cast<double>(n_neg));
      break;
    }
    case BalanceStrategy::oversample: {
      const auto base = minority.size();
      while (minority.size() < majority.size()) minority.push_back(minority[rng.below(base)]);
      break;
    }
    case BalanceStrategy::undersample:
      rng.shuffle(majority);
      majority.resize(minority.size());
      break;
    case BalanceStrategy::synthetic_interpolation:
      if (n_pos < n_neg && n_pos >= 2) {
        auto extra = interpolate_synthetic_positives(pos, static_cast<int>(n_neg - n_pos), rng.next());
        pos.insert(pos.end(), extra.begin(), extra.end());
      } else {
        const auto base = minority.size();
        while (minority.size() < majority.size()) minority.push_back(minority[rng.below(base)]);
      }
      break;
  }
  assemble();
  return out;
}

// ---------------------------------------------------------------------------

void write_scene(std::ostream& out, const SceneBin& bin) {
  out << "# flock scene v1\n";
  out << "bin_index = " << bin.bin_index << '\n';
  out << "bin_start_ms = " << bin.bin_start_ms << '\n';
  out << "bin_width_ms = " << bin.bin_width_ms << '\n';
  out << "sequence_length = " << bin.sequence_length << '\n';
  out << "member_count = " << bin.blocks.size() << '\n';
  for (const auto& b : bin.blocks) {
    out << "agent = " << b.agent_id << '\n';
    for (const auto& p : b.points) {
      write_trajectory_row(out, p);
      out << '\n';
    }
  }
}

SceneBin read_scene(std::istream& in) {
  SceneBin bin;
  std::string line;
  KeyValues header;
  AgentBlock* current = nullptr;
  long long member_count = -1;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq != std::string_view::npos) {
      const auto key = trim(t.substr(0, eq));
      const auto value = trim(t.substr(eq + 1));
      if (key == "agent") {
        bin.blocks.push_back(AgentBlock{parse_int(value), {}});
        current = &bin.blocks.back();
      } else if (key == "bin_index") {
        bin.bin_index = parse_int(value);
      } else if (key == "bin_start_ms") {
        bin.bin_start_ms = parse_int(value);
      } else if (key == "bin_width_ms") {
        bin.bin_width_ms = parse_int(value);
      } else if (key == "sequence_length") {
        bin.sequence_length = static_cast<int>(parse_int(value));
      } else if (key == "member_count") {
        member_count = parse_int(value);
      } else {
        throw InvalidInput("scene line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
      }
      continue;
    }
    if (!current) throw InvalidInput("scene line " + std::to_string(lineno) + ": record before agent header");
    current->points.push_back(parse_trajectory_row(t));
  }
  if (member_count >= 0 && static_cast<std::size_t>(member_count) != bin.blocks.size())
    throw InvalidInput("scene declares " + std::to_string(member_count) + " members, found " +
                       std::to_string(bin.blocks.size()));
  for (const auto& b : bin.blocks) {
    if (static_cast<int>(b.points.size()) != bin.sequence_length)
      throw InvalidInput("scene agent " + std::to_string(b.agent_id) + " has " + std::to_string(b.points.size()) +
                         " records, expected " + std::to_string(bin.sequence_length));
    bin.member_ids.push_back(b.agent_id);
  }
  return bin;
}

void write_scene_dir(const std::filesystem::path& dir, const std::vector<SceneBin>& bins) {
  std::filesystem::create_directories(dir);
  for (const auto& bin : bins) {
    char name[64];
    std::snprintf(name, sizeof name, "scene_%05lld.txt", static_cast<long long>(bin.bin_index));
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    write_scene(out, bin);
  }
}

std::vector<SceneBin> read_scene_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::exists(dir)) throw IngestFailure("scene directory " + dir.string() + " does not exist");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("scene_", 0) == 0 && e.path().extension() == ".txt")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SceneBin> bins;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      bins.push_back(read_scene(in));
    } catch (const Error& e) {
      throw IngestFailure(f.string() + ": " + e.what());
    }
  }
  std::sort(bins.begin(), bins.end(), [](const auto& a, const auto& b) { return a.bin_index < b.bin_index; });
  return bins;
}

void write_pair_dataset(const std::filesystem::path& dir, const PairDataset& data) {
  std::filesystem::create_directories(dir);
  std::ofstream info(dir / "info.txt");
  write_key_values(info, {{"sequence_length", std::to_string(data.sequence_length)},
                          {"excluded_agents", std::to_string(data.excluded_agents)}});
  std::ofstream manifest(dir / "manifest.csv");
  std::ofstream blocks(dir / "blocks.csv");
  manifest << "sample_id,agent_a,agent_b,label,split\n";
  blocks << "sample_id,side,time,agent,x,y,velocity,motion_angle,face_angle\n";
  std::size_t id = 0;
  auto emit = [&](const std::vector<PairSampleRaw>& v, const char* split) {
    for (const auto& s : v) {
      manifest << id << ',' << s.agent_a << ',' << s.agent_b << ',' << s.label << ',' << split << '\n';
      for (const auto& p : s.block_a) {
        blocks << id << ",a,";
        write_trajectory_row(blocks, p);
        blocks << '\n';
      }
      for (const auto& p : s.block_b) {
        blocks << id << ",b,";
        write_trajectory_row(blocks, p);
        blocks << '\n';
      }
      ++id;
    }
  };
  emit(data.train, "train");
  emit(data.test, "test");
  if (!manifest || !blocks) throw Error("failed writing pair dataset to " + dir.string());
}

PairDataset read_pair_dataset(const std::filesystem::path& dir) {
  std::ifstream info(dir / "info.txt"), manifest(dir / "manifest.csv"), blocks(dir / "blocks.csv");
  if (!info || !manifest || !blocks) throw IngestFailure("incomplete pair dataset in " + dir.string());
  PairDataset out;
  const auto kv = read_key_values(info);
  out.sequence_length = static_cast<int>(parse_int(kv.at("sequence_length")));
  out.excluded_agents = static_cast<std::size_t>(parse_int(kv.at("excluded_agents")));

  struct Entry {
    PairSampleRaw sample;
    bool train = true;
  };
  std::map<long long, Entry> entries;
  std::string line;
  std::getline(manifest, line);  // header
  while (std::getline(manifest, line)) {
    if (trim(line).empty()) continue;
    std::istringstream is(line);
    std::string f[5];
    for (auto& x : f) std::getline(is, x, ',');
    Entry e;
    e.sample.agent_a = parse_int(f[1]);
    e.sample.agent_b = parse_int(f[2]);
    e.sample.label = static_cast<int>(parse_int(f[3]));
    e.train = trim(f[4]) == "train";
    entries[parse_int(f[0])] = std::move(e);
  }
  std::getline(blocks, line);
  while (std::getline(blocks, line)) {
    if (trim(line).empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw IngestFailure("bad blocks.csv row");
    const auto sid = parse_int(std::string_view(line).substr(0, c1));
    const auto side = trim(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
    auto it = entries.find(sid);
    if (it == entries.end()) throw IngestFailure("blocks.csv references unknown sample " + std::to_string(sid));
    auto p = parse_trajectory_row(std::string_view(line).substr(c2 + 1));
    (side == "a" ? it->second.sample.block_a : it->second.sample.block_b).push_back(p);
  }
  for (auto& [id, e] : entries) (e.train ? out.train : out.test).push_back(std::move(e.sample));
  return out;
}

}  // namespace flock
