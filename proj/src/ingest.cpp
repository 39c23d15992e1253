#include "flock/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "flock/error.hpp"
#include "flock/random.hpp"

namespace flock {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const auto start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

bool looks_numeric(std::string_view s) {
  s = trim(s);
  if (s.empty()) return false;
  const char c = s.front();
  return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
}

constexpr std::size_t kCsvColumns = 7;

TrajectoryPoint point_from_fields(const std::vector<std::string_view>& fields) {
  if (fields.size() != kCsvColumns)
    throw InvalidInput("expected 7 columns, found " + std::to_string(fields.size()));
  return TrajectoryPoint::make(parse_seconds_to_ms(fields[0]), static_cast<AgentId>(parse_int(fields[1])),
                               parse_double(fields[2]), parse_double(fields[3]), parse_double(fields[4]),
                               parse_double(fields[5]), parse_double(fields[6]));
}

}  // namespace

TrajectoryPoint parse_trajectory_row(std::string_view line) { return point_from_fields(split(trim(line), ',')); }

void write_trajectory_row(std::ostream& out, const TrajectoryPoint& p) {
  out << format_ms_as_seconds(p.timestamp_ms) << ',' << p.agent_id << ',' << format_double(p.x_mm) << ','
      << format_double(p.y_mm) << ',' << format_double(p.velocity_mm_s) << ','
      << format_double(p.motion_angle_rad) << ',' << format_double(p.face_angle_rad);
}

TimestampMs parse_seconds_to_ms(std::string_view text) {
  auto s = trim(text);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  const auto int_part = s.substr(0, dot);
  const auto frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac.empty()) throw InvalidInput("empty timestamp");
  for (char c : int_part)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw InvalidInput("bad timestamp '" + std::string(text) + "'");
  for (char c : frac)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw InvalidInput("bad timestamp '" + std::string(text) + "'");

  const long long whole = int_part.empty() ? 0 : parse_int(int_part);
  long long millis = 0;
  for (std::size_t i = 0; i < 3; ++i) millis = millis * 10 + (i < frac.size() ? frac[i] - '0' : 0);
  // Half-up on the magnitude of the scaled value, then apply the sign so
  // that negative inputs also round toward +infinity at exact halves.
  TimestampMs ms = whole * 1000 + millis;
  if (frac.size() > 3) {
    const int next = frac[3] - '0';
    const bool rest_nonzero =
        std::any_of(frac.begin() + 4, frac.end(), [](char c) { return c != '0'; });
    if (!negative) {
      if (next >= 5) ++ms;
    } else if (next > 5 || (next == 5 && rest_nonzero)) {
      ++ms;
    }
  }
  return negative ? -ms : ms;
}

std::string format_ms_as_seconds(TimestampMs ms) {
  const bool negative = ms < 0;
  const auto mag = negative ? -ms : ms;
  std::ostringstream os;
  if (negative) os << '-';
  os << mag / 1000 << '.';
  const auto frac = mag % 1000;
  os << static_cast<char>('0' + frac / 100) << static_cast<char>('0' + frac / 10 % 10)
     << static_cast<char>('0' + frac % 10);
  return os.str();
}

TrajectoryCsv parse_trajectory_csv(std::istream& in, const CsvParseOptions& opts) {
  TrajectoryCsv out;
  std::vector<std::size_t> bad_lines;
  std::set<std::pair<AgentId, TimestampMs>> seen;
  std::map<AgentId, std::vector<TrajectoryPoint>> rows_by_agent;

  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto fields = split(t, ',');
    if (first_content) {
      first_content = false;
      if (!looks_numeric(fields.front())) {
        out.header_skipped = true;
        continue;
      }
      if (fields.size() != kCsvColumns) {
        throw IngestFailure("line " + std::to_string(lineno) + ": expected " +
                            std::to_string(kCsvColumns) + " columns, found " +
                            std::to_string(fields.size()));
      }
    }
    ++out.rows;
    try {
      const auto p = point_from_fields(fields);
      const auto id = p.agent_id;
      if (!seen.emplace(id, p.timestamp_ms).second) {
        ++out.duplicate_rows;
        out.diagnostics.push_back({lineno, "DuplicateRecord: agent " + std::to_string(id) +
                                               " at " + std::to_string(p.timestamp_ms) + " ms"});
        continue;
      }
      rows_by_agent[id].push_back(p);
    } catch (const Error& e) {
      bad_lines.push_back(lineno);
      out.diagnostics.push_back({lineno, e.what()});
    }
  }

  out.bad_rows = bad_lines.size();
  const std::size_t allowed = opts.max_bad_rows ? *opts.max_bad_rows : out.rows / 100;
  if (out.bad_rows > allowed) {
    std::ostringstream msg;
    msg << out.bad_rows << " malformed rows (limit " << allowed << ") at lines";
    for (std::size_t i = 0; i < bad_lines.size() && i < 20; ++i) msg << ' ' << bad_lines[i];
    if (bad_lines.size() > 20) msg << " ...";
    throw IngestFailure(msg.str());
  }

  for (auto& [id, pts] : rows_by_agent) {
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
    out.trajectories.emplace(id, Trajectory{id, std::move(pts)});
  }
  return out;
}

TrajectoryCsv read_trajectory_csv(const std::string& path, const CsvParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IngestFailure("cannot open " + path);
  return parse_trajectory_csv(in, opts);
}

void write_trajectory_csv(std::ostream& out, const std::map<AgentId, Trajectory>& trajectories) {
  std::vector<const TrajectoryPoint*> rows;
  for (const auto& [id, tr] : trajectories)
    for (const auto& p : tr.points) rows.push_back(&p);
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
    return std::tie(a->timestamp_ms, a->agent_id) < std::tie(b->timestamp_ms, b->agent_id);
  });
  for (const auto* p : rows) {
    write_trajectory_row(out, *p);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

GroupAnnotation parse_group_row(std::string_view row, std::size_t line) {
  const auto where = line ? "line " + std::to_string(line) + ": " : std::string{};
  const auto tok = split_ws(row);
  if (tok.size() < 3) throw MalformedGroupRow(where + "too few fields");
  GroupAnnotation g;
  try {
    g.pedestrian_id = parse_int(tok[0]);
    g.group_size = static_cast<int>(parse_int(tok[1]));
  } catch (const InvalidInput& e) {
    throw MalformedGroupRow(where + e.what());
  }
  if (g.group_size < 2) throw MalformedGroupRow(where + "group size below 2");
  const std::size_t partners = static_cast<std::size_t>(g.group_size - 1);
  // id, size, partners..., count
  if (tok.size() < 2 + partners + 1) {
    const auto have = tok.size() >= 3 ? tok.size() - 3 : 0;
    throw MalformedGroupRow(where + "only " + std::to_string(have) + " partner(s) for group size " +
                            std::to_string(g.group_size));
  }
  try {
    for (std::size_t i = 0; i < partners; ++i) g.partner_ids.push_back(parse_int(tok[2 + i]));
    g.interacting_count = static_cast<int>(parse_int(tok[2 + partners]));
    if (g.interacting_count < 0) throw MalformedGroupRow(where + "negative interacting count");
    const std::size_t expected = 3 + partners + static_cast<std::size_t>(g.interacting_count);
    if (tok.size() != expected)
      throw MalformedGroupRow(where + "expected " + std::to_string(g.interacting_count) +
                              " interacting ids, found " + std::to_string(tok.size() - 3 - partners));
    for (int i = 0; i < g.interacting_count; ++i)
      g.interacting_ids.push_back(parse_int(tok[3 + partners + static_cast<std::size_t>(i)]));
  } catch (const InvalidInput& e) {
    throw MalformedGroupRow(where + e.what());
  }
  if (std::find(g.partner_ids.begin(), g.partner_ids.end(), g.pedestrian_id) != g.partner_ids.end())
    throw MalformedGroupRow(where + "pedestrian lists itself as partner");
  return g;
}

GroupFile parse_group_file(std::istream& in) {
  GroupFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    out.groups.push_back(parse_group_row(line, lineno));
  }
  return out;
}

GroupFile read_group_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestFailure("cannot open " + path);
  return parse_group_file(in);
}

void write_group_file(std::ostream& out, const std::vector<GroupAnnotation>& groups) {
  for (const auto& g : groups) {
    out << g.pedestrian_id << ' ' << g.group_size;
    for (auto p : g.partner_ids) out << ' ' << p;
    out << ' ' << g.interacting_count;
    for (auto p : g.interacting_ids) out << ' ' << p;
    out << '\n';
  }
}

Dataset make_dataset(std::map<AgentId, Trajectory> trajectories,
                     std::vector<GroupAnnotation> groups, std::string source_label) {
  Dataset ds;
  ds.trajectories = std::move(trajectories);
  ds.groups = std::move(groups);
  ds.source_label = std::move(source_label);

  std::set<AgentId> unresolved;
  std::map<AgentId, const GroupAnnotation*> by_id;
  for (const auto& g : ds.groups) by_id[g.pedestrian_id] = &g;
  for (const auto& g : ds.groups) {
    if (!ds.trajectories.count(g.pedestrian_id)) unresolved.insert(g.pedestrian_id);
    for (auto p : g.partner_ids) {
      if (!ds.trajectories.count(p)) unresolved.insert(p);
      const auto it = by_id.find(p);
      if (it == by_id.end()) {
        ds.diagnostics.push_back({0, "one-sided annotation: " + std::to_string(g.pedestrian_id) +
                                         " lists " + std::to_string(p) + " which has no row"});
      } else {
        const auto& back = it->second->partner_ids;
        if (std::find(back.begin(), back.end(), g.pedestrian_id) == back.end())
          ds.diagnostics.push_back({0, "inconsistent annotation: " + std::to_string(g.pedestrian_id) +
                                           " lists " + std::to_string(p) + " but not vice versa"});
      }
    }
  }
  ds.unresolved_ids.assign(unresolved.begin(), unresolved.end());
  return ds;
}

std::vector<PairLabel> extract_pair_labels(const Dataset& dataset) {
  std::set<PairLabel> pairs;
  for (const auto& g : dataset.groups) {
    if (g.group_size != 2 || g.partner_ids.size() != 1) continue;
    if (g.partner_ids[0] == g.pedestrian_id) continue;
    const auto [a, b] = canonical_pair(g.pedestrian_id, g.partner_ids[0]);
    pairs.insert(PairLabel{a, b, 1});
  }
  return {pairs.begin(), pairs.end()};
}

std::vector<AgentId> list_singletons(const Dataset& dataset) {
  std::set<AgentId> annotated;
  for (const auto& g : dataset.groups) {
    annotated.insert(g.pedestrian_id);
    annotated.insert(g.partner_ids.begin(), g.partner_ids.end());
  }
  std::vector<AgentId> out;
  for (const auto& [id, tr] : dataset.trajectories)
    if (!annotated.count(id)) out.push_back(id);
  return out;
}

std::vector<std::vector<AgentId>> annotated_groups(const std::vector<GroupAnnotation>& groups) {
  std::map<AgentId, AgentId> parent;
  auto find = [&](AgentId a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto add = [&](AgentId a) { parent.try_emplace(a, a); };
  for (const auto& g : groups) {
    add(g.pedestrian_id);
    for (auto p : g.partner_ids) {
      add(p);
      auto ra = find(g.pedestrian_id), rb = find(p);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
  std::map<AgentId, std::vector<AgentId>> sets;
  for (auto& [id, _] : parent) sets[find(id)].push_back(id);
  std::vector<std::vector<AgentId>> out;
  for (auto& [root, members] : sets)
    if (members.size() >= 2) out.push_back(std::move(members));
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_flocks < 0 || n_singletons < 0) throw InvalidConfig("synthetic counts must be >= 0");
  if (sample_period_ms <= 0) throw InvalidConfig("sample_period_ms must be positive");
  if (duration_ms < sample_period_ms) throw InvalidConfig("duration_ms shorter than one sample");
  if (start_spread_ms < 0) throw InvalidConfig("start_spread_ms must be >= 0");
  if (heading_period_ms <= 0) throw InvalidConfig("heading_period_ms must be positive");
  if (cohesion_radius_mm <= 0 || noise_std_mm < 0 || arena_mm <= 0 || mean_speed_mm_s < 0)
    throw InvalidConfig("synthetic geometry parameters out of range");
  double total = 0.0;
  for (const auto& [size, w] : flock_size_distribution) {
    if (size < 2) throw InvalidConfig("flock sizes must be >= 2");
    if (w < 0) throw InvalidConfig("flock size weights must be >= 0");
    total += w;
  }
  if (n_flocks > 0 && !(total > 0)) throw InvalidConfig("flock size weights must sum to a positive value");
}

namespace {

std::vector<std::pair<int, double>> parse_size_distribution(std::string_view text) {
  // "2:1,3:0.5"
  std::vector<std::pair<int, double>> out;
  for (auto item : split(text, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      out.emplace_back(static_cast<int>(parse_int(item)), 1.0);
    } else {
      out.emplace_back(static_cast<int>(parse_int(item.substr(0, colon))),
                       parse_double(item.substr(colon + 1)));
    }
  }
  return out;
}

}  // namespace

SyntheticConfig synthetic_config_from(const KeyValues& kv, SyntheticConfig c) {
  for (const auto& [k, v] : kv) {
    if (k == "n_flocks") c.n_flocks = static_cast<int>(parse_int(v));
    else if (k == "flock_size_distribution") c.flock_size_distribution = parse_size_distribution(v);
    else if (k == "n_singletons") c.n_singletons = static_cast<int>(parse_int(v));
    else if (k == "duration_ms") c.duration_ms = parse_int(v);
    else if (k == "sample_period_ms") c.sample_period_ms = parse_int(v);
    else if (k == "cohesion_radius_mm") c.cohesion_radius_mm = parse_double(v);
    else if (k == "noise_std_mm") c.noise_std_mm = parse_double(v);
    else if (k == "rng_seed" || k == "seed") c.rng_seed = static_cast<std::uint64_t>(parse_int(v));
    else if (k == "base_time_ms") c.base_time_ms = parse_int(v);
    else if (k == "start_spread_ms") c.start_spread_ms = parse_int(v);
    else if (k == "arena_mm") c.arena_mm = parse_double(v);
    else if (k == "mean_speed_mm_s") c.mean_speed_mm_s = parse_double(v);
    else if (k == "heading_period_ms") c.heading_period_ms = parse_int(v);
    else if (k == "first_agent_id") c.first_agent_id = parse_int(v);
    else throw InvalidConfig("unknown synthetic config key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValues to_key_values(const SyntheticConfig& c) {
  std::string dist;
  for (const auto& [size, w] : c.flock_size_distribution) {
    if (!dist.empty()) dist += ',';
    dist += std::to_string(size) + ':' + format_double(w);
  }
  return {{"n_flocks", std::to_string(c.n_flocks)},
          {"flock_size_distribution", dist},
          {"n_singletons", std::to_string(c.n_singletons)},
          {"duration_ms", std::to_string(c.duration_ms)},
          {"sample_period_ms", std::to_string(c.sample_period_ms)},
          {"cohesion_radius_mm", format_double(c.cohesion_radius_mm)},
          {"noise_std_mm", format_double(c.noise_std_mm)},
          {"rng_seed", std::to_string(c.rng_seed)},
          {"base_time_ms", std::to_string(c.base_time_ms)},
          {"start_spread_ms", std::to_string(c.start_spread_ms)},
          {"arena_mm", format_double(c.arena_mm)},
          {"mean_speed_mm_s", format_double(c.mean_speed_mm_s)},
          {"heading_period_ms", std::to_string(c.heading_period_ms)},
          {"first_agent_id", std::to_string(c.first_agent_id)}};
}

namespace {

// Shared walker for a flock (k >= 2 members) or a singleton (k = 1).
void simulate_group(const SyntheticConfig& cfg, Rng& rng, const std::vector<AgentId>& ids,
                    std::map<AgentId, Trajectory>& out) {
  const auto n_points = static_cast<std::size_t>(cfg.duration_ms / cfg.sample_period_ms);
  const auto ticks = cfg.start_spread_ms / cfg.sample_period_ms;
  const TimestampMs start =
      cfg.base_time_ms +
      static_cast<TimestampMs>(ticks > 0 ? rng.below(static_cast<std::uint64_t>(ticks)) : 0) *
          cfg.sample_period_ms;
  const double dt_s = static_cast<double>(cfg.sample_period_ms) / 1000.0;
  const auto steps_per_heading =
      std::max<std::int64_t>(1, cfg.heading_period_ms / cfg.sample_period_ms);

  const double arena = cfg.arena_mm;
  double cx = rng.uniform(0.0, arena);
  double cy = rng.uniform(0.0, arena);
  double heading = rng.uniform(-kPi, kPi);
  const double speed = cfg.mean_speed_mm_s * rng.uniform(0.8, 1.2);

  const std::size_t k = ids.size();
  const double R = cfg.cohesion_radius_mm;
  // Fixed formation offsets on a circle of radius R/2; they sum to zero.
  std::vector<std::pair<double, double>> offsets(k, {0.0, 0.0});
  if (k >= 2) {
    const double phase = rng.uniform(-kPi, kPi);
    for (std::size_t i = 0; i < k; ++i) {
      const double a = phase + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(k);
      offsets[i] = {0.5 * R * std::cos(a), 0.5 * R * std::sin(a)};
    }
  }
  const double noise_cap = k >= 2 ? 0.25 * R : 3.0 * cfg.noise_std_mm;

  for (auto id : ids) out[id] = Trajectory{id, {}};
  std::vector<std::pair<double, double>> noise(k);

  for (std::size_t step = 0; step < n_points; ++step) {
    if (step > 0) {
      if (static_cast<std::int64_t>(step) % steps_per_heading == 0) heading += rng.normal(0.0, 0.6);
      cx += speed * dt_s * std::cos(heading);
      cy += speed * dt_s * std::sin(heading);
      // reflect off the arena walls
      if (cx < 0.0 || cx > arena) {
        cx = cx < 0.0 ? -cx : 2.0 * arena - cx;
        heading = kPi - heading;
      }
      if (cy < 0.0 || cy > arena) {
        cy = cy < 0.0 ? -cy : 2.0 * arena - cy;
        heading = -heading;
      }
      heading = normalize_angle(heading);
    }
    for (std::size_t i = 0; i < k; ++i) {
      double nx = rng.normal(0.0, cfg.noise_std_mm);
      double ny = rng.normal(0.0, cfg.noise_std_mm);
      const double norm = std::hypot(nx, ny);
      if (norm > noise_cap) {
        nx *= noise_cap / norm;
        ny *= noise_cap / norm;
      }
      noise[i] = {nx, ny};
    }
    const TimestampMs t = start + static_cast<TimestampMs>(step) * cfg.sample_period_ms;
    for (std::size_t i = 0; i < k; ++i) {
      const double v = std::max(0.0, speed + rng.normal(0.0, 0.03 * speed));
      const double motion = heading + rng.normal(0.0, 0.05);
      const double face = heading + rng.normal(0.0, 0.15);
      out[ids[i]].points.push_back(TrajectoryPoint::make(
          t, ids[i], cx + offsets[i].first + noise[i].first, cy + offsets[i].second + noise[i].second,
          v, motion, face));
    }
  }
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.rng_seed);
  std::map<AgentId, Trajectory> trajectories;
  std::vector<GroupAnnotation> groups;

  double total_weight = 0.0;
  for (const auto& [s, w] : config.flock_size_distribution) total_weight += w;

  AgentId next_id = config.first_agent_id;
  for (int f = 0; f < config.n_flocks; ++f) {
    double pick = rng.uniform() * total_weight;
    int size = config.flock_size_distribution.back().first;
    for (const auto& [s, w] : config.flock_size_distribution) {
      if (pick < w) {
        size = s;
        break;
      }
      pick -= w;
    }
    std::vector<AgentId> ids;
    for (int i = 0; i < size; ++i) ids.push_back(next_id++);
    simulate_group(config, rng, ids, trajectories);
    for (auto id : ids) {
      GroupAnnotation g;
      g.pedestrian_id = id;
      g.group_size = size;
      for (auto other : ids)
        if (other != id) g.partner_ids.push_back(other);
      g.interacting_count = static_cast<int>(g.partner_ids.size());
      g.interacting_ids = g.partner_ids;
      groups.push_back(std::move(g));
    }
  }
  for (int s = 0; s < config.n_singletons; ++s) simulate_group(config, rng, {next_id++}, trajectories);

  return make_dataset(std::move(trajectories), std::move(groups),
                      "synthetic-seed-" + std::to_string(config.rng_seed));
}

}  // namespace flock
