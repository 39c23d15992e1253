#include "flock/aggregate.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <sstream>

#include "flock/error.hpp"
#include "flock/features.hpp"

namespace flock {

void UnionFind::add(AgentId id) { parent_.try_emplace(id, id); }

AgentId UnionFind::parent(AgentId id) const {
  const auto it = parent_.find(id);
  if (it == parent_.end()) throw InvalidInput("unknown agent " + std::to_string(id));
  return it->second;
}

AgentId UnionFind::find_root(AgentId id) {
  add(id);
  AgentId root = id;
  for (AgentId p = parent_[root]; p != root; p = parent_[root]) {
    root = p;
    ++traversals_;
  }
  for (AgentId cur = id; cur != root;) {
    AgentId next = parent_[cur];
    parent_[cur] = root;
    cur = next;
  }
  return root;
}

void UnionFind::unite(AgentId a, AgentId b) {
  const AgentId ra = find_root(a);
  const AgentId rb = find_root(b);
  if (ra == rb) return;
  if (ra < rb)
    parent_[rb] = ra;
  else
    parent_[ra] = rb;
}

namespace {

std::vector<PairPrediction> score_pairs(const seqnet::SequenceModel& model, const SceneBin& bin, int length,
                                        double threshold) {
  std::vector<PairPrediction> out;
  const std::size_t n = bin.blocks.size();
  if (n < 2) return out;
  std::vector<FeatureMatrix> features;
  features.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = bin.blocks[i];
      const auto& b = bin.blocks[j];
      std::span<const TrajectoryPoint> pa(a.points.data(), static_cast<std::size_t>(length));
      std::span<const TrajectoryPoint> pb(b.points.data(), static_cast<std::size_t>(length));
      const bool swap = b.agent_id < a.agent_id;
      features.push_back(swap ? featurize_pair(pb, pa, model.config.dtw_mode)
                              : featurize_pair(pa, pb, model.config.dtw_mode));
      apply_scalers_inplace(model.scaler, features.back());
      const auto [lo, hi] = canonical_pair(a.agent_id, b.agent_id);
      out.push_back({lo, hi, 0.0, 0});
    }
  }
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < features.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, features.size() - start);
    const auto z = seqnet::forward_logits(model.config, model.params, std::span(features).subspan(start, len));
    for (std::size_t k = 0; k < len; ++k) {
      const double p = std::clamp(seqnet::sigmoid(z(static_cast<Eigen::Index>(k))), seqnet::kProbEpsilon,
                                  1.0 - seqnet::kProbEpsilon);
      out[start + k].probability = p;
      out[start + k].is_flock = seqnet::make_prediction(p, threshold).label;
    }
  }
  std::sort(out.begin(), out.end(), [](const PairPrediction& x, const PairPrediction& y) {
    return std::pair(x.agent_a, x.agent_b) < std::pair(y.agent_a, y.agent_b);
  });
  return out;
}

}  // namespace

std::vector<PairPrediction> evaluate_all_pairs(const seqnet::SequenceModel& model, const SceneBin& bin,
                                               double threshold) {
  if (bin.sequence_length != model.config.sequence_length)
    throw ConfigMismatch("model sequence length " + std::to_string(model.config.sequence_length) +
                         " does not match scene sequence length " + std::to_string(bin.sequence_length));
  for (const auto& b : bin.blocks)
    if (static_cast<int>(b.points.size()) != bin.sequence_length)
      throw InvalidInput("block for agent " + std::to_string(b.agent_id) + " is not filled");
  return score_pairs(model, bin, bin.sequence_length, threshold);
}

std::vector<PairPrediction> evaluate_prefix_pairs(const seqnet::SequenceModel& model, const SceneBin& bin,
                                                  int prefix_length, double threshold) {
  if (prefix_length < 1) throw InvalidConfig("prefix length must be positive");
  for (const auto& b : bin.blocks)
    if (static_cast<int>(b.points.size()) < prefix_length)
      throw InvalidInput("block for agent " + std::to_string(b.agent_id) + " is shorter than the prefix");
  return score_pairs(model, bin, prefix_length, threshold);
}

std::vector<PairPrediction> rethreshold(std::vector<PairPrediction> predictions, double threshold) {
  for (auto& p : predictions) p.is_flock = seqnet::make_prediction(p.probability, threshold).label;
  return predictions;
}

std::vector<PairPrediction> consistent_edges(std::span<const std::vector<PairPrediction>> passes) {
  if (passes.empty()) return {};
  std::vector<PairPrediction> out = passes.front();
  for (std::size_t k = 1; k < passes.size(); ++k) {
    const auto& pass = passes[k];
    if (pass.size() != out.size()) throw InvalidInput("consistency passes cover different pair sets");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (pass[i].agent_a != out[i].agent_a || pass[i].agent_b != out[i].agent_b)
        throw InvalidInput("consistency passes list pairs in different orders");
      out[i].is_flock &= pass[i].is_flock;
      out[i].probability = std::min(out[i].probability, pass[i].probability);
    }
  }
  return out;
}

FlockSet aggregate_flocks(std::span<const PairPrediction> predictions, std::span<const AgentId> all_members) {
  UnionFind uf;
  for (AgentId id : all_members) uf.add(id);
  for (const auto& p : predictions) {
    if (!uf.contains(p.agent_a) || !uf.contains(p.agent_b))
      throw InvalidInput("prediction references an agent outside the scene");
    if (p.is_flock == 1) uf.unite(p.agent_a, p.agent_b);
  }
  std::map<AgentId, std::vector<AgentId>> components;
  std::set<AgentId> members(all_members.begin(), all_members.end());
  for (AgentId id : members) components[uf.find_root(id)].push_back(id);

  FlockSet out;
  for (auto& [root, group] : components) {
    if (group.size() >= 2)
      out.flocks.push_back(std::move(group));
    else
      out.singletons.push_back(group.front());
  }
  // roots are component minima, so map order already sorts by smallest member
  std::sort(out.singletons.begin(), out.singletons.end());
  return out;
}

std::map<std::size_t, std::size_t> size_histogram(std::span<const FlockSet> sets) {
  std::map<std::size_t, std::size_t> h;
  for (const auto& s : sets)
    for (const auto& f : s.flocks) ++h[f.size()];
  return h;
}

std::string histogram_json(const std::map<std::size_t, std::size_t>& histogram) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [size, count] : histogram) {
    if (!first) os << ", ";
    first = false;
    os << '"' << size << "\": " << count;
  }
  os << '}';
  return os.str();
}

double ValidationMetrics::exact_match_rate() const {
  return truth_groups == 0 ? 1.0 : static_cast<double>(matched_groups) / static_cast<double>(truth_groups);
}

double ValidationMetrics::precision() const {
  const std::size_t predicted = true_positive_pairs + false_positive_pairs;
  return predicted == 0 ? 1.0 : static_cast<double>(true_positive_pairs) / static_cast<double>(predicted);
}

double ValidationMetrics::recall() const {
  const std::size_t actual = true_positive_pairs + false_negative_pairs;
  return actual == 0 ? 1.0 : static_cast<double>(true_positive_pairs) / static_cast<double>(actual);
}

double ValidationMetrics::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ValidationMetrics& ValidationMetrics::operator+=(const ValidationMetrics& o) {
  truth_groups += o.truth_groups;
  matched_groups += o.matched_groups;
  true_positive_pairs += o.true_positive_pairs;
  false_positive_pairs += o.false_positive_pairs;
  false_negative_pairs += o.false_negative_pairs;
  total_pairs += o.total_pairs;
  return *this;
}

ValidationMetrics validate_against_annotations(const FlockSet& detected,
                                               std::span<const std::vector<AgentId>> truth_groups) {
  std::map<AgentId, std::size_t> detected_label;
  std::size_t next = 0;
  for (const auto& f : detected.flocks) {
    for (AgentId id : f) detected_label[id] = next;
    ++next;
  }
  for (AgentId id : detected.singletons) detected_label[id] = next++;

  std::map<AgentId, std::size_t> truth_label;
  std::set<std::vector<AgentId>> detected_flocks(detected.flocks.begin(), detected.flocks.end());
  ValidationMetrics m;
  std::size_t group_no = 0;
  for (const auto& g : truth_groups) {
    std::vector<AgentId> inside;
    for (AgentId id : g)
      if (detected_label.count(id) != 0) inside.push_back(id);
    if (inside.size() < 2) continue;
    std::sort(inside.begin(), inside.end());
    ++m.truth_groups;
    if (detected_flocks.count(inside) != 0) ++m.matched_groups;
    for (AgentId id : inside) truth_label[id] = group_no;
    ++group_no;
  }

  std::vector<AgentId> members;
  members.reserve(detected_label.size());
  for (const auto& kv : detected_label) members.push_back(kv.first);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      ++m.total_pairs;
      const bool pred = detected_label[members[i]] == detected_label[members[j]];
      const auto ti = truth_label.find(members[i]);
      const auto tj = truth_label.find(members[j]);
      const bool truth = ti != truth_label.end() && tj != truth_label.end() && ti->second == tj->second;
      if (pred && truth) ++m.true_positive_pairs;
      if (pred && !truth) ++m.false_positive_pairs;
      if (!pred && truth) ++m.false_negative_pairs;
    }
  }
  return m;
}

namespace {

void write_id_list(std::ostream& out, const std::vector<AgentId>& ids) {
  out << '[';
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? ", " : "") << ids[i];
  out << ']';
}

}  // namespace

void write_flock_report(std::ostream& out, std::span<const FlockSet> sets) {
  for (const auto& s : sets) {
    out << "{\"bin_index\": " << s.bin_index << ", \"flocks\": [";
    for (std::size_t i = 0; i < s.flocks.size(); ++i) {
      out << (i ? ", " : "") << "{\"size\": " << s.flocks[i].size() << ", \"members\": ";
      write_id_list(out, s.flocks[i]);
      out << '}';
    }
    out << "], \"singletons\": ";
    write_id_list(out, s.singletons);
    out << "}\n";
  }
  out << "{\"histogram\": " << histogram_json(size_histogram(sets)) << "}\n";
}

}  // namespace flock
