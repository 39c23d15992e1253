#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "flock/aggregate.hpp"
#include "flock/error.hpp"
#include "flock/random.hpp"
#include "oracles.hpp"

using namespace flock;

namespace {

std::vector<PairPrediction> all_pairs(const std::vector<AgentId>& members, Rng& rng, double density) {
  std::vector<PairPrediction> out;
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double p = rng.uniform();
      out.push_back({members[i], members[j], p, p < density ? 1 : 0});
    }
  return out;
}

void expect_partition(const FlockSet& fs, std::vector<AgentId> members) {
  std::vector<AgentId> seen;
  for (const auto& f : fs.flocks) {
    EXPECT_GE(f.size(), 2u);
    EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
    seen.insert(seen.end(), f.begin(), f.end());
  }
  for (std::size_t i = 1; i < fs.flocks.size(); ++i) EXPECT_LT(fs.flocks[i - 1].front(), fs.flocks[i].front());
  EXPECT_TRUE(std::is_sorted(fs.singletons.begin(), fs.singletons.end()));
  seen.insert(seen.end(), fs.singletons.begin(), fs.singletons.end());
  std::sort(seen.begin(), seen.end());
  std::sort(members.begin(), members.end());
  EXPECT_EQ(seen, members);
}

SceneBin random_bin(Rng& rng, int n, int L) {
  SceneBin bin;
  bin.sequence_length = L;
  for (int i = 0; i < n; ++i) {
    AgentBlock b{static_cast<AgentId>(100 - 7 * i), {}};
    double x = rng.uniform(0, 5000), y = rng.uniform(0, 5000);
    for (int k = 0; k < L; ++k) {
      x += rng.normal(0, 200);
      y += rng.normal(0, 200);
      b.points.push_back(TrajectoryPoint::make(500 * k, b.agent_id, x, y, rng.uniform(0, 2000), rng.uniform(-3, 3),
                                               rng.uniform(-3, 3)));
    }
    bin.member_ids.push_back(b.agent_id);
    bin.blocks.push_back(std::move(b));
  }
  return bin;
}

seqnet::SequenceModel tiny_model(int L) {
  seqnet::ModelConfig c;
  c.arch = seqnet::Arch::lstm;
  c.hidden_size = 8;
  c.sequence_length = L;
  c.seed = 2;
  return seqnet::make_model(c);
}

}  // namespace

TEST(UnionFind, FindAndCompression) {
  UnionFind uf;
  EXPECT_EQ(uf.find_root(42), 42);
  uf.unite(2, 3);  // 3 -> 2
  uf.unite(1, 2);  // 2 -> 1, so 3 -> 2 -> 1
  EXPECT_EQ(uf.parent(3), 2);
  const auto before = uf.link_traversals();
  EXPECT_EQ(uf.find_root(3), 1);
  EXPECT_EQ(uf.link_traversals() - before, 2u);
  EXPECT_EQ(uf.parent(3), 1);
  const auto again = uf.link_traversals();
  EXPECT_EQ(uf.find_root(3), 1);
  EXPECT_EQ(uf.link_traversals() - again, 1u);
  EXPECT_THROW(uf.parent(99), InvalidInput);
}

TEST(UnionFind, UnionExamples) {
  UnionFind uf;
  uf.unite(5, 5);
  EXPECT_EQ(uf.find_root(5), 5);
  uf.unite(1, 2);
  uf.unite(2, 3);
  for (AgentId id : {1, 2, 3}) EXPECT_EQ(uf.find_root(id), 1);
}

TEST(UnionFind, TraversalBudgetAndOrderIndependence) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<std::pair<AgentId, AgentId>> ops;
    for (int k = 0; k < 40; ++k) ops.emplace_back(rng.below(n), rng.below(n));
    UnionFind a, b;
    for (AgentId i = 0; i < static_cast<AgentId>(n); ++i) a.add(i), b.add(i);
    for (const auto& [x, y] : ops) a.unite(x, y);
    auto shuffled = ops;
    rng.shuffle(shuffled);
    for (const auto& [x, y] : shuffled) b.unite(y, x);
    for (AgentId i = 0; i < static_cast<AgentId>(n); ++i) {
      const auto t0 = a.link_traversals();
      const auto r = a.find_root(i);
      EXPECT_LE(a.link_traversals() - t0, n);
      EXPECT_EQ(a.parent(i), r);
      EXPECT_EQ(r, b.find_root(i));
      const auto t1 = a.link_traversals();
      a.find_root(i);
      EXPECT_LE(a.link_traversals() - t1, 2u);
    }
  }
}

TEST(Aggregate, Examples) {
  const std::vector<AgentId> members{1, 2, 3, 4, 5};
  const std::vector<PairPrediction> preds{{1, 2, 0.95, 1}, {2, 3, 0.97, 1}, {4, 5, 0.1, 0}};
  const auto fs = aggregate_flocks(preds, members);
  EXPECT_EQ(fs.flocks, (std::vector<std::vector<AgentId>>{{1, 2, 3}}));
  EXPECT_EQ(fs.singletons, (std::vector<AgentId>{4, 5}));

  const auto none = aggregate_flocks(std::vector<PairPrediction>{{1, 2, 0.1, 0}}, members);
  EXPECT_TRUE(none.flocks.empty());
  EXPECT_EQ(none.singletons, members);

  Rng rng(1);
  const std::vector<AgentId> k{3, 9, 4, 11};
  const auto complete = aggregate_flocks(all_pairs(k, rng, 2.0), k);
  EXPECT_EQ(complete.flocks, (std::vector<std::vector<AgentId>>{{3, 4, 9, 11}}));
  EXPECT_THROW(aggregate_flocks(std::vector<PairPrediction>{{1, 77, 1, 1}}, members), InvalidInput);
}

TEST(Aggregate, MatchesClosureOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<AgentId> members;
    for (std::size_t i = 0; i < n; ++i) members.push_back(static_cast<AgentId>(rng.below(1000)) - 300);
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    const auto preds = all_pairs(members, rng, rng.uniform(0, 0.4));
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (const auto& p : preds)
      if (p.is_flock) edges.emplace_back(p.agent_a, p.agent_b);
    const auto fs = aggregate_flocks(preds, members);
    expect_partition(fs, members);
    EXPECT_EQ(fs.flocks, oracle::closure_components(members, edges));
  }
}

TEST(Aggregate, AddingAnEdgeNeverShrinksAFlock) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AgentId> members(10);
    std::iota(members.begin(), members.end(), 1);
    auto preds = all_pairs(members, rng, 0.15);
    auto size_of = [](const FlockSet& fs, AgentId id) -> std::size_t {
      for (const auto& f : fs.flocks)
        if (std::binary_search(f.begin(), f.end(), id)) return f.size();
      return 1;
    };
    const auto before = aggregate_flocks(preds, members);
    preds[rng.below(preds.size())].is_flock = 1;
    const auto after = aggregate_flocks(preds, members);
    for (AgentId id : members) EXPECT_GE(size_of(after, id), size_of(before, id));
  }
}

TEST(Histogram, CountsAndJsonShape) {
  FlockSet a{0, {{1, 2, 3}, {4, 5}}, {6}};
  FlockSet b{1, {{7, 8}}, {}};
  const std::vector<FlockSet> sets{a, b};
  const auto h = size_histogram(sets);
  EXPECT_EQ(h, (std::map<std::size_t, std::size_t>{{2, 2}, {3, 1}}));
  EXPECT_TRUE(size_histogram({}).empty());
  EXPECT_EQ(histogram_json(h), "{\"2\": 2, \"3\": 1}");
  EXPECT_EQ(histogram_json({}), "{}");
  EXPECT_EQ(histogram_json({{11, 1}, {2, 1528}, {3, 448}}), "{\"2\": 1528, \"3\": 448, \"11\": 1}");

  std::ostringstream out;
  write_flock_report(out, sets);
  EXPECT_EQ(out.str(),
            "{\"bin_index\": 0, \"flocks\": [{\"size\": 3, \"members\": [1, 2, 3]}, {\"size\": 2, \"members\": [4, "
            "5]}], \"singletons\": [6]}\n"
            "{\"bin_index\": 1, \"flocks\": [{\"size\": 2, \"members\": [7, 8]}], \"singletons\": []}\n"
            "{\"histogram\": {\"2\": 2, \"3\": 1}}\n");
}

TEST(Validation, Examples) {
  const std::vector<std::vector<AgentId>> truth{{1, 2, 3, 4}};
  const FlockSet exact{0, {{1, 2, 3, 4}}, {5}};
  const auto m = validate_against_annotations(exact, truth);
  EXPECT_EQ(m.exact_match_rate(), 1.0);
  EXPECT_EQ(m.f1(), 1.0);
  EXPECT_EQ(m.total_pairs, 10u);

  const FlockSet split{0, {{1, 2}, {3, 4}}, {5}};
  const auto s = validate_against_annotations(split, truth);
  EXPECT_EQ(s.exact_match_rate(), 0.0);
  EXPECT_DOUBLE_EQ(s.recall(), 2.0 / 6.0);
  EXPECT_EQ(s.precision(), 1.0);

  const FlockSet nothing{0, {}, {1, 2, 3, 4, 5}};
  const auto z = validate_against_annotations(nothing, truth);
  EXPECT_TRUE(z.no_predictions());
  EXPECT_EQ(z.precision(), 1.0);
  EXPECT_EQ(z.recall(), 0.0);

  const auto v = validate_against_annotations(exact, std::vector<std::vector<AgentId>>{});
  EXPECT_TRUE(v.vacuous_truth());
  EXPECT_EQ(v.exact_match_rate(), 1.0);

  // groups are restricted to scene members; a group reduced to one member is ignored
  const auto r = validate_against_annotations(exact, std::vector<std::vector<AgentId>>{{1, 2, 3, 4, 99}, {5, 98}});
  EXPECT_EQ(r.truth_groups, 1u);
  EXPECT_EQ(r.matched_groups, 1u);
}

TEST(PairEvaluation, CountsOrderingAndDeterminism) {
  Rng rng(5);
  const auto model = tiny_model(6);
  EXPECT_TRUE(evaluate_all_pairs(model, random_bin(rng, 1, 6), 0.5).empty());
  const auto bin = random_bin(rng, 4, 6);
  const auto preds = evaluate_all_pairs(model, bin, 0.5);
  ASSERT_EQ(preds.size(), 6u);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_LT(preds[i].agent_a, preds[i].agent_b);
    if (i) EXPECT_LT(std::pair(preds[i - 1].agent_a, preds[i - 1].agent_b), std::pair(preds[i].agent_a, preds[i].agent_b));
    EXPECT_EQ(preds[i].is_flock, preds[i].probability >= 0.5 ? 1 : 0);
    const auto pr = seqnet::predict_pair(model, bin.block_for(preds[i].agent_a)->points,
                                         bin.block_for(preds[i].agent_b)->points, 0.5);
    EXPECT_NEAR(pr.probability, preds[i].probability, 1e-12);
  }
  EXPECT_EQ(evaluate_all_pairs(model, bin, 0.5), preds);
  EXPECT_THROW(evaluate_all_pairs(tiny_model(5), bin, 0.5), ConfigMismatch);
  try {
    evaluate_all_pairs(tiny_model(5), bin, 0.5);
  } catch (const ConfigMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("6"), std::string::npos);
  }
  const auto high = rethreshold(preds, 1.01);
  for (const auto& p : high) EXPECT_EQ(p.is_flock, 0);
}

TEST(PairEvaluation, ThresholdMonotonicityAndConsistency) {
  Rng rng(6);
  const auto model = tiny_model(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto bin = random_bin(rng, 8, 5);
    const auto p = evaluate_all_pairs(model, bin, 0.0);
    double lo = rng.uniform(), hi = rng.uniform();
    if (lo > hi) std::swap(lo, hi);
    const auto a = rethreshold(p, lo), b = rethreshold(p, hi);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(b[i].is_flock, a[i].is_flock);

    const auto pre = evaluate_prefix_pairs(model, bin, 3, lo);
    const std::vector<std::vector<PairPrediction>> passes{a, pre};
    const auto both = consistent_edges(passes);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(both[i].is_flock, a[i].is_flock & pre[i].is_flock);
  }
  EXPECT_THROW(evaluate_prefix_pairs(model, random_bin(rng, 3, 5), 6, 0.5), InvalidInput);
}
