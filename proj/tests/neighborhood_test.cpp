#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

#include "infune/error.hpp"
#include "infune/neighborhood.hpp"
#include "support.hpp"

using namespace infune;

namespace {

using check::SimMatrix;
using check::exhaustive_matching;
using check::planted_fixture;

NeighborPartition greedy(const SimMatrix& s, double tau) {
  std::vector<NodeId> a(s.size()), b(s.empty() ? 0 : s[0].size());
  for (NodeId k = 0; k < a.size(); ++k) a[k] = k;
  for (NodeId k = 0; k < b.size(); ++k) b[k] = k;
  return match_neighbors(std::span<const NodeId>(a), std::span<const NodeId>(b),
                         [&](NodeId x, NodeId y) { return s[x][y]; }, tau);
}

void expect_partition_invariants(const NeighborPartition& p, std::span<const NodeId> src,
                                 std::span<const NodeId> tgt) {
  ASSERT_EQ(p.matched_src.size(), p.matched_tgt.size());
  ASSERT_EQ(p.matched_src.size(), p.matching.size());
  std::multiset<NodeId> s(p.matched_src.begin(), p.matched_src.end());
  s.insert(p.unmatched_src.begin(), p.unmatched_src.end());
  EXPECT_EQ(s, std::multiset<NodeId>(src.begin(), src.end()));
  std::multiset<NodeId> t(p.matched_tgt.begin(), p.matched_tgt.end());
  t.insert(p.unmatched_tgt.begin(), p.unmatched_tgt.end());
  EXPECT_EQ(t, std::multiset<NodeId>(tgt.begin(), tgt.end()));
  EXPECT_EQ(std::set<NodeId>(p.matched_src.begin(), p.matched_src.end()).size(), p.matched_src.size());
  EXPECT_EQ(std::set<NodeId>(p.matched_tgt.begin(), p.matched_tgt.end()).size(), p.matched_tgt.size());
}

SocialNetwork random_network(std::size_t n, double p, Rng& rng) {
  SocialNetwork net;
  for (std::size_t u = 0; u < n; ++u) net.add_user("u" + std::to_string(u));
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = 0; b < n; ++b)
      if (a != b && uniform01(rng) < p) net.add_edge(a, b);
  return net;
}

}  // namespace

// ---------------------------------------------------------------- matching

TEST(MatchNeighbors, EmptyNeighborhoods) {
  const NeighborPartition p = greedy({}, 0.5);
  EXPECT_TRUE(p.matching.empty());
  EXPECT_TRUE(p.unmatched_src.empty());
  EXPECT_TRUE(p.unmatched_tgt.empty());
  const NeighborPartition q = greedy({{}, {}}, 0.5);
  EXPECT_EQ(q.unmatched_src, (std::vector<NodeId>{0, 1}));
}

TEST(MatchNeighbors, SingleAboveThreshold) {
  const NeighborPartition p = greedy({{0.9}}, 0.5);
  ASSERT_EQ(p.matching.size(), 1u);
  EXPECT_TRUE(p.unmatched_src.empty());
  EXPECT_TRUE(p.unmatched_tgt.empty());
  EXPECT_TRUE(greedy({{0.4}}, 0.5).matching.empty());
}

TEST(MatchNeighbors, TwoByTwoExample) {
  const NeighborPartition p = greedy({{0.9, 0.8}, {0.8, 0.1}}, 0.5);
  ASSERT_EQ(p.matching.size(), 1u);
  EXPECT_EQ(p.matching[0], (std::pair<NodeId, NodeId>{0, 0}));
  EXPECT_EQ(p.unmatched_src, (std::vector<NodeId>{1}));
  EXPECT_EQ(p.unmatched_tgt, (std::vector<NodeId>{1}));
  // Greedy keeps the single strongest pair; a cardinality-first matching would
  // take both 0.8 pairs instead.
  EXPECT_EQ(exhaustive_matching({{0.9, 0.8}, {0.8, 0.1}}, 0.5).size, 2u);
}

TEST(MatchNeighbors, TiesBreakByNeighborId) {
  std::vector<NodeId> a{7, 3}, b{9, 4};
  const auto p = match_neighbors(std::span<const NodeId>(a), std::span<const NodeId>(b),
                                 [](NodeId, NodeId) { return 0.7; }, 0.5);
  ASSERT_EQ(p.matching.size(), 2u);
  EXPECT_EQ(p.matching[0], (std::pair<NodeId, NodeId>{3, 4}));
  EXPECT_EQ(p.matching[1], (std::pair<NodeId, NodeId>{7, 9}));
}

TEST(MatchNeighbors, GreedyAgreesWithExhaustiveOnPlantedFixtures) {
  Rng rng(31);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 5), m = 1 + uniform_index(rng, 5);
    const SimMatrix s = planted_fixture(n, m, rng, 0.5);
    const NeighborPartition p = greedy(s, 0.5);
    const check::Best best = exhaustive_matching(s, 0.5);
    std::vector<std::pair<std::size_t, std::size_t>> got(p.matching.begin(), p.matching.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, best.pairs) << "trial " << trial;
  }
}

TEST(MatchNeighbors, InvariantsOnRandomGraphs) {
  Rng rng(5);
  const SocialNetwork src = random_network(30, 0.15, rng), tgt = random_network(30, 0.15, rng);
  const Adjacency as = build_adjacency(src), at = build_adjacency(tgt);
  NodeEmbeddings z{init_normal(30, 4, 1.0, rng), init_normal(30, 4, 1.0, rng)};
  const NeighborhoodContext ctx(z, as, at, 0.5);
  for (int trial = 0; trial < 300; ++trial) {
    const NodeId i = static_cast<NodeId>(uniform_index(rng, 30));
    const NodeId j = static_cast<NodeId>(uniform_index(rng, 30));
    const NeighborPartition p = ctx.partition(i, j);
    expect_partition_invariants(p, as.undirected[i], at.undirected[j]);
    for (const auto& [a, b] : p.matching) EXPECT_GE(ctx.scorer()(a, b), 0.5);
  }
}

// ------------------------------------------------------------- aggregation

TEST(Aggregate, MeansAndEmptySets) {
  NodeEmbeddings z;
  z.source = Matrix(3, 2);
  z.source << 1, 2, 3, 4, 5, 6;
  z.target = Matrix(2, 2);
  z.target << -1, 0, 2, 8;
  NeighborPartition p;
  p.matched_src = {0};
  p.unmatched_src = {1, 2};
  p.matched_tgt = {1};
  p.matching = {{0, 1}};
  const PairAggregates h = aggregate(p, z);
  EXPECT_EQ(h.src_matched, z.source.row(0).transpose());
  EXPECT_EQ(h.src_unmatched, (Vector(2) << 4, 5).finished());
  EXPECT_EQ(h.tgt_matched, z.target.row(1).transpose());
  EXPECT_EQ(h.tgt_unmatched, Vector::Zero(2));
}

// ----------------------------------------------------------------- encoder

TEST(NeighborhoodEncoderTest, ZeroWeightsOutputBias) {
  NeighborhoodEncoder enc = NeighborhoodEncoder::create(3, 5, 1);
  auto& p = enc.params();
  p.value(enc.mlp().w1()).setZero();
  p.value(enc.mlp().w2()).setZero();
  p.value(enc.mlp().b2()) = (Vector(3) << 0.5, -1, 2).finished();
  Rng rng(2);
  for (int t = 0; t < 3; ++t) {
    const Matrix in = init_normal(3, 3, 1.0, rng);
    EXPECT_EQ(enc.embed(in.col(0), in.col(1), in.col(2)), p.value(enc.mlp().b2()));
  }
}

TEST(NeighborhoodEncoderTest, InputIsThreeNodeDims) {
  const NeighborhoodEncoder enc = NeighborhoodEncoder::create(4, 6, 1);
  EXPECT_EQ(enc.mlp().in_dim(enc.params()), 12);
  EXPECT_EQ(enc.node_dim(), 4);
  EXPECT_THROW(enc.embed(Vector::Zero(4), Vector::Zero(3), Vector::Zero(4)), ContractError);
  ParamStore bad;
  Rng rng(1);
  Mlp2::create(bad, "enc.nei", 10, 6, 4, rng);
  EXPECT_THROW(NeighborhoodEncoder::from_params(bad), DataError);
}

namespace {

// Source user 0 follows 1 and 2; target user 0 follows 1 and 2, target user 3 follows 4.
struct Fixture {
  SocialNetwork src, tgt;
  Adjacency as, at;
  NodeEmbeddings z;
  Fixture() {
    for (int u = 0; u < 3; ++u) src.add_user("s" + std::to_string(u));
    for (int u = 0; u < 5; ++u) tgt.add_user("t" + std::to_string(u));
    src.add_edge(0, 1);
    src.add_edge(2, 0);
    tgt.add_edge(0, 1);
    tgt.add_edge(0, 2);
    tgt.add_edge(3, 4);
    as = build_adjacency(src);
    at = build_adjacency(tgt);
    z.source = Matrix(3, 3);
    z.source << 1, 0, 0, 0, 1, 0, 0, 0.2, 1;
    z.target = Matrix(5, 3);
    z.target << 1, 0.1, 0, 0, 1, 0.1, 0.1, 0, 1, 0.9, 0.2, 0.1, -1, 0.3, 0.2;
  }
};

}  // namespace

TEST(NeighborhoodSimilarity, DependsOnCandidate) {
  Fixture f;
  const NeighborhoodContext ctx(f.z, f.as, f.at, 0.5);
  const PairAggregates a = ctx.aggregates(0, 0), b = ctx.aggregates(0, 3);
  EXPECT_EQ(ctx.partition(0, 0).matching.size(), 2u);
  EXPECT_TRUE(ctx.partition(0, 3).matching.empty());
  EXPECT_NE(a.src_matched, b.src_matched);
  const NeighborhoodEncoder enc = NeighborhoodEncoder::create(3, 8, 4);
  const Vector za = f.z.source.row(0).transpose();
  EXPECT_NE(enc.embed(za, a.src_matched, a.src_unmatched), enc.embed(za, b.src_matched, b.src_unmatched));
}

TEST(NeighborhoodSimilarity, IdenticalSidesGiveOne) {
  NodeEmbeddings z;
  z.source = (Matrix(2, 2) << 1, 0.5, 0.3, 1).finished();
  z.target = z.source;
  SocialNetwork net;
  net.add_user("a");
  net.add_user("b");
  net.add_edge(0, 1);
  const Adjacency adj = build_adjacency(net);
  const NeighborhoodContext ctx(z, adj, adj, 0.5);
  const NeighborhoodEncoder enc = NeighborhoodEncoder::create(2, 6, 3);
  for (NodeId u = 0; u < 2; ++u) EXPECT_NEAR(neighborhood_similarity(enc, ctx, u, u), 1.0, 1e-12);
}

TEST(NeighborhoodSimilarity, RangeAndSensitivityToUnmatchedNeighbor) {
  Fixture f;
  const NeighborhoodEncoder enc = NeighborhoodEncoder::create(3, 8, 6);
  const NeighborhoodContext ctx(f.z, f.as, f.at, 0.5);
  for (NodeId i = 0; i < 3; ++i)
    for (NodeId j = 0; j < 5; ++j) {
      const double r = neighborhood_similarity(enc, ctx, i, j);
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
  // Target 4 is the unmatched neighbor of candidate 3.
  const double before = neighborhood_similarity(enc, ctx, 0, 3);
  NodeEmbeddings moved = f.z;
  moved.target.row(4) << 0.3, -2, 0.7;
  const NeighborhoodContext ctx2(moved, f.as, f.at, 0.5);
  ASSERT_EQ(ctx2.partition(0, 3).unmatched_tgt, (std::vector<NodeId>{4}));
  EXPECT_NE(neighborhood_similarity(enc, ctx2, 0, 3), before);
}

TEST(NeighborhoodSimilarity, GradientMatchesFiniteDifferences) {
  Fixture f;
  NeighborhoodEncoder enc = NeighborhoodEncoder::create(3, 5, 8);
  const NeighborhoodContext ctx(f.z, f.as, f.at, 0.5);
  auto loss = [&](bool backward) {
    Tape tape(enc.params());
    std::vector<Var> terms;
    for (NodeId j : {0u, 1u, 3u})
      terms.push_back(tape.squared_error(neighborhood_similarity(tape, enc, ctx, 0, j), j == 0 ? 1.0 : 0.0));
    Var l = tape.sum(terms);
    if (backward) tape.backward(l);
    return tape.scalar(l);
  };
  const auto res = check::check_gradients(enc.params(), loss);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

// ---------------------------------------------------------------- training

TEST(TrainNeighborhood, LossDecreasesAndNodeEmbeddingsStayFrozen) {
  SynthConfig sc;
  sc.n_users = 60;
  sc.edge_keep_prob = 1.0;
  sc.name_noise = 0.0;
  sc.content_drift = 0.0;
  sc.seed = 4;
  const SyntheticPair pair = generate_pair(sc);
  const AnchorSet split = split_anchors(pair.anchors, 0.5, 1);
  const SimilarityGround label = label_ground(split, 60, 60, 0.99);

  // Noisy copies of one embedding stand in for trained node embeddings.
  Rng rng(9);
  NodeEmbeddings z;
  z.source = init_normal(60, 6, 1.0, rng);
  z.target = z.source + init_normal(60, 6, 0.3, rng);
  const NodeEmbeddings before = z;
  const Adjacency as = build_adjacency(pair.source), at = build_adjacency(pair.target);
  const NeighborhoodContext ctx(z, as, at, 0.5);
  std::vector<NodeId> sources;
  for (const auto& l : split.with_split(Split::train)) sources.push_back(l.source);
  const CandidateIndex cand = CandidateIndex::build(ctx.scorer(), sources, 10);

  NeighborhoodConfig cfg;
  cfg.hidden = 16;
  cfg.epochs = 30;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  const NeighborhoodModel model = train_neighborhood(label, ctx, cand, cfg);
  ASSERT_EQ(model.log.size(), 30u);
  const auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t e = from; e < from + 5; ++e) s += model.log[e].loss;
    return s;
  };
  EXPECT_LT(window(25), window(0));
  EXPECT_EQ(z.source, before.source);
  EXPECT_EQ(z.target, before.target);

  const SimilarityGround empty = label_ground(AnchorSet{}, 60, 60, 0.99);
  EXPECT_THROW(train_neighborhood(empty, ctx, cand, cfg), ConfigError);
}

// --------------------------------------------------------------- candidates

TEST(CandidateIndexTest, TopCSortedAndRoundTrip) {
  Rng rng(12);
  NodeEmbeddings z{init_normal(6, 3, 1.0, rng), init_normal(9, 3, 1.0, rng)};
  const NodeScorer scorer(z);
  const std::vector<NodeId> sources{0, 2, 5};
  const CandidateIndex idx = CandidateIndex::build(scorer, sources, 4);
  for (NodeId i : sources) {
    const auto& list = idx.candidates(i);
    ASSERT_EQ(list.size(), 4u);
    for (std::size_t k = 1; k < list.size(); ++k) EXPECT_GE(list[k - 1].r_node, list[k].r_node);
    const Vector row = scorer.row(i);
    std::vector<double> all(row.data(), row.data() + row.size());
    std::sort(all.rbegin(), all.rend());
    EXPECT_DOUBLE_EQ(list.front().r_node, all.front());
    EXPECT_DOUBLE_EQ(list.back().r_node, all[3]);
  }
  EXPECT_FALSE(idx.contains(1));
  EXPECT_THROW(idx.candidates(1), ContractError);
  EXPECT_THROW(CandidateIndex::build(scorer, sources, 0), ConfigError);

  SocialNetwork src, tgt;
  for (int u = 0; u < 6; ++u) src.add_user("s" + std::to_string(u));
  for (int u = 0; u < 9; ++u) tgt.add_user("t" + std::to_string(u));
  const auto path = std::filesystem::temp_directory_path() / "infune_candidates.tsv";
  idx.save(path, src, tgt);
  EXPECT_EQ(CandidateIndex::load(path, src, tgt, 4), idx);
  std::filesystem::remove(path);
}

// ------------------------------------------------------------ total score

TEST(TotalSimilarity, Examples) {
  EXPECT_DOUBLE_EQ(total_similarity(0.8, 0.5, 0.2), 0.75);
  EXPECT_EQ(total_similarity(0.37, 0.9, 0.0), 0.37);
  for (double lambda : {0.0, 0.2, 0.8, 5.0}) EXPECT_NEAR(total_similarity(0.6, 0.6, lambda), 0.6, 1e-15);
  EXPECT_THROW(total_similarity(0.5, 0.5, -0.1), ConfigError);
  EXPECT_LT(total_similarity(0.5, 0.3, 0.2), total_similarity(0.6, 0.3, 0.2));
  EXPECT_LT(total_similarity(0.5, 0.3, 0.2), total_similarity(0.5, 0.4, 0.2));
}
