#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "infune/error.hpp"
#include "infune/evaluation.hpp"
#include "support.hpp"

using namespace infune;

namespace {

std::vector<AnchorLink> identity_queries(std::size_t n) {
  std::vector<AnchorLink> q;
  for (NodeId u = 0; u < n; ++u) q.push_back({u, u, Split::test});
  return q;
}

// Scores in which the truth of every query lands at a chosen position.
Vector placed_row(std::size_t n, NodeId truth, std::size_t position) {
  Vector r(static_cast<Eigen::Index>(n));
  std::size_t slot = 1;
  for (NodeId j = 0; j < n; ++j) {
    if (j == truth) continue;
    if (slot == position) ++slot;
    r[j] = 1.0 - static_cast<double>(slot) / (n + 1.0);
    ++slot;
  }
  r[truth] = 1.0 - static_cast<double>(position) / (n + 1.0);
  return r;
}

PairedData tiny_data(std::uint64_t seed) {
  SynthConfig sc;
  sc.n_users = 40;
  sc.attach_edges = 3;
  sc.name_stems = 20;
  sc.vocab_size = 200;
  sc.topics = 5;
  sc.doc_length = 15;
  sc.seed = seed;
  SyntheticPair p = generate_pair(sc);
  return {std::move(p.source), std::move(p.target), std::move(p.anchors)};
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.train.dim = 6;
  cfg.train.hidden = 12;
  cfg.train.epochs = 3;
  cfg.train.lr = 1e-2;
  cfg.train.theta = 0.9;
  cfg.neighborhood.hidden = 12;
  cfg.neighborhood.epochs = 2;
  cfg.neighborhood.candidates = 10;
  return cfg;
}

}  // namespace

// ------------------------------------------------------------ hit precision

TEST(HitPrecision, PositionExamples) {
  EXPECT_EQ(hit_score(1, 30), 1.0);
  EXPECT_DOUBLE_EQ(hit_score(30, 30), 1.0 / 30.0);
  EXPECT_EQ(hit_score(31, 30), 0.0);
  EXPECT_EQ(hit_score(std::nullopt, 30), 0.0);
  EXPECT_THROW(hit_score(1, 0), ConfigError);
  EXPECT_THROW(hit_precision(std::span<const HitPosition>{}, 30), ConfigError);
}

TEST(HitPrecision, HundredPlacedHitsThroughRanking) {
  const std::size_t n = 120;
  const auto queries = identity_queries(100);
  std::vector<std::size_t> position(100);
  double expected = 0.0;
  for (std::size_t u = 0; u < 100; ++u) {
    position[u] = u % 3 == 0 ? 1 : u % 3 == 1 ? 30 : 31 + u % 50;
    expected += position[u] <= 30 ? (30.0 - (position[u] - 1.0)) / 30.0 : 0.0;
  }
  expected /= 100.0;
  const RowScorer scorer = [&](NodeId i) { return placed_row(n, i, position[i]); };
  const ScoreReport r = rank_candidates(queries, scorer, nullptr, 0.0, 30, 250);
  for (std::size_t u = 0; u < 100; ++u) EXPECT_EQ(r.users[u].rank, position[u]);
  EXPECT_DOUBLE_EQ(r.hit_precision, expected);
}

TEST(HitPrecision, OracleScorerIsPerfect) {
  const auto queries = identity_queries(50);
  const RowScorer oracle = [](NodeId i) {
    Vector r = Vector::Zero(80);
    r[i] = 1.0;
    return r;
  };
  EXPECT_EQ(rank_candidates(queries, oracle, nullptr, 0.0, 30, 250).hit_precision, 1.0);
}

TEST(HitPrecision, RandomScorerMatchesClosedForm) {
  EXPECT_NEAR(check::random_hit_precision(100, 30), 0.155, 1e-12);
  Rng rng(17);
  std::vector<AnchorLink> queries;
  for (std::size_t t = 0; t < 10000; ++t) queries.push_back({0, static_cast<NodeId>(t % 100), Split::test});
  const RowScorer random = [&](NodeId) {
    Vector r(100);
    for (Eigen::Index j = 0; j < 100; ++j) r[j] = uniform01(rng);
    return r;
  };
  EXPECT_NEAR(rank_candidates(queries, random, nullptr, 0.0, 30, 250).hit_precision, 0.155, 0.01);
}

// ----------------------------------------------------------------- ranking

TEST(Ranking, LambdaZeroEqualsNodeOnly) {
  Rng rng(3);
  const Matrix node = init_normal(20, 25, 1.0, rng);
  const auto queries = identity_queries(20);
  const RowScorer rows = [&](NodeId i) { return Vector(node.row(i).transpose()); };
  const PairScorer nei = [](NodeId i, NodeId j) { return std::fmod(0.37 * (i + 3 * j), 1.0); };
  const ScoreReport plain = rank_candidates(queries, rows, nullptr, 0.0, 30, 10);
  const ScoreReport enhanced = rank_candidates(queries, rows, &nei, 0.0, 30, 10);
  EXPECT_EQ(plain.hit_precision, enhanced.hit_precision);
  for (std::size_t u = 0; u < 20; ++u) {
    EXPECT_EQ(plain.users[u].rank, enhanced.users[u].rank);
    for (std::size_t t = 0; t < plain.users[u].top.size(); ++t)
      EXPECT_EQ(plain.users[u].top[t].target, enhanced.users[u].top[t].target);
  }
}

TEST(Ranking, NeighborhoodOnlyRescoresTopCandidates) {
  const std::vector<AnchorLink> q{{0, 4, Split::test}};
  const RowScorer rows = [](NodeId) { return (Vector(5) << 0.9, 0.8, 0.7, 0.6, 0.5).finished(); };
  const PairScorer nei = [](NodeId, NodeId j) { return j == 4 ? 1.0 : 0.0; };
  // Truth outside the top-2 list keeps r_nei = 0.
  EXPECT_EQ(rank_candidates(q, rows, &nei, 0.2, 30, 2).users[0].rank, 5u);
  const ScoreReport r = rank_candidates(q, rows, &nei, 10.0, 30, 5);
  EXPECT_EQ(r.users[0].rank, 1u);
  EXPECT_DOUBLE_EQ(r.users[0].top[0].r_total, (0.5 + 10.0) / 11.0);
  EXPECT_DOUBLE_EQ(r.users[0].top[1].r_total, 0.9 / 11.0);
}

TEST(Ranking, InvariantUnderIncreasingTransform) {
  Rng rng(8);
  const Matrix node = init_normal(30, 40, 1.0, rng);
  const auto queries = identity_queries(30);
  const RowScorer a = [&](NodeId i) { return Vector(node.row(i).transpose()); };
  const RowScorer b = [&](NodeId i) { return Vector((3.0 * node.row(i).array()).exp().transpose() + 2.0); };
  const ScoreReport ra = rank_candidates(queries, a, nullptr, 0.0, 30, 250);
  const ScoreReport rb = rank_candidates(queries, b, nullptr, 0.0, 30, 250);
  EXPECT_EQ(ra.hit_precision, rb.hit_precision);
  for (std::size_t u = 0; u < 30; ++u) EXPECT_EQ(ra.users[u].rank, rb.users[u].rank);
}

TEST(Ranking, RaisingTheTruthNeverHurts) {
  Rng rng(9);
  Matrix node = init_normal(25, 60, 1.0, rng);
  const auto queries = identity_queries(25);
  const RowScorer rows = [&](NodeId i) { return Vector(node.row(i).transpose()); };
  const ScoreReport before = rank_candidates(queries, rows, nullptr, 0.0, 30, 250);
  for (Eigen::Index i = 0; i < 25; ++i) node(i, i) += 0.3;
  const ScoreReport after = rank_candidates(queries, rows, nullptr, 0.0, 30, 250);
  for (std::size_t u = 0; u < 25; ++u) EXPECT_LE(after.users[u].rank, before.users[u].rank);
  EXPECT_GE(after.hit_precision, before.hit_precision);
}

TEST(Ranking, TopListSortedWithIdTieBreak) {
  const std::vector<AnchorLink> q{{0, 3, Split::test}};
  const RowScorer rows = [](NodeId) { return (Vector(5) << 0.2, 0.7, 0.7, 0.7, 0.1).finished(); };
  const ScoreReport r = rank_candidates(q, rows, nullptr, 0.0, 30, 250);
  std::vector<NodeId> order;
  for (const auto& c : r.users[0].top) order.push_back(c.target);
  EXPECT_EQ(order, (std::vector<NodeId>{1, 2, 3, 0, 4}));
  EXPECT_EQ(r.users[0].rank, 3u);
}

TEST(Ranking, ReportFromCacheIsReproducible) {
  Rng rng(4);
  const Matrix node = init_normal(15, 20, 1.0, rng);
  const auto queries = identity_queries(15);
  const RowScorer rows = [&](NodeId i) { return Vector(node.row(i).transpose()); };
  const PairScorer nei = [](NodeId i, NodeId j) { return 1.0 / (1.0 + i + j); };
  ScoreCache cache;
  cache.forward = score_queries(queries, rows, &nei, 8);
  const ScoreReport a = report_from_cache(cache, 0.2, 30), b = report_from_cache(cache, 0.2, 30);
  EXPECT_EQ(a.hit_precision, b.hit_precision);
  for (std::size_t u = 0; u < 15; ++u)
    for (std::size_t t = 0; t < a.users[u].top.size(); ++t)
      EXPECT_EQ(a.users[u].top[t].r_total, b.users[u].top[t].r_total);
  EXPECT_THROW(report_from_cache(cache, -1.0, 30), ConfigError);
}

// ----------------------------------------------------------------- outputs

TEST(Outputs, ResultsCsvAndRunDetail) {
  const std::vector<ResultRow> rows{{"spc", 0.5, 0.2, 1, 0.75, 250}, {"s", 0.1, 0.0, 3, 0.0, 450}};
  EXPECT_EQ(results_csv(rows),
            "variant,eta,lambda,seed,hit_precision,n_test\n"
            "spc,0.5,0.2,1,0.75,250\n"
            "s,0.1,0,3,0,450\n");

  SocialNetwork src, tgt;
  src.add_user("alice");
  src.add_user("bob");
  for (auto u : {"x", "y", "z"}) tgt.add_user(u);
  const std::vector<AnchorLink> q{{0, 1, Split::test}, {1, 2, Split::test}};
  const RowScorer s = [](NodeId i) {
    return i == 0 ? (Vector(3) << 0.1, 0.9, 0.5).finished() : (Vector(3) << 0.5, 0.4, 0.3).finished();
  };
  const ScoreReport r = rank_candidates(q, s, nullptr, 0.0, 2, 250);
  const auto path = std::filesystem::temp_directory_path() / "infune_detail.csv";
  write_run_detail(path, r, src, tgt);
  std::ifstream in(path);
  const std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "source_id,hit_position,top1_target,top1_score\nalice,1,y,0.9\nbob,miss,x,0.5\n");
  std::filesystem::remove(path);
}

// -------------------------------------------------------------------- grid

TEST(Grid, OneCellReproducesRunCell) {
  const PairedData data = tiny_data(2);
  const ExperimentConfig cfg = tiny_config();
  const FeatureGrounds g = build_feature_grounds(data, cfg.train.theta);
  const std::vector<double> lambdas{0.0, 0.2};
  const auto reports = run_cell(data, g, FeatureSet::parse("pc"), 0.5, lambdas, 7, cfg);
  GridSpec grid{{FeatureSet::parse("pc")}, {0.5}, lambdas, {7}};
  const auto rows = run_experiment_grid(data, g, grid, cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(rows[l].hit_precision, reports[l].hit_precision);
    EXPECT_EQ(rows[l].n_test, 20u);
    EXPECT_EQ(rows[l].variant, "pc");
  }
}

TEST(Grid, FactorialRowOrder) {
  const PairedData data = tiny_data(3);
  ExperimentConfig cfg = tiny_config();
  cfg.train.epochs = 1;
  const FeatureGrounds g = build_feature_grounds(data, cfg.train.theta);
  GridSpec grid{{FeatureSet::parse("s"), FeatureSet::parse("c")}, {0.3, 0.6}, {0.0}, {1, 2}};
  const auto rows = run_experiment_grid(data, g, grid, cfg);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].variant, "s");
  EXPECT_EQ(rows[0].eta, 0.3);
  EXPECT_EQ(rows[1].seed, 2u);
  EXPECT_EQ(rows[2].eta, 0.6);
  EXPECT_EQ(rows[4].variant, "c");
  for (const auto& r : rows) EXPECT_GE(r.hit_precision, 0.0);
}

TEST(Grid, Validation) {
  GridSpec grid{{FeatureSet{}}, {0.5}, {0.2}, {1}};
  EXPECT_NO_THROW(grid.validate());
  grid.etas = {1.0};
  EXPECT_THROW(grid.validate(), ConfigError);
  grid.etas = {0.5};
  grid.lambdas = {-0.5};
  EXPECT_THROW(grid.validate(), ConfigError);
  grid.lambdas = {};
  EXPECT_THROW(grid.validate(), ConfigError);
  EXPECT_THROW(FeatureSet::parse("spq"), ConfigError);
}

TEST(Grid, BidirectionalAddsReverseScore) {
  const PairedData data = tiny_data(5);
  ExperimentConfig cfg = tiny_config();
  cfg.bidirectional = true;
  const FeatureGrounds g = build_feature_grounds(data, cfg.train.theta);
  const std::vector<double> lambdas{0.0};
  const auto reports = run_cell(data, g, FeatureSet::parse("p"), 0.5, lambdas, 1, cfg);
  ASSERT_TRUE(reports[0].reverse_hit_precision.has_value());
  EXPECT_GE(*reports[0].reverse_hit_precision, 0.0);
  EXPECT_LE(*reports[0].reverse_hit_precision, 1.0);
}
