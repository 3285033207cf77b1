#include "infune/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "infune/error.hpp"
#include "infune/log.hpp"

namespace infune {

double hit_score(HitPosition hit, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (!hit || *hit < 1 || *hit > k) return 0.0;
  return static_cast<double>(k - (*hit - 1)) / static_cast<double>(k);
}

double hit_precision(std::span<const HitPosition> hits, std::size_t k) {
  if (hits.empty()) throw ConfigError("hit-precision over an empty test set");
  double s = 0.0;
  for (const auto& h : hits) s += hit_score(h, k);
  return s / static_cast<double>(hits.size());
}

// ------------------------------------------------------------------- scoring

std::vector<QueryScores> score_queries(std::span<const AnchorLink> queries, const RowScorer& node,
                                       const PairScorer* neighborhood, std::size_t limit) {
  std::vector<QueryScores> out;
  out.reserve(queries.size());
  std::vector<NodeId> order;
  for (const AnchorLink& q : queries) {
    QueryScores s{q.source, q.target, node(q.source), {}};
    if (neighborhood) {
      order.resize(static_cast<std::size_t>(s.r_node.size()));
      std::iota(order.begin(), order.end(), NodeId{0});
      const std::size_t keep = std::min(limit, order.size());
      const Vector& r = s.r_node;
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                        order.end(),
                        [&](NodeId a, NodeId b) { return r[a] != r[b] ? r[a] > r[b] : a < b; });
      for (std::size_t k = 0; k < keep; ++k)
        s.r_nei.emplace_back(order[k], (*neighborhood)(q.source, order[k]));
      std::sort(s.r_nei.begin(), s.r_nei.end());
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

double report_direction(const std::vector<QueryScores>& queries, double lambda, std::size_t k,
                        std::vector<UserResult>* users) {
  std::vector<HitPosition> hits;
  hits.reserve(queries.size());
  std::vector<double> total, nei;
  std::vector<NodeId> order;
  for (const QueryScores& q : queries) {
    const auto n = static_cast<std::size_t>(q.r_node.size());
    nei.assign(n, 0.0);
    for (auto [j, r] : q.r_nei) nei[j] = r;
    total.resize(n);
    for (std::size_t j = 0; j < n; ++j) total[j] = total_similarity(q.r_node[j], nei[j], lambda);

    const double truth = total[q.truth];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (total[j] > truth || (total[j] == truth && j < q.truth)) ++rank;
    hits.emplace_back(rank);

    if (users) {
      order.resize(n);
      std::iota(order.begin(), order.end(), NodeId{0});
      const std::size_t keep = std::min(k, n);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                        order.end(), [&](NodeId a, NodeId b) {
                          return total[a] != total[b] ? total[a] > total[b] : a < b;
                        });
      UserResult u{q.query, q.truth, rank, {}};
      for (std::size_t t = 0; t < keep; ++t)
        u.top.push_back({order[t], q.r_node[order[t]], nei[order[t]], total[order[t]]});
      users->push_back(std::move(u));
    }
  }
  return hit_precision(hits, k);
}

}  // namespace

ScoreReport report_from_cache(const ScoreCache& cache, double lambda, std::size_t k) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  ScoreReport report;
  report.k = k;
  report.lambda = lambda;
  report.hit_precision = report_direction(cache.forward, lambda, k, &report.users);
  if (!cache.reverse.empty())
    report.reverse_hit_precision = report_direction(cache.reverse, lambda, k, nullptr);
  return report;
}

ScoreCache score_test_anchors(std::span<const AnchorLink> test, const NodeScorer& node,
                              const NeighborhoodEncoder* encoder, const NeighborhoodContext* ctx,
                              std::size_t limit, bool bidirectional) {
  if ((encoder == nullptr) != (ctx == nullptr))
    throw ContractError("neighborhood scoring needs both the encoder and its context");
  ScoreCache cache;
  RowScorer forward_rows = [&](NodeId i) { return node.row(i); };
  PairScorer forward_nei = [&](NodeId i, NodeId j) {
    return neighborhood_similarity(*encoder, *ctx, i, j);
  };
  cache.forward = score_queries(test, forward_rows, encoder ? &forward_nei : nullptr, limit);

  if (bidirectional) {
    std::vector<AnchorLink> flipped;
    for (const auto& l : test) flipped.push_back({l.target, l.source, l.split});
    RowScorer reverse_rows = [&](NodeId j) {
      Vector col(static_cast<Eigen::Index>(node.source_users()));
      for (NodeId i = 0; i < node.source_users(); ++i) col[i] = node(i, j);
      return col;
    };
    PairScorer reverse_nei = [&](NodeId j, NodeId i) {
      return neighborhood_similarity(*encoder, *ctx, i, j);
    };
    cache.reverse = score_queries(flipped, reverse_rows, encoder ? &reverse_nei : nullptr, limit);
  }
  return cache;
}

ScoreReport rank_candidates(std::span<const AnchorLink> test, const RowScorer& node,
                            const PairScorer* neighborhood, double lambda, std::size_t k,
                            std::size_t limit) {
  ScoreCache cache;
  cache.forward = score_queries(test, node, neighborhood, limit);
  return report_from_cache(cache, lambda, k);
}

void write_run_detail(const std::filesystem::path& path, const ScoreReport& report,
                      const SocialNetwork& source, const SocialNetwork& target) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "source_id,hit_position,top1_target,top1_score\n" << std::setprecision(10);
  for (const auto& u : report.users) {
    out << source.user(u.source) << ',';
    if (u.rank <= report.k) out << u.rank; else out << "miss";
    out << ',';
    if (!u.top.empty()) out << target.user(u.top.front().target) << ',' << u.top.front().r_total;
    else out << ',';
    out << '\n';
  }
}

// ----------------------------------------------------------------- the grid

FeatureGrounds build_feature_grounds(const PairedData& data, double theta) {
  return {structure_ground(data.source, theta), structure_ground(data.target, theta),
          profile_ground(data.source, data.target, theta),
          content_ground(data.source, data.target, theta)};
}

void GridSpec::validate() const {
  if (variants.empty() || etas.empty() || lambdas.empty() || seeds.empty())
    throw ConfigError("experiment grid has an empty axis");
  for (double e : etas)
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("grid eta values must lie in (0, 1)");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw ConfigError("grid lambda values must be >= 0");
}

std::vector<ScoreReport> run_cell(const PairedData& data, const FeatureGrounds& grounds,
                                  const FeatureSet& variant, double eta,
                                  std::span<const double> lambdas, std::uint64_t seed,
                                  const ExperimentConfig& cfg) {
  const AnchorSet split = split_anchors(data.anchors, eta, sub_seed(seed, "split"));
  const SimilarityGround label =
      label_ground(split, data.source.size(), data.target.size(), cfg.train.theta);
  const std::vector<AnchorLink> test = split.with_split(Split::test);

  TrainConfig tc = cfg.train;
  tc.features = variant;
  tc.seed = seed;
  FusionGrounds fg{&grounds.structure_source, &grounds.structure_target, &grounds.profile,
                   &grounds.content, &label};
  const FusionResult fusion = train_fusion(fg, tc);

  const NodeScorer node(fusion.embeddings);
  const bool enhance = std::any_of(lambdas.begin(), lambdas.end(), [](double l) { return l > 0.0; });
  ScoreCache cache;
  if (enhance) {
    const Adjacency src_adj = build_adjacency(data.source);
    const Adjacency tgt_adj = build_adjacency(data.target);
    NeighborhoodConfig nc = cfg.neighborhood;
    nc.seed = seed;
    const NeighborhoodContext ctx(fusion.embeddings, src_adj, tgt_adj, nc.tau);
    std::vector<NodeId> train_sources;
    for (const auto& l : split.with_split(Split::train)) train_sources.push_back(l.source);
    const CandidateIndex cands = CandidateIndex::build(node, train_sources, nc.candidates);
    const NeighborhoodModel model = train_neighborhood(label, ctx, cands, nc);
    cache = score_test_anchors(test, node, &model.encoder, &ctx, nc.candidates, cfg.bidirectional);
  } else {
    cache = score_test_anchors(test, node, nullptr, nullptr, cfg.neighborhood.candidates,
                               cfg.bidirectional);
  }
  std::vector<ScoreReport> reports;
  for (double l : lambdas) reports.push_back(report_from_cache(cache, l, cfg.k));
  return reports;
}

std::vector<ResultRow> run_experiment_grid(const PairedData& data, const FeatureGrounds& grounds,
                                           const GridSpec& grid, const ExperimentConfig& cfg) {
  grid.validate();
  struct Cell {
    FeatureSet variant;
    double eta;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& v : grid.variants)
    for (double e : grid.etas)
      for (auto s : grid.seeds) cells.push_back({v, e, s});

  std::vector<std::vector<ScoreReport>> reports(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < cells.size();) {
      try {
        reports[c] = run_cell(data, grounds, cells[c].variant, cells[c].eta, grid.lambdas,
                              cells[c].seed, cfg);
        log::info("grid cell " + cells[c].variant.name() + " eta=" + std::to_string(cells[c].eta) +
                  " seed=" + std::to_string(cells[c].seed) + " done");
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(grid.threads, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t l = 0; l < grid.lambdas.size(); ++l)
      rows.push_back({cells[c].variant.name(), cells[c].eta, grid.lambdas[l], cells[c].seed,
                      reports[c][l].hit_precision, reports[c][l].users.size()});
  return rows;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "variant,eta,lambda,seed,hit_precision,n_test\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << std::setprecision(6) << r.eta << ',' << r.lambda << ',' << r.seed
        << ',' << std::setprecision(17) << r.hit_precision << ',' << r.n_test << '\n';
  }
  return out.str();
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << results_csv(rows);
}

}  // namespace infune
