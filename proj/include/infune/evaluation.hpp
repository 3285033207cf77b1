#pragma once

// Hit-precision@k ranking evaluation and the experiment grid over variants,
// training ratios, neighborhood weights and seeds.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "infune/dataset.hpp"
#include "infune/fusion.hpp"
#include "infune/ground_truth.hpp"
#include "infune/neighborhood.hpp"

namespace infune {

/// 1-based rank of the true match; nullopt means it was not retrieved.
using HitPosition = std::optional<std::size_t>;

/// (k - (hit - 1)) / k for 1 <= hit <= k, else 0.
double hit_score(HitPosition hit, std::size_t k);

/// Mean hit_score over test users. Throws ConfigError on an empty set or k == 0.
double hit_precision(std::span<const HitPosition> hits, std::size_t k);

struct RankedCandidate {
  NodeId target = 0;
  double r_node = 0.0;
  double r_nei = 0.0;
  double r_total = 0.0;
};

struct UserResult {
  NodeId source = 0;
  NodeId truth = 0;
  std::size_t rank = 0;  // rank of the truth among all targets
  std::vector<RankedCandidate> top;
};

struct ScoreReport {
  std::vector<UserResult> users;
  std::size_t k = 30;
  double lambda = 0.0;
  double hit_precision = 0.0;
  /// Reverse-direction (target -> source) hit-precision when computed.
  std::optional<double> reverse_hit_precision;
};

/// Raw scores of one query user: node similarity against every candidate
/// and neighborhood similarity on its top-C list (empty when not enhanced).
struct QueryScores {
  NodeId query = 0;
  NodeId truth = 0;
  Vector r_node;
  std::vector<std::pair<NodeId, double>> r_nei;
};

struct ScoreCache {
  std::vector<QueryScores> forward;
  std::vector<QueryScores> reverse;  // filled only for bidirectional evaluation
};

using RowScorer = std::function<Vector(NodeId)>;
using PairScorer = std::function<double(NodeId, NodeId)>;

/// Scores every query against all candidates with `node`; when `neighborhood`
/// is set, also scores the top-`limit` candidates by node similarity with it.
std::vector<QueryScores> score_queries(std::span<const AnchorLink> queries, const RowScorer& node,
                                       const PairScorer* neighborhood, std::size_t limit);

/// Ranks every candidate by r_total (candidates outside the top-C list get
/// r_nei = 0) with ties broken by the lower candidate id.
ScoreReport report_from_cache(const ScoreCache& cache, double lambda, std::size_t k);

/// Forward (and optionally reverse) scoring with trained components.
ScoreCache score_test_anchors(std::span<const AnchorLink> test, const NodeScorer& node,
                              const NeighborhoodEncoder* encoder, const NeighborhoodContext* ctx,
                              std::size_t limit, bool bidirectional = false);

/// score_queries + report_from_cache for a single lambda.
ScoreReport rank_candidates(std::span<const AnchorLink> test, const RowScorer& node,
                            const PairScorer* neighborhood, double lambda, std::size_t k,
                            std::size_t limit);

/// "source_id,hit_position,top1_target,top1_score" (hit_position is "miss" beyond k).
void write_run_detail(const std::filesystem::path& path, const ScoreReport& report,
                      const SocialNetwork& source, const SocialNetwork& target);

struct PairedData {
  SocialNetwork source;
  SocialNetwork target;
  AnchorSet anchors;
};

/// Split-independent grounds (label grounds are built per split).
struct FeatureGrounds {
  SimilarityGround structure_source;
  SimilarityGround structure_target;
  SimilarityGround profile;
  SimilarityGround content;
};

FeatureGrounds build_feature_grounds(const PairedData& data, double theta);

struct ExperimentConfig {
  TrainConfig train;
  NeighborhoodConfig neighborhood;
  std::size_t k = 30;
  bool bidirectional = false;
};

struct GridSpec {
  std::vector<FeatureSet> variants;
  std::vector<double> etas;
  std::vector<double> lambdas;
  std::vector<std::uint64_t> seeds;
  std::size_t threads = 1;

  void validate() const;
};

struct ResultRow {
  std::string variant;
  double eta = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double hit_precision = 0.0;
  std::size_t n_test = 0;
};

/// One train + enhance + evaluate run; returns one report per lambda.
std::vector<ScoreReport> run_cell(const PairedData& data, const FeatureGrounds& grounds,
                                  const FeatureSet& variant, double eta,
                                  std::span<const double> lambdas, std::uint64_t seed,
                                  const ExperimentConfig& cfg);

/// Full factorial over variants x etas x seeds x lambdas, rows in that order.
std::vector<ResultRow> run_experiment_grid(const PairedData& data, const FeatureGrounds& grounds,
                                           const GridSpec& grid, const ExperimentConfig& cfg);

/// "variant,eta,lambda,seed,hit_precision,n_test"
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::string results_csv(const std::vector<ResultRow>& rows);

}  // namespace infune
