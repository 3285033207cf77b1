#pragma once

// Neighborhood enhancement: pair-adaptive neighborhood embeddings built from
// the potential matched / unmatched neighbors of a candidate pair.

#include <algorithm>
#include <filesystem>
#include <span>
#include <tuple>
#include <vector>

#include "infune/dataset.hpp"
#include "infune/fusion.hpp"
#include "infune/tensor.hpp"

namespace infune {

struct NeighborPartition {
  std::vector<NodeId> matched_src, unmatched_src;
  std::vector<NodeId> matched_tgt, unmatched_tgt;
  /// matching[k] = (matched_src[k], matched_tgt[k])
  std::vector<std::pair<NodeId, NodeId>> matching;
};

/// Greedy one-to-one matching between two neighbor lists: candidate pairs are
/// taken in descending similarity (ties: smaller source, then smaller target
/// neighbor first) and accepted when both ends are free and sim >= tau.
template <typename Similarity>
NeighborPartition match_neighbors(std::span<const NodeId> src_neighbors,
                                  std::span<const NodeId> tgt_neighbors, Similarity&& sim,
                                  double tau) {
  struct Cand {
    double s;
    std::size_t a, b;
  };
  std::vector<Cand> cands;
  cands.reserve(src_neighbors.size() * tgt_neighbors.size());
  for (std::size_t a = 0; a < src_neighbors.size(); ++a)
    for (std::size_t b = 0; b < tgt_neighbors.size(); ++b) {
      const double s = sim(src_neighbors[a], tgt_neighbors[b]);
      if (s >= tau) cands.push_back({s, a, b});
    }
  std::sort(cands.begin(), cands.end(), [&](const Cand& x, const Cand& y) {
    if (x.s != y.s) return x.s > y.s;
    return std::tie(src_neighbors[x.a], tgt_neighbors[x.b]) <
           std::tie(src_neighbors[y.a], tgt_neighbors[y.b]);
  });

  std::vector<char> used_a(src_neighbors.size(), 0), used_b(tgt_neighbors.size(), 0);
  NeighborPartition part;
  for (const Cand& c : cands) {
    if (used_a[c.a] || used_b[c.b]) continue;
    used_a[c.a] = used_b[c.b] = 1;
    part.matched_src.push_back(src_neighbors[c.a]);
    part.matched_tgt.push_back(tgt_neighbors[c.b]);
    part.matching.emplace_back(src_neighbors[c.a], tgt_neighbors[c.b]);
  }
  for (std::size_t a = 0; a < src_neighbors.size(); ++a)
    if (!used_a[a]) part.unmatched_src.push_back(src_neighbors[a]);
  for (std::size_t b = 0; b < tgt_neighbors.size(); ++b)
    if (!used_b[b]) part.unmatched_tgt.push_back(tgt_neighbors[b]);
  return part;
}

/// Mean of the given rows of z; the zero vector for an empty set.
Vector mean_rows(const Matrix& z, std::span<const NodeId> rows);

struct PairAggregates {
  Vector src_matched, src_unmatched;  // h+_{i|j}, h-_{i|j}
  Vector tgt_matched, tgt_unmatched;  // h+_{j|i}, h-_{j|i}
};
PairAggregates aggregate(const NeighborPartition& part, const NodeEmbeddings& z);

/// Row-normalized node embeddings for bulk r_node = max(0, <z_i, z_j>/(|z_i||z_j|)).
class NodeScorer {
 public:
  explicit NodeScorer(const NodeEmbeddings& z);
  double operator()(NodeId i, NodeId j) const;
  /// r_node of source user i against every target user.
  Vector row(NodeId i) const;
  std::size_t source_users() const { return static_cast<std::size_t>(src_.rows()); }
  std::size_t target_users() const { return static_cast<std::size_t>(tgt_.rows()); }

 private:
  Matrix src_, tgt_;
};

struct Candidate {
  NodeId target = 0;
  double r_node = 0.0;
};

/// Top-C targets by node similarity per source user, descending (ties: lower target id).
class CandidateIndex {
 public:
  CandidateIndex() = default;
  static CandidateIndex build(const NodeScorer& scorer, std::span<const NodeId> sources,
                              std::size_t limit);

  const std::vector<Candidate>& candidates(NodeId source) const;
  bool contains(NodeId source) const;
  std::size_t limit() const { return limit_; }

  /// Lines "source_id<TAB>rank<TAB>target_id<TAB>r_node" (rank is 1-based).
  void save(const std::filesystem::path& path, const SocialNetwork& source,
            const SocialNetwork& target) const;
  static CandidateIndex load(const std::filesystem::path& path, const SocialNetwork& source,
                             const SocialNetwork& target, std::size_t limit);

  bool operator==(const CandidateIndex& o) const;

 private:
  std::size_t limit_ = 0;
  std::vector<std::vector<Candidate>> lists_;
  std::vector<char> present_;
};

/// ENC^nei: two-layer perceptron from (z ⊕ h+ ⊕ h-) to a neighborhood
/// embedding; one instance serves both the source and the target side.
class NeighborhoodEncoder {
 public:
  static NeighborhoodEncoder create(Eigen::Index node_dim, Eigen::Index hidden, std::uint64_t seed);
  static NeighborhoodEncoder from_params(ParamStore params);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Mlp2& mlp() const { return mlp_; }
  Eigen::Index node_dim() const { return mlp_.out_dim(params_); }

  Vector embed(const Vector& z, const Vector& matched, const Vector& unmatched) const;
  Var embed(Tape& tape, const Vector& z, const Vector& matched, const Vector& unmatched) const;

 private:
  ParamStore params_;
  Mlp2 mlp_;
};

/// Frozen node embeddings plus both adjacency structures; yields the
/// partition and encoder inputs of any candidate pair.
class NeighborhoodContext {
 public:
  NeighborhoodContext(const NodeEmbeddings& z, const Adjacency& source, const Adjacency& target,
                      double tau);

  NeighborPartition partition(NodeId i, NodeId j) const;
  PairAggregates aggregates(NodeId i, NodeId j) const;
  const NodeEmbeddings& embeddings() const { return *z_; }
  const NodeScorer& scorer() const { return scorer_; }
  double tau() const { return tau_; }

 private:
  const NodeEmbeddings* z_;
  const Adjacency* source_;
  const Adjacency* target_;
  NodeScorer scorer_;
  double tau_;
};

/// cos+(h_{i|j}, h_{j|i})
double neighborhood_similarity(const NeighborhoodEncoder& enc, const NeighborhoodContext& ctx,
                               NodeId i, NodeId j);
Var neighborhood_similarity(Tape& tape, const NeighborhoodEncoder& enc,
                            const NeighborhoodContext& ctx, NodeId i, NodeId j);

struct NeighborhoodConfig {
  double tau = 0.5;
  std::size_t candidates = 250;
  Eigen::Index hidden = 512;
  int negatives = 5;
  double lr = 1e-3;
  int epochs = 50;
  std::size_t batch = 256;
  std::uint64_t seed = 1;

  void validate() const;
};

struct NeighborhoodModel {
  NeighborhoodEncoder encoder;
  std::vector<LossRecord> log;
};

/// Trains ENC^nei with the sampled squared loss against the training anchors;
/// negatives for a row are drawn uniformly from its candidate list.
NeighborhoodModel train_neighborhood(const SimilarityGround& label, const NeighborhoodContext& ctx,
                                     const CandidateIndex& candidates,
                                     const NeighborhoodConfig& cfg);

/// (r_node + lambda * r_nei) / (1 + lambda)
double total_similarity(double r_node, double r_nei, double lambda);

}  // namespace infune
