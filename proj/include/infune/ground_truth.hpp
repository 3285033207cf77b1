#pragma once

// Sparse ground-truth similarity structures, the per-row quantile split into
// similar/dissimilar users, and the d_j^(3/4) negative-sampling distribution.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "infune/dataset.hpp"
#include "infune/rng.hpp"
#include "infune/text.hpp"

namespace infune {

enum class GroundKind : std::uint8_t { structure, profile, content, label };

std::string to_string(GroundKind k);
GroundKind ground_kind_from_string(std::string_view s);

struct GroundEntry {
  NodeId col = 0;
  double g = 0.0;
  bool operator==(const GroundEntry&) const = default;
};

using GroundRow = std::vector<GroundEntry>;  // sorted by col

/// Entries below this value are not materialized for dense (inter-network) grounds.
inline constexpr double kMaterializeFloor = 1e-6;

/// Resample budget when a negative draw lands in the row's positive set.
inline constexpr int kNegativeRetries = 10;

/// θ-quantile of a row by linear interpolation between order statistics.
double row_quantile(std::span<const double> row, double theta);

struct RowPartition {
  std::vector<std::size_t> positives;  // g >= q
  std::vector<std::size_t> negatives;  // g <  q
  double quantile = 0.0;
  bool all_equal = false;
};

/// Splits a dense row at its θ-quantile; ties at the quantile are positive.
RowPartition quantile_split(std::span<const double> row, double theta);

class SimilarityGround {
 public:
  SimilarityGround() = default;

  /// Builds from materialized rows (entries with g = 0 may be omitted). The
  /// quantile of each row is taken over the full row, implicit zeros included;
  /// positives are the materialized entries with g >= q and g > 0.
  SimilarityGround(GroundKind kind, std::size_t n_rows, std::size_t n_cols,
                   std::vector<GroundRow> rows, double theta);

  GroundKind kind() const { return kind_; }
  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return n_cols_; }
  double theta() const { return theta_; }

  /// g_ij (0 when not materialized).
  double value(NodeId i, NodeId j) const;
  const GroundRow& row(NodeId i) const { return rows_.at(i); }
  const GroundRow& positives(NodeId i) const { return positives_.at(i); }
  bool is_positive(NodeId i, NodeId j) const;
  double quantile(NodeId i) const { return quantiles_.at(i); }

  std::size_t positive_count() const { return positive_count_; }
  std::size_t materialized_count() const;
  /// M = (K + 1) * sum_i |U+(i)|
  double normalization_constant(int negatives) const;

  /// P(j) ∝ (sum_i |g_ij|)^(3/4); uniform when every column mass is zero.
  const std::vector<double>& noise_weights() const { return noise_; }
  bool noise_is_uniform() const { return noise_uniform_; }
  /// Rows whose entries are all equal (every column positive by the quantile rule).
  std::size_t all_equal_rows() const { return all_equal_rows_; }

  /// Draws one column from the noise distribution.
  NodeId draw_noise(Rng& rng) const;

  bool operator==(const SimilarityGround& other) const;

  /// Plain-text cache: header, positives, remaining materialized entries, noise vector.
  void save(const std::filesystem::path& path, const std::string& key = {}) const;
  static SimilarityGround load(const std::filesystem::path& path, std::string* key = nullptr);

 private:
  void build_noise();

  GroundKind kind_ = GroundKind::label;
  std::size_t n_cols_ = 0;
  double theta_ = 0.0;
  std::vector<GroundRow> rows_;
  std::vector<GroundRow> positives_;
  std::vector<double> quantiles_;
  std::size_t positive_count_ = 0;
  std::size_t all_equal_rows_ = 0;
  std::vector<double> noise_;
  std::vector<double> noise_cdf_;
  bool noise_uniform_ = false;
};

struct NegativeDraw {
  NodeId col = 0;
  double g = 0.0;  // regression target: the true g value of the drawn pair
  bool operator==(const NegativeDraw&) const = default;
};

/// K draws from the ground's noise distribution for row i; a draw inside the
/// row's positive set is resampled up to kNegativeRetries times, then kept.
std::vector<NegativeDraw> sample_negatives(const SimilarityGround& ground, NodeId i, int k,
                                           Rng& rng);

/// g_ij = 1 iff the directed edge i -> j exists.
SimilarityGround structure_ground(const SocialNetwork& net, double theta);
/// Normalized Levenshtein similarity of screen names; 0 if either is empty.
SimilarityGround profile_ground(const SocialNetwork& src, const SocialNetwork& tgt, double theta);
/// Truncated cosine of TF-IDF vectors fitted on both networks' documents.
SimilarityGround content_ground(const SocialNetwork& src, const SocialNetwork& tgt, double theta);
/// g_ij = 1 iff (i, j) is a training anchor.
SimilarityGround label_ground(const AnchorSet& anchors, std::size_t n_src, std::size_t n_tgt,
                              double theta);

}  // namespace infune
