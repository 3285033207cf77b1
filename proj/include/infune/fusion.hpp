#pragma once

// Information fusion: per-network unified embeddings passed through shared
// feature encoders, truncated-cosine decoders reconstructing each ground
// truth, and the negative-sampled squared loss that trains them.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "infune/ground_truth.hpp"
#include "infune/tensor.hpp"

namespace infune {

enum class Network : std::uint8_t { source, target };

struct UserRef {
  Network network = Network::source;
  NodeId id = 0;
};

/// Which ground a reconstruction or loss term refers to.
enum class Relation : std::uint8_t { structure_source, structure_target, profile, content, label };

std::string to_string(Relation r);

/// Subset of {structure, profile, content} a model variant trains on; the
/// label term is always present.
struct FeatureSet {
  bool structure = true;
  bool profile = true;
  bool content = true;

  /// "s", "pc", "spc", ... (letters in any order, no repeats).
  static FeatureSet parse(std::string_view name);
  std::string name() const;
  bool operator==(const FeatureSet&) const = default;
};

/// All seven non-empty variants in canonical order: s, p, c, sp, sc, pc, spc.
std::vector<FeatureSet> all_variants();

struct TrainConfig {
  Eigen::Index dim = 256;
  Eigen::Index hidden = 512;
  double theta = 0.99;
  int negatives = 5;
  double lr = 1e-3;
  int epochs = 50;
  std::size_t batch = 256;
  std::uint64_t seed = 1;
  FeatureSet features;
  double weight_label = 1.0;
  double weight_structure = 1.0;
  double weight_profile = 1.0;
  double weight_content = 1.0;
  int stop_window = 5;
  double stop_tolerance = 1e-4;  // relative windowed improvement
  double embed_init_std = 0.1;

  void validate() const;
};

struct NodeEmbeddings {
  Matrix source;  // one row per source user
  Matrix target;
};

class EncoderBank {
 public:
  static EncoderBank create(std::size_t n_source, std::size_t n_target, Eigen::Index dim,
                            Eigen::Index hidden, std::uint64_t seed, double embed_init_std = 0.1);
  /// Rebinds a bank to parameters loaded from a checkpoint.
  static EncoderBank from_params(ParamStore params);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t source_users() const { return static_cast<std::size_t>(params_.value(x_source_).rows()); }
  std::size_t target_users() const { return static_cast<std::size_t>(params_.value(x_target_).rows()); }
  Eigen::Index dim() const { return params_.value(x_source_).cols(); }

  ParamStore::Id source_embeddings() const { return x_source_; }
  ParamStore::Id target_embeddings() const { return x_target_; }

  /// Left/right decoder inputs of a relation: the row user's and column
  /// user's feature embeddings (the column side passes through phi for structure).
  Var encode_left(Tape& tape, Relation rel, NodeId i) const;
  Var encode_right(Tape& tape, Relation rel, NodeId j) const;
  Vector encode_left(Relation rel, NodeId i) const;
  Vector encode_right(Relation rel, NodeId j) const;

  /// r_ij for relation `rel` (tape-free).
  double reconstruct(Relation rel, NodeId i, NodeId j) const;
  /// r^alpha_ij with network membership checked: structure needs both users in
  /// the same network; profile/content/label need (source, target).
  double reconstruct(GroundKind alpha, UserRef i, UserRef j) const;

  /// Common-space node embeddings z = ENC^s2c(x) / ENC^t2c(x).
  NodeEmbeddings embed() const;

  const Mlp2& encoder(Relation rel) const;
  const Mlp2& phi() const { return phi_; }

 private:
  ParamStore params_;
  ParamStore::Id x_source_ = 0, x_target_ = 0;
  Mlp2 enc_structure_, enc_profile_, enc_content_, phi_, enc_s2c_, enc_t2c_;

  void bind();
};

struct PositivePair {
  NodeId i = 0;
  NodeId j = 0;
  double g = 0.0;
};

/// (1/M) * sum over the batch of [(r_ij - g_ij)^2 + sum_{n=1..K} (r_in - g_in)^2]
/// with negatives from sample_negatives(). Recorded on `tape`; returns the scalar.
Var sampled_loss(Tape& tape, const EncoderBank& bank, Relation rel,
                 const SimilarityGround& ground, std::span<const PositivePair> batch,
                 int negatives, double normalizer, Rng& rng);

/// Positives of a ground flattened row-major.
std::vector<PositivePair> positive_pairs(const SimilarityGround& ground);

struct FusionGrounds {
  const SimilarityGround* structure_source = nullptr;
  const SimilarityGround* structure_target = nullptr;
  const SimilarityGround* profile = nullptr;
  const SimilarityGround* content = nullptr;
  const SimilarityGround* label = nullptr;
};

struct LossRecord {
  int epoch = 0;
  std::string ground;
  double loss = 0.0;
};

struct FusionResult {
  EncoderBank bank;
  NodeEmbeddings embeddings;
  std::vector<LossRecord> log;
  /// Mini-batch loss terms evaluated per relation name.
  std::map<std::string, std::size_t> term_counts;
  int epochs_run = 0;
};

/// Minimizes the sum of the sampled losses of the label ground and the
/// grounds selected by cfg.features, one mini-batch per ground per round.
FusionResult train_fusion(const FusionGrounds& grounds, const TrainConfig& cfg);

/// cos+(z_i, z_j)
double node_similarity(const NodeEmbeddings& z, NodeId i, NodeId j);

/// Writes "user_id<TAB>v1 v2 ... vD" per row.
void export_embeddings(const std::filesystem::path& path, const Matrix& z,
                       const std::vector<std::string>& user_ids);
Matrix import_embeddings(const std::filesystem::path& path, const std::vector<std::string>& user_ids);

/// CSV "epoch,ground,loss".
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace infune
