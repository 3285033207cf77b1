#include "infune/neighborhood.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "infune/error.hpp"

namespace infune {

Vector mean_rows(const Matrix& z, std::span<const NodeId> rows) {
  Vector h = Vector::Zero(z.cols());
  if (rows.empty()) return h;
  for (NodeId r : rows) h += z.row(r).transpose();
  return h / static_cast<double>(rows.size());
}

PairAggregates aggregate(const NeighborPartition& part, const NodeEmbeddings& z) {
  return {mean_rows(z.source, part.matched_src), mean_rows(z.source, part.unmatched_src),
          mean_rows(z.target, part.matched_tgt), mean_rows(z.target, part.unmatched_tgt)};
}

// ---------------------------------------------------------------- NodeScorer

namespace {

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > 0.0) out.row(r) /= n;
  }
  return out;
}

}  // namespace

NodeScorer::NodeScorer(const NodeEmbeddings& z)
    : src_(normalize_rows(z.source)), tgt_(normalize_rows(z.target)) {
  if (z.source.cols() != z.target.cols()) throw ConfigError("node embedding dims differ");
}

double NodeScorer::operator()(NodeId i, NodeId j) const {
  return std::max(0.0, src_.row(i).dot(tgt_.row(j)));
}

Vector NodeScorer::row(NodeId i) const {
  return (tgt_ * src_.row(i).transpose()).cwiseMax(0.0);
}

// ------------------------------------------------------------ CandidateIndex

CandidateIndex CandidateIndex::build(const NodeScorer& scorer, std::span<const NodeId> sources,
                                     std::size_t limit) {
  if (limit == 0) throw ConfigError("candidate list size C must be positive");
  CandidateIndex idx;
  idx.limit_ = limit;
  idx.lists_.resize(scorer.source_users());
  idx.present_.assign(scorer.source_users(), 0);
  std::vector<NodeId> order(scorer.target_users());
  for (NodeId i : sources) {
    const Vector r = scorer.row(i);
    std::iota(order.begin(), order.end(), NodeId{0});
    const std::size_t keep = std::min(limit, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](NodeId a, NodeId b) { return r[a] != r[b] ? r[a] > r[b] : a < b; });
    auto& list = idx.lists_[i];
    list.clear();
    for (std::size_t k = 0; k < keep; ++k) list.push_back({order[k], r[order[k]]});
    idx.present_[i] = 1;
  }
  return idx;
}

bool CandidateIndex::contains(NodeId source) const {
  return source < present_.size() && present_[source];
}

const std::vector<Candidate>& CandidateIndex::candidates(NodeId source) const {
  if (!contains(source)) throw ContractError("no candidate list for source user");
  return lists_[source];
}

bool CandidateIndex::operator==(const CandidateIndex& o) const {
  if (limit_ != o.limit_ || present_ != o.present_ || lists_.size() != o.lists_.size()) return false;
  for (std::size_t i = 0; i < lists_.size(); ++i) {
    if (lists_[i].size() != o.lists_[i].size()) return false;
    for (std::size_t k = 0; k < lists_[i].size(); ++k)
      if (lists_[i][k].target != o.lists_[i][k].target || lists_[i][k].r_node != o.lists_[i][k].r_node)
        return false;
  }
  return true;
}

void CandidateIndex::save(const std::filesystem::path& path, const SocialNetwork& source,
                          const SocialNetwork& target) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  for (NodeId i = 0; i < lists_.size(); ++i) {
    if (!present_[i]) continue;
    for (std::size_t k = 0; k < lists_[i].size(); ++k)
      out << source.user(i) << '\t' << k + 1 << '\t' << target.user(lists_[i][k].target) << '\t'
          << lists_[i][k].r_node << '\n';
  }
}

CandidateIndex CandidateIndex::load(const std::filesystem::path& path, const SocialNetwork& source,
                                    const SocialNetwork& target, std::size_t limit) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CandidateIndex idx;
  idx.limit_ = limit;
  idx.lists_.resize(source.size());
  idx.present_.assign(source.size(), 0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string s, t;
    std::size_t rank = 0;
    double r = 0.0;
    if (!std::getline(ss, s, '\t') || !(ss >> rank) || !(ss.ignore(1)) || !std::getline(ss, t, '\t') ||
        !(ss >> r))
      throw DataError(path.string() + ": expected source_id, rank, target_id, r_node", lineno);
    auto si = source.find(s);
    auto ti = target.find(t);
    if (!si || !ti) throw DataError(path.string() + ": unknown user", lineno);
    auto& list = idx.lists_[*si];
    if (rank != list.size() + 1) throw DataError(path.string() + ": ranks out of order", lineno);
    list.push_back({*ti, r});
    idx.present_[*si] = 1;
  }
  return idx;
}

// ------------------------------------------------------- NeighborhoodEncoder

NeighborhoodEncoder NeighborhoodEncoder::create(Eigen::Index node_dim, Eigen::Index hidden,
                                                std::uint64_t seed) {
  NeighborhoodEncoder enc;
  Rng rng(seed);
  enc.params_.set_seed(seed);
  enc.mlp_ = Mlp2::create(enc.params_, "enc.nei", 3 * node_dim, hidden, node_dim, rng);
  return enc;
}

NeighborhoodEncoder NeighborhoodEncoder::from_params(ParamStore params) {
  NeighborhoodEncoder enc;
  enc.params_ = std::move(params);
  enc.mlp_ = Mlp2::bind(enc.params_, "enc.nei");
  if (enc.mlp_.in_dim(enc.params_) != 3 * enc.mlp_.out_dim(enc.params_))
    throw DataError("neighborhood encoder input must be three times the node dim");
  return enc;
}

namespace {

Vector concat3(const Vector& a, const Vector& b, const Vector& c) {
  Vector out(a.size() + b.size() + c.size());
  out << a, b, c;
  return out;
}

}  // namespace

Vector NeighborhoodEncoder::embed(const Vector& z, const Vector& matched,
                                  const Vector& unmatched) const {
  const Eigen::Index d = node_dim();
  if (z.size() != d || matched.size() != d || unmatched.size() != d)
    throw ContractError("neighborhood encoder input dims do not match the node dim");
  return mlp_.eval(params_, concat3(z, matched, unmatched));
}

Var NeighborhoodEncoder::embed(Tape& tape, const Vector& z, const Vector& matched,
                               const Vector& unmatched) const {
  const Eigen::Index d = node_dim();
  if (z.size() != d || matched.size() != d || unmatched.size() != d)
    throw ContractError("neighborhood encoder input dims do not match the node dim");
  const Var parts[] = {tape.constant(z), tape.constant(matched), tape.constant(unmatched)};
  return mlp_.forward(tape, tape.concat(parts));
}

// ------------------------------------------------------- NeighborhoodContext

NeighborhoodContext::NeighborhoodContext(const NodeEmbeddings& z, const Adjacency& source,
                                         const Adjacency& target, double tau)
    : z_(&z), source_(&source), target_(&target), scorer_(z), tau_(tau) {
  if (source.undirected.size() != static_cast<std::size_t>(z.source.rows()) ||
      target.undirected.size() != static_cast<std::size_t>(z.target.rows()))
    throw ConfigError("adjacency and embedding user counts differ");
}

NeighborPartition NeighborhoodContext::partition(NodeId i, NodeId j) const {
  return match_neighbors(std::span<const NodeId>(source_->undirected.at(i)),
                         std::span<const NodeId>(target_->undirected.at(j)),
                         [this](NodeId a, NodeId b) { return scorer_(a, b); }, tau_);
}

PairAggregates NeighborhoodContext::aggregates(NodeId i, NodeId j) const {
  return aggregate(partition(i, j), *z_);
}

double neighborhood_similarity(const NeighborhoodEncoder& enc, const NeighborhoodContext& ctx,
                               NodeId i, NodeId j) {
  const PairAggregates h = ctx.aggregates(i, j);
  const NodeEmbeddings& z = ctx.embeddings();
  return cos_plus(enc.embed(z.source.row(i).transpose(), h.src_matched, h.src_unmatched),
                  enc.embed(z.target.row(j).transpose(), h.tgt_matched, h.tgt_unmatched));
}

Var neighborhood_similarity(Tape& tape, const NeighborhoodEncoder& enc,
                            const NeighborhoodContext& ctx, NodeId i, NodeId j) {
  const PairAggregates h = ctx.aggregates(i, j);
  const NodeEmbeddings& z = ctx.embeddings();
  Var hi = enc.embed(tape, z.source.row(i).transpose(), h.src_matched, h.src_unmatched);
  Var hj = enc.embed(tape, z.target.row(j).transpose(), h.tgt_matched, h.tgt_unmatched);
  return tape.cos_plus(hi, hj);
}

// ------------------------------------------------------------------ training

void NeighborhoodConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("matching threshold tau must lie in [0, 1]");
  if (candidates == 0) throw ConfigError("candidate list size C must be positive");
  if (hidden <= 0) throw ConfigError("hidden dim must be positive");
  if (negatives < 1) throw ConfigError("number of negative samples K must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch == 0) throw ConfigError("batch size must be positive");
}

NeighborhoodModel train_neighborhood(const SimilarityGround& label, const NeighborhoodContext& ctx,
                                     const CandidateIndex& candidates,
                                     const NeighborhoodConfig& cfg) {
  cfg.validate();
  std::vector<PositivePair> positives = positive_pairs(label);
  if (positives.empty()) throw ConfigError("neighborhood training needs at least one train anchor");
  for (const auto& p : positives)
    if (!candidates.contains(p.i)) throw ContractError("train anchor source lacks a candidate list");

  NeighborhoodModel model{NeighborhoodEncoder::create(ctx.embeddings().source.cols(), cfg.hidden,
                                                      sub_seed(cfg.seed, "nei.init")),
                          {}};
  ParamStore& params = model.encoder.params();
  Rng rng(sub_seed(cfg.seed, "nei.sampling"));
  const AdamConfig adam{cfg.lr};
  const double normalizer = static_cast<double>(cfg.negatives + 1) * static_cast<double>(positives.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(positives.begin(), positives.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < positives.size(); begin += cfg.batch) {
      const std::size_t end = std::min(begin + cfg.batch, positives.size());
      Tape tape(params);
      std::vector<Var> terms;
      for (std::size_t k = begin; k < end; ++k) {
        const PositivePair& p = positives[k];
        terms.push_back(tape.squared_error(
            neighborhood_similarity(tape, model.encoder, ctx, p.i, p.j), p.g));
        const auto& list = candidates.candidates(p.i);
        if (list.empty()) continue;
        for (int n = 0; n < cfg.negatives; ++n) {
          NodeId j = list[uniform_index(rng, list.size())].target;
          for (int retry = 0; retry < kNegativeRetries && label.is_positive(p.i, j); ++retry)
            j = list[uniform_index(rng, list.size())].target;
          terms.push_back(tape.squared_error(
              neighborhood_similarity(tape, model.encoder, ctx, p.i, j), label.value(p.i, j)));
        }
      }
      Var loss = tape.scale(tape.sum(terms), 1.0 / normalizer);
      const double value = tape.scalar(loss);
      if (!std::isfinite(value))
        throw TrainingError("neighborhood loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += value;
      params.zero_grad();
      tape.backward(loss);
      adam_step(params, adam);
    }
    model.log.push_back({epoch, "neighborhood", epoch_loss});
  }
  return model;
}

double total_similarity(double r_node, double r_nei, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  return (r_node + lambda * r_nei) / (1.0 + lambda);
}

}  // namespace infune
