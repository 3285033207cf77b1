#include "infune/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "infune/error.hpp"
#include "infune/log.hpp"

namespace infune {

std::string to_string(Relation r) {
  switch (r) {
    case Relation::structure_source: return "structure_source";
    case Relation::structure_target: return "structure_target";
    case Relation::profile: return "profile";
    case Relation::content: return "content";
    case Relation::label: return "label";
  }
  return "?";
}

FeatureSet FeatureSet::parse(std::string_view name) {
  FeatureSet f{false, false, false};
  if (name.empty()) throw ConfigError("empty variant name");
  for (char ch : name) {
    bool* slot = ch == 's' ? &f.structure : ch == 'p' ? &f.profile : ch == 'c' ? &f.content : nullptr;
    if (!slot || *slot) throw ConfigError("invalid variant name '" + std::string(name) + "'");
    *slot = true;
  }
  return f;
}

std::string FeatureSet::name() const {
  std::string s;
  if (structure) s += 's';
  if (profile) s += 'p';
  if (content) s += 'c';
  return s;
}

std::vector<FeatureSet> all_variants() {
  std::vector<FeatureSet> out;
  for (auto n : {"s", "p", "c", "sp", "sc", "pc", "spc"}) out.push_back(FeatureSet::parse(n));
  return out;
}

void TrainConfig::validate() const {
  if (dim <= 0 || hidden <= 0) throw ConfigError("embedding and hidden dims must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in [0, 1]");
  if (negatives < 1) throw ConfigError("number of negative samples K must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (stop_window < 1) throw ConfigError("stop window must be >= 1");
}

// ---------------------------------------------------------------- EncoderBank

EncoderBank EncoderBank::create(std::size_t n_source, std::size_t n_target, Eigen::Index dim,
                                Eigen::Index hidden, std::uint64_t seed, double embed_init_std) {
  if (dim <= 0 || hidden <= 0) throw ConfigError("embedding and hidden dims must be positive");
  EncoderBank bank;
  Rng rng(seed);
  auto& p = bank.params_;
  p.set_seed(seed);
  p.add("x.source", init_normal(static_cast<Eigen::Index>(n_source), dim, embed_init_std, rng));
  p.add("x.target", init_normal(static_cast<Eigen::Index>(n_target), dim, embed_init_std, rng));
  for (auto name : {"enc.structure", "enc.profile", "enc.content", "phi", "enc.s2c", "enc.t2c"})
    Mlp2::create(p, name, dim, hidden, dim, rng);
  bank.bind();

  // Truncated cosines have zero gradient wherever cos <= 0, so a decoder whose
  // two sides start out anti-aligned never trains. Start both label encoders
  // from the same weights and phi near the identity so every decoder begins
  // in the live zone.
  for (auto part : {".W1", ".b1", ".W2", ".b2"})
    p.value(p.find(std::string("enc.t2c") + part)) = p.value(p.find(std::string("enc.s2c") + part));
  for (auto name : {"enc.structure", "enc.profile", "enc.content", "phi", "enc.s2c", "enc.t2c"})
    for (auto part : {".b1", ".b2"}) p.value(p.find(std::string(name) + part)).setZero();
  if (hidden >= dim) {
    p.value(bank.phi_.w1()).topRows(dim) += Matrix::Identity(dim, dim);
    p.value(bank.phi_.w2()).leftCols(dim) += Matrix::Identity(dim, dim);
  }
  return bank;
}

EncoderBank EncoderBank::from_params(ParamStore params) {
  EncoderBank bank;
  bank.params_ = std::move(params);
  bank.bind();
  return bank;
}

void EncoderBank::bind() {
  x_source_ = params_.find("x.source");
  x_target_ = params_.find("x.target");
  enc_structure_ = Mlp2::bind(params_, "enc.structure");
  enc_profile_ = Mlp2::bind(params_, "enc.profile");
  enc_content_ = Mlp2::bind(params_, "enc.content");
  phi_ = Mlp2::bind(params_, "phi");
  enc_s2c_ = Mlp2::bind(params_, "enc.s2c");
  enc_t2c_ = Mlp2::bind(params_, "enc.t2c");
}

const Mlp2& EncoderBank::encoder(Relation rel) const {
  switch (rel) {
    case Relation::structure_source:
    case Relation::structure_target: return enc_structure_;
    case Relation::profile: return enc_profile_;
    case Relation::content: return enc_content_;
    case Relation::label: return enc_s2c_;
  }
  throw ContractError("unknown relation");
}

namespace {

ParamStore::Id left_table(const EncoderBank& b, Relation rel) {
  return rel == Relation::structure_target ? b.target_embeddings() : b.source_embeddings();
}

ParamStore::Id right_table(const EncoderBank& b, Relation rel) {
  return rel == Relation::structure_source ? b.source_embeddings() : b.target_embeddings();
}

bool is_structure(Relation rel) {
  return rel == Relation::structure_source || rel == Relation::structure_target;
}

}  // namespace

Var EncoderBank::encode_left(Tape& tape, Relation rel, NodeId i) const {
  return encoder(rel).forward(tape, tape.row(left_table(*this, rel), i));
}

Var EncoderBank::encode_right(Tape& tape, Relation rel, NodeId j) const {
  Var x = tape.row(right_table(*this, rel), j);
  if (rel == Relation::label) return enc_t2c_.forward(tape, x);
  Var z = encoder(rel).forward(tape, x);
  return is_structure(rel) ? phi_.forward(tape, z) : z;
}

Vector EncoderBank::encode_left(Relation rel, NodeId i) const {
  return encoder(rel).eval(params_, params_.value(left_table(*this, rel)).row(i).transpose());
}

Vector EncoderBank::encode_right(Relation rel, NodeId j) const {
  Vector x = params_.value(right_table(*this, rel)).row(j).transpose();
  if (rel == Relation::label) return enc_t2c_.eval(params_, x);
  Vector z = encoder(rel).eval(params_, x);
  return is_structure(rel) ? phi_.eval(params_, z) : z;
}

double EncoderBank::reconstruct(Relation rel, NodeId i, NodeId j) const {
  return cos_plus(encode_left(rel, i), encode_right(rel, j));
}

double EncoderBank::reconstruct(GroundKind alpha, UserRef i, UserRef j) const {
  if (alpha == GroundKind::structure) {
    if (i.network != j.network)
      throw ContractError("structure similarity is intra-network; users come from different networks");
    return reconstruct(i.network == Network::source ? Relation::structure_source
                                                    : Relation::structure_target,
                       i.id, j.id);
  }
  if (i.network != Network::source || j.network != Network::target)
    throw ContractError(to_string(alpha) + " similarity needs a (source, target) user pair");
  const Relation rel = alpha == GroundKind::profile   ? Relation::profile
                       : alpha == GroundKind::content ? Relation::content
                                                      : Relation::label;
  return reconstruct(rel, i.id, j.id);
}

NodeEmbeddings EncoderBank::embed() const {
  NodeEmbeddings z;
  const Matrix& xs = params_.value(x_source_);
  const Matrix& xt = params_.value(x_target_);
  const Eigen::Index out = enc_s2c_.out_dim(params_);
  z.source.resize(xs.rows(), out);
  z.target.resize(xt.rows(), out);
  for (Eigen::Index r = 0; r < xs.rows(); ++r)
    z.source.row(r) = enc_s2c_.eval(params_, xs.row(r).transpose()).transpose();
  for (Eigen::Index r = 0; r < xt.rows(); ++r)
    z.target.row(r) = enc_t2c_.eval(params_, xt.row(r).transpose()).transpose();
  return z;
}

// ------------------------------------------------------------------- losses

Var sampled_loss(Tape& tape, const EncoderBank& bank, Relation rel,
                 const SimilarityGround& ground, std::span<const PositivePair> batch,
                 int negatives, double normalizer, Rng& rng) {
  if (!(normalizer > 0.0)) throw ContractError("loss normalizer M must be positive");
  // Encoder outputs are shared by every term that touches the same user.
  std::unordered_map<NodeId, Var> left, right;
  auto lhs = [&](NodeId i) {
    auto [it, fresh] = left.try_emplace(i);
    if (fresh) it->second = bank.encode_left(tape, rel, i);
    return it->second;
  };
  auto rhs = [&](NodeId j) {
    auto [it, fresh] = right.try_emplace(j);
    if (fresh) it->second = bank.encode_right(tape, rel, j);
    return it->second;
  };

  std::vector<Var> terms;
  terms.reserve(batch.size() * static_cast<std::size_t>(negatives + 1));
  for (const PositivePair& p : batch) {
    Var zi = lhs(p.i);
    terms.push_back(tape.squared_error(tape.cos_plus(zi, rhs(p.j)), p.g));
    for (const NegativeDraw& n : sample_negatives(ground, p.i, negatives, rng))
      terms.push_back(tape.squared_error(tape.cos_plus(zi, rhs(n.col)), n.g));
  }
  return tape.scale(tape.sum(terms), 1.0 / normalizer);
}

std::vector<PositivePair> positive_pairs(const SimilarityGround& ground) {
  std::vector<PositivePair> out;
  out.reserve(ground.positive_count());
  for (NodeId i = 0; i < ground.rows(); ++i)
    for (const auto& e : ground.positives(i)) out.push_back({i, e.col, e.g});
  return out;
}

// ----------------------------------------------------------------- training

FusionResult train_fusion(const FusionGrounds& grounds, const TrainConfig& cfg) {
  cfg.validate();
  if (!grounds.label) throw ConfigError("fusion training needs the label ground");

  struct Term {
    Relation rel;
    const SimilarityGround* ground;
    double weight;
    std::vector<PositivePair> positives;
    double normalizer = 0.0;
  };
  std::vector<Term> terms;
  auto add_term = [&](Relation rel, const SimilarityGround* g, double weight) {
    if (!g) throw ConfigError("variant needs the " + to_string(rel) + " ground");
    Term t{rel, g, weight, positive_pairs(*g)};
    t.normalizer = g->normalization_constant(cfg.negatives);
    if (t.positives.empty()) {
      log::warn(to_string(rel) + " ground has no positives; term skipped");
      return;
    }
    terms.push_back(std::move(t));
  };
  add_term(Relation::label, grounds.label, cfg.weight_label);
  if (cfg.features.structure) {
    add_term(Relation::structure_source, grounds.structure_source, cfg.weight_structure);
    add_term(Relation::structure_target, grounds.structure_target, cfg.weight_structure);
  }
  if (cfg.features.profile) add_term(Relation::profile, grounds.profile, cfg.weight_profile);
  if (cfg.features.content) add_term(Relation::content, grounds.content, cfg.weight_content);

  FusionResult result;
  result.bank = EncoderBank::create(grounds.label->rows(), grounds.label->cols(), cfg.dim,
                                    cfg.hidden, sub_seed(cfg.seed, "fusion.init"),
                                    cfg.embed_init_std);
  ParamStore& params = result.bank.params();
  // Training anchors start with identical source and target embeddings.
  for (const auto& pp : terms.front().positives)
    params.value(result.bank.target_embeddings()).row(pp.j) =
        params.value(result.bank.source_embeddings()).row(pp.i);
  Rng rng(sub_seed(cfg.seed, "fusion.sampling"));
  const AdamConfig adam{cfg.lr};

  std::vector<double> totals;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Every ground contributes one mini-batch per round; grounds with fewer
    // batches than the largest one are reshuffled and cycled.
    std::size_t rounds = 0;
    std::vector<std::size_t> per_pass(terms.size()), cursor(terms.size(), 0);
    for (std::size_t k = 0; k < terms.size(); ++k) {
      std::shuffle(terms[k].positives.begin(), terms[k].positives.end(), rng);
      per_pass[k] = (terms[k].positives.size() + cfg.batch - 1) / cfg.batch;
      rounds = std::max(rounds, per_pass[k]);
    }
    std::vector<double> epoch_loss(terms.size(), 0.0);
    for (std::size_t round = 0; round < rounds; ++round) {
      for (std::size_t k = 0; k < terms.size(); ++k) {
        Term& t = terms[k];
        if (cursor[k] >= t.positives.size()) {
          std::shuffle(t.positives.begin(), t.positives.end(), rng);
          cursor[k] = 0;
        }
        const std::size_t begin = cursor[k];
        const std::size_t end = std::min(begin + cfg.batch, t.positives.size());
        cursor[k] = end;
        Tape tape(params);
        Var loss = sampled_loss(tape, result.bank, t.rel, *t.ground,
                                std::span(t.positives).subspan(begin, end - begin), cfg.negatives,
                                t.normalizer, rng);
        const double value = tape.scalar(loss);
        if (!std::isfinite(value))
          throw TrainingError("fusion loss diverged at epoch " + std::to_string(epoch) +
                              " on ground " + to_string(t.rel));
        epoch_loss[k] += value;
        params.zero_grad();
        tape.backward(t.weight == 1.0 ? loss : tape.scale(loss, t.weight));
        adam_step(params, adam);
        ++result.term_counts[to_string(t.rel)];
      }
    }
    // Report each term as the loss of one pass over its positives.
    for (std::size_t k = 0; k < terms.size(); ++k)
      epoch_loss[k] *= static_cast<double>(per_pass[k]) / static_cast<double>(rounds);
    double total = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      result.log.push_back({epoch, to_string(terms[k].rel), epoch_loss[k]});
      total += terms[k].weight * epoch_loss[k];
    }
    totals.push_back(total);
    result.epochs_run = epoch + 1;

    const auto w = static_cast<std::size_t>(cfg.stop_window);
    if (totals.size() >= 2 * w) {
      double recent = 0.0, before = 0.0;
      for (std::size_t k = 0; k < w; ++k) {
        recent += totals[totals.size() - 1 - k];
        before += totals[totals.size() - 1 - w - k];
      }
      if (before > 0.0 && (before - recent) / before < cfg.stop_tolerance) break;
    }
  }
  result.embeddings = result.bank.embed();
  return result;
}

double node_similarity(const NodeEmbeddings& z, NodeId i, NodeId j) {
  return cos_plus(z.source.row(i).transpose(), z.target.row(j).transpose());
}

// ------------------------------------------------------------------- export

void export_embeddings(const std::filesystem::path& path, const Matrix& z,
                       const std::vector<std::string>& user_ids) {
  if (static_cast<std::size_t>(z.rows()) != user_ids.size())
    throw ContractError("embedding rows do not match user count");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    out << user_ids[static_cast<std::size_t>(r)] << '\t';
    for (Eigen::Index c = 0; c < z.cols(); ++c) out << (c ? " " : "") << z(r, c);
    out << '\n';
  }
}

Matrix import_embeddings(const std::filesystem::path& path, const std::vector<std::string>& user_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < user_ids.size(); ++k) index.emplace(user_ids[k], k);
  std::vector<std::vector<double>> rows(user_ids.size());
  std::string line;
  std::size_t lineno = 0, dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": missing tab", lineno);
    auto it = index.find(line.substr(0, tab));
    if (it == index.end()) throw DataError(path.string() + ": unknown user", lineno);
    std::istringstream ss(line.substr(tab + 1));
    std::vector<double> v;
    for (double x; ss >> x;) v.push_back(x);
    if (dim == 0) dim = v.size();
    if (v.size() != dim || dim == 0) throw DataError(path.string() + ": ragged embedding", lineno);
    rows[it->second] = std::move(v);
  }
  Matrix z(static_cast<Eigen::Index>(user_ids.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dim) throw DataError(path.string() + ": missing user " + user_ids[r]);
    for (std::size_t c = 0; c < dim; ++c) z(r, c) = rows[r][c];
  }
  return z;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,ground,loss\n" << std::setprecision(10);
  for (const auto& r : log) out << r.epoch << ',' << r.ground << ',' << r.loss << '\n';
}

}  // namespace infune
