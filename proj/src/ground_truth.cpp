#include "infune/ground_truth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "infune/error.hpp"

namespace infune {

std::string to_string(GroundKind k) {
  switch (k) {
    case GroundKind::structure: return "structure";
    case GroundKind::profile: return "profile";
    case GroundKind::content: return "content";
    case GroundKind::label: return "label";
  }
  return "?";
}

GroundKind ground_kind_from_string(std::string_view s) {
  if (s == "structure") return GroundKind::structure;
  if (s == "profile") return GroundKind::profile;
  if (s == "content") return GroundKind::content;
  if (s == "label") return GroundKind::label;
  throw DataError("unknown ground kind '" + std::string(s) + "'");
}

// ------------------------------------------------------------------ quantile

namespace {

void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in [0, 1]");
}

// Quantile of a sorted sequence of length n given its order-statistic accessor.
template <typename At>
double interpolated_quantile(std::size_t n, double theta, At&& at) {
  const double pos = theta * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  const double a = at(lo), b = at(hi);
  return a + frac * (b - a);
}

}  // namespace

double row_quantile(std::span<const double> row, double theta) {
  check_theta(theta);
  if (row.empty()) throw ContractError("quantile of an empty row");
  std::vector<double> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());
  return interpolated_quantile(sorted.size(), theta, [&](std::size_t t) { return sorted[t]; });
}

RowPartition quantile_split(std::span<const double> row, double theta) {
  RowPartition part;
  part.quantile = row_quantile(row, theta);
  part.all_equal = std::all_of(row.begin(), row.end(), [&](double g) { return g == row.front(); });
  for (std::size_t j = 0; j < row.size(); ++j)
    (row[j] >= part.quantile ? part.positives : part.negatives).push_back(j);
  return part;
}

// ------------------------------------------------------------ SimilarityGround

SimilarityGround::SimilarityGround(GroundKind kind, std::size_t n_rows, std::size_t n_cols,
                                   std::vector<GroundRow> rows, double theta)
    : kind_(kind), n_cols_(n_cols), theta_(theta), rows_(std::move(rows)) {
  check_theta(theta);
  if (rows_.size() != n_rows) throw ContractError("ground row count mismatch");
  positives_.resize(n_rows);
  quantiles_.assign(n_rows, 0.0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    GroundRow& r = rows_[i];
    std::erase_if(r, [](const GroundEntry& e) { return e.g <= 0.0; });
    std::sort(r.begin(), r.end(), [](auto& a, auto& b) { return a.col < b.col; });
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (r[k].col >= n_cols) throw ContractError("ground column out of range");
      if (!(r[k].g <= 1.0)) throw ContractError("ground value outside [0, 1]");
      if (k > 0 && r[k].col == r[k - 1].col) throw ContractError("duplicate ground entry");
    }
    if (n_cols == 0) continue;

    std::vector<double> vals;
    vals.reserve(r.size());
    for (auto& e : r) vals.push_back(e.g);
    std::sort(vals.begin(), vals.end());
    const std::size_t zeros = n_cols - vals.size();
    const double q = interpolated_quantile(n_cols, theta, [&](std::size_t t) {
      return t < zeros ? 0.0 : vals[t - zeros];
    });
    quantiles_[i] = q;
    const bool all_equal = vals.empty() || (zeros == 0 && vals.front() == vals.back());
    if (all_equal) ++all_equal_rows_;
    for (auto& e : r)
      if (e.g >= q) positives_[i].push_back(e);
    positive_count_ += positives_[i].size();
  }
  build_noise();
}

void SimilarityGround::build_noise() {
  std::vector<double> mass(n_cols_, 0.0);
  for (const auto& r : rows_)
    for (const auto& e : r) mass[e.col] += std::abs(e.g);
  noise_.assign(n_cols_, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n_cols_; ++j) total += (noise_[j] = std::pow(mass[j], 0.75));
  noise_uniform_ = total <= 0.0;
  if (noise_uniform_) {
    std::fill(noise_.begin(), noise_.end(), n_cols_ ? 1.0 / static_cast<double>(n_cols_) : 0.0);
  } else {
    for (auto& w : noise_) w /= total;
  }
  noise_cdf_.resize(n_cols_);
  double acc = 0.0;
  for (std::size_t j = 0; j < n_cols_; ++j) noise_cdf_[j] = (acc += noise_[j]);
}

double SimilarityGround::value(NodeId i, NodeId j) const {
  const GroundRow& r = rows_.at(i);
  auto it = std::lower_bound(r.begin(), r.end(), j,
                             [](const GroundEntry& e, NodeId c) { return e.col < c; });
  return it != r.end() && it->col == j ? it->g : 0.0;
}

bool SimilarityGround::is_positive(NodeId i, NodeId j) const {
  const GroundRow& r = positives_.at(i);
  auto it = std::lower_bound(r.begin(), r.end(), j,
                             [](const GroundEntry& e, NodeId c) { return e.col < c; });
  return it != r.end() && it->col == j;
}

std::size_t SimilarityGround::materialized_count() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

double SimilarityGround::normalization_constant(int negatives) const {
  return static_cast<double>(negatives + 1) * static_cast<double>(positive_count_);
}

NodeId SimilarityGround::draw_noise(Rng& rng) const {
  if (n_cols_ == 0) throw ContractError("noise draw from a ground without columns");
  const double u = uniform01(rng) * noise_cdf_.back();
  auto it = std::upper_bound(noise_cdf_.begin(), noise_cdf_.end(), u);
  auto j = static_cast<std::size_t>(it - noise_cdf_.begin());
  // Skip zero-weight columns a rounding edge could land on.
  while (j < n_cols_ && noise_[j] == 0.0) ++j;
  if (j >= n_cols_) {
    j = n_cols_ - 1;
    while (j > 0 && noise_[j] == 0.0) --j;
  }
  return static_cast<NodeId>(j);
}

bool SimilarityGround::operator==(const SimilarityGround& o) const {
  return kind_ == o.kind_ && n_cols_ == o.n_cols_ && theta_ == o.theta_ && rows_ == o.rows_ &&
         positives_ == o.positives_ && noise_ == o.noise_;
}

void SimilarityGround::save(const std::filesystem::path& path, const std::string& key) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "# infune ground v1\n";
  out << "kind\t" << to_string(kind_) << "\ntheta\t" << theta_ << "\nrows\t" << rows_.size()
      << "\ncols\t" << n_cols_ << "\nkey\t" << key << '\n';
  out << "positives\t" << positive_count_ << '\n';
  for (std::size_t i = 0; i < rows_.size(); ++i)
    for (auto& e : positives_[i]) out << i << '\t' << e.col << '\t' << e.g << '\n';
  out << "others\t" << materialized_count() - positive_count_ << '\n';
  for (std::size_t i = 0; i < rows_.size(); ++i)
    for (auto& e : rows_[i])
      if (!is_positive(static_cast<NodeId>(i), e.col)) out << i << '\t' << e.col << '\t' << e.g << '\n';
  out << "noise\t" << noise_.size() << '\n';
  for (double w : noise_) out << w << '\n';
}

SimilarityGround SimilarityGround::load(const std::filesystem::path& path, std::string* key) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw DataError(path.string() + ": truncated ground cache", lineno);
    ++lineno;
    return line;
  };
  auto field = [&](std::string_view name) {
    std::string& l = next();
    auto tab = l.find('\t');
    if (tab == std::string::npos || l.substr(0, tab) != name)
      throw DataError(path.string() + ": expected '" + std::string(name) + "'", lineno);
    return l.substr(tab + 1);
  };
  if (next() != "# infune ground v1") throw DataError(path.string() + ": bad header", lineno);
  const GroundKind kind = ground_kind_from_string(field("kind"));
  const double theta = std::stod(field("theta"));
  const std::size_t n_rows = std::stoul(field("rows"));
  const std::size_t n_cols = std::stoul(field("cols"));
  std::string k = field("key");
  if (key) *key = k;

  std::vector<GroundRow> rows(n_rows);
  auto read_entries = [&](std::string_view section) {
    const std::size_t count = std::stoul(field(section));
    for (std::size_t c = 0; c < count; ++c) {
      std::istringstream ss(next());
      std::size_t i = 0, j = 0;
      double g = 0.0;
      if (!(ss >> i >> j >> g) || i >= n_rows || j >= n_cols)
        throw DataError(path.string() + ": malformed entry", lineno);
      rows[i].push_back({static_cast<NodeId>(j), g});
    }
  };
  read_entries("positives");
  read_entries("others");
  SimilarityGround ground(kind, n_rows, n_cols, std::move(rows), theta);

  const std::size_t n_noise = std::stoul(field("noise"));
  if (n_noise != n_cols) throw DataError(path.string() + ": noise vector length mismatch", lineno);
  for (std::size_t j = 0; j < n_noise; ++j) {
    if (std::stod(next()) != ground.noise_[j])
      throw DataError(path.string() + ": stale noise weights", lineno);
  }
  return ground;
}

// --------------------------------------------------------------- sampling

std::vector<NegativeDraw> sample_negatives(const SimilarityGround& ground, NodeId i, int k,
                                           Rng& rng) {
  std::vector<NegativeDraw> out;
  out.reserve(static_cast<std::size_t>(std::max(k, 0)));
  for (int n = 0; n < k; ++n) {
    NodeId j = ground.draw_noise(rng);
    for (int retry = 0; retry < kNegativeRetries && ground.is_positive(i, j); ++retry)
      j = ground.draw_noise(rng);
    out.push_back({j, ground.value(i, j)});
  }
  return out;
}

// ------------------------------------------------------------- constructors

SimilarityGround structure_ground(const SocialNetwork& net, double theta) {
  std::vector<GroundRow> rows(net.size());
  for (auto [s, d] : net.edges()) rows[s].push_back({d, 1.0});
  return SimilarityGround(GroundKind::structure, net.size(), net.size(), std::move(rows), theta);
}

SimilarityGround profile_ground(const SocialNetwork& src, const SocialNetwork& tgt, double theta) {
  std::vector<std::u32string> tgt_names(tgt.size());
  for (NodeId j = 0; j < tgt.size(); ++j) tgt_names[j] = utf8_decode(tgt.screen_name(j));
  std::vector<GroundRow> rows(src.size());
  for (NodeId i = 0; i < src.size(); ++i) {
    const std::u32string a = utf8_decode(src.screen_name(i));
    if (a.empty()) continue;
    for (NodeId j = 0; j < tgt.size(); ++j) {
      const std::u32string& b = tgt_names[j];
      if (b.empty()) continue;
      const double g = 1.0 - static_cast<double>(levenshtein(a, b)) /
                                 static_cast<double>(std::max(a.size(), b.size()));
      if (g >= kMaterializeFloor) rows[i].push_back({j, g});
    }
  }
  return SimilarityGround(GroundKind::profile, src.size(), tgt.size(), std::move(rows), theta);
}

SimilarityGround content_ground(const SocialNetwork& src, const SocialNetwork& tgt, double theta) {
  std::vector<const Document*> corpus;
  for (NodeId i = 0; i < src.size(); ++i) corpus.push_back(&src.document(i));
  for (NodeId j = 0; j < tgt.size(); ++j) corpus.push_back(&tgt.document(j));
  const TfidfVectorizer tfidf(corpus);

  // Inverted index over target vectors.
  std::vector<std::vector<std::pair<NodeId, double>>> postings(tfidf.vocabulary_size());
  for (NodeId j = 0; j < tgt.size(); ++j)
    for (auto [term, w] : tfidf.transform(tgt.document(j))) postings[term].emplace_back(j, w);

  std::vector<GroundRow> rows(src.size());
  std::vector<double> acc(tgt.size());
  for (NodeId i = 0; i < src.size(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (auto [term, w] : tfidf.transform(src.document(i)))
      for (auto [j, wj] : postings[term]) acc[j] += w * wj;
    for (NodeId j = 0; j < tgt.size(); ++j) {
      const double g = std::clamp(acc[j], 0.0, 1.0);
      if (g >= kMaterializeFloor) rows[i].push_back({j, g});
    }
  }
  return SimilarityGround(GroundKind::content, src.size(), tgt.size(), std::move(rows), theta);
}

SimilarityGround label_ground(const AnchorSet& anchors, std::size_t n_src, std::size_t n_tgt,
                              double theta) {
  anchors.validate(n_src, n_tgt);
  std::vector<GroundRow> rows(n_src);
  for (const auto& l : anchors.with_split(Split::train)) rows[l.source].push_back({l.target, 1.0});
  return SimilarityGround(GroundKind::label, n_src, n_tgt, std::move(rows), theta);
}

}  // namespace infune
