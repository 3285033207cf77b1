#include "infune/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "infune/error.hpp"
#include "infune/log.hpp"
#include "infune/rng.hpp"

namespace infune {

// ------------------------------------------------------------ SocialNetwork

NodeId SocialNetwork::add_user(std::string_view user) {
  if (auto it = index_.find(std::string(user)); it != index_.end()) return it->second;
  const auto id = static_cast<NodeId>(users_.size());
  users_.emplace_back(user);
  index_.emplace(users_.back(), id);
  screen_names_.emplace_back();
  documents_.emplace_back();
  return id;
}

std::optional<NodeId> SocialNetwork::find(std::string_view user) const {
  if (auto it = index_.find(std::string(user)); it != index_.end()) return it->second;
  return std::nullopt;
}

bool SocialNetwork::add_edge(NodeId src, NodeId dst) {
  if (src >= users_.size() || dst >= users_.size()) throw ContractError("edge endpoint out of range");
  if (src == dst) return false;
  if (!edge_keys_.insert(key(src, dst)).second) return false;
  edges_.emplace_back(src, dst);
  return true;
}

bool SocialNetwork::has_edge(NodeId src, NodeId dst) const {
  return edge_keys_.contains(key(src, dst));
}

std::vector<std::pair<NodeId, NodeId>> SocialNetwork::edges() const {
  auto out = edges_;
  std::sort(out.begin(), out.end());
  return out;
}

bool SocialNetwork::operator==(const SocialNetwork& other) const {
  return users_ == other.users_ && screen_names_ == other.screen_names_ &&
         documents_ == other.documents_ && edges() == other.edges();
}

Adjacency build_adjacency(const SocialNetwork& net) {
  Adjacency adj;
  adj.out.resize(net.size());
  adj.in.resize(net.size());
  adj.undirected.resize(net.size());
  for (auto [s, d] : net.edges()) {
    adj.out[s].push_back(d);
    adj.in[d].push_back(s);
    adj.undirected[s].push_back(d);
    adj.undirected[d].push_back(s);
  }
  for (auto* lists : {&adj.out, &adj.in, &adj.undirected}) {
    for (auto& l : *lists) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
  }
  return adj;
}

// -------------------------------------------------------------------- files

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Calls fn(line, line_number) for each non-blank line with any trailing '\r' removed.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(std::string_view(line), number);
  }
}

bool optional_file(const std::filesystem::path& p) {
  return !p.empty() && std::filesystem::exists(p);
}

void warn(std::vector<std::string>* sink, std::string msg) {
  log::warn(msg);
  if (sink) sink->push_back(std::move(msg));
}

}  // namespace

SocialNetwork load_network(const NetworkPaths& paths, std::vector<std::string>* warnings) {
  if (!std::filesystem::exists(paths.edges))
    throw DataError("edge file not found: " + paths.edges.string());
  SocialNetwork net;
  const bool have_profiles = optional_file(paths.profiles);

  if (have_profiles) {
    for_each_line(paths.profiles, [&](std::string_view line, std::size_t n) {
      auto f = split_tabs(line);
      if (f.size() > 2 || f[0].empty())
        throw DataError(paths.profiles.string() + ": expected user_id<TAB>screen_name", n);
      NodeId u = net.add_user(f[0]);
      net.set_screen_name(u, f.size() == 2 ? std::string(f[1]) : std::string());
    });
  }

  std::size_t self_loops = 0, duplicates = 0;
  for_each_line(paths.edges, [&](std::string_view line, std::size_t n) {
    auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw DataError(paths.edges.string() + ": expected src_id<TAB>dst_id", n);
    NodeId ids[2];
    for (int k = 0; k < 2; ++k) {
      if (have_profiles && !net.find(f[k]))
        warn(warnings, "edge endpoint '" + std::string(f[k]) + "' (line " + std::to_string(n) +
                           ") has no profile; added as a new user");
      ids[k] = net.add_user(f[k]);
    }
    if (ids[0] == ids[1]) {
      ++self_loops;
    } else if (!net.add_edge(ids[0], ids[1])) {
      ++duplicates;
    }
  });
  if (self_loops) warn(warnings, "dropped " + std::to_string(self_loops) + " self-loop(s)");
  if (duplicates) log::info("merged " + std::to_string(duplicates) + " duplicate edge line(s)");

  if (optional_file(paths.contents)) {
    for_each_line(paths.contents, [&](std::string_view line, std::size_t n) {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(paths.contents.string() + ": " + e.what(), n);
      }
      if (!obj.is_object() || !obj.contains("user") || !obj["user"].is_string() ||
          !obj.contains("tokens") || !obj["tokens"].is_array())
        throw DataError(paths.contents.string() + ": expected {\"user\": str, \"tokens\": [str]}",
                        n);
      NodeId u = net.add_user(obj["user"].get<std::string>());
      Document doc = net.document(u);
      for (const auto& t : obj["tokens"]) {
        if (!t.is_string()) throw DataError(paths.contents.string() + ": non-string token", n);
        doc.push_back(t.get<std::string>());
      }
      net.set_document(u, std::move(doc));
    });
  }
  return net;
}

void save_network(const SocialNetwork& net, const NetworkPaths& paths) {
  {
    std::ofstream out(paths.edges, std::ios::trunc);
    if (!out) throw DataError("cannot write " + paths.edges.string());
    for (auto [s, d] : net.edges()) out << net.user(s) << '\t' << net.user(d) << '\n';
  }
  if (!paths.profiles.empty()) {
    std::ofstream out(paths.profiles, std::ios::trunc);
    if (!out) throw DataError("cannot write " + paths.profiles.string());
    for (NodeId u = 0; u < net.size(); ++u) out << net.user(u) << '\t' << net.screen_name(u) << '\n';
  }
  if (!paths.contents.empty()) {
    std::ofstream out(paths.contents, std::ios::trunc);
    if (!out) throw DataError("cannot write " + paths.contents.string());
    for (NodeId u = 0; u < net.size(); ++u) {
      if (net.document(u).empty()) continue;
      nlohmann::json obj{{"user", net.user(u)}, {"tokens", net.document(u)}};
      out << obj.dump() << '\n';
    }
  }
}

// ------------------------------------------------------------------ anchors

AnchorSet::AnchorSet(std::vector<AnchorLink> links) : links_(std::move(links)) {
  std::unordered_set<NodeId> src, tgt;
  for (const auto& l : links_) {
    if (!src.insert(l.source).second || !tgt.insert(l.target).second)
      throw DataError("anchor links are not one-to-one");
  }
}

std::vector<AnchorLink> AnchorSet::with_split(Split s) const {
  std::vector<AnchorLink> out;
  for (const auto& l : links_)
    if (l.split == s) out.push_back(l);
  return out;
}

std::size_t AnchorSet::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(links_.begin(), links_.end(), [s](const AnchorLink& l) { return l.split == s; }));
}

void AnchorSet::validate(std::size_t n_source, std::size_t n_target) const {
  for (const auto& l : links_)
    if (l.source >= n_source || l.target >= n_target)
      throw DataError("anchor link references a missing user");
}

AnchorSet load_anchors(const std::filesystem::path& path, const SocialNetwork& source,
                       const SocialNetwork& target) {
  std::vector<AnchorLink> links;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    auto f = split_tabs(line);
    if (f.size() != 2) throw DataError(path.string() + ": expected source_id<TAB>target_id", n);
    auto s = source.find(f[0]);
    auto t = target.find(f[1]);
    if (!s || !t) throw DataError(path.string() + ": anchor references unknown user", n);
    links.push_back({*s, *t, Split::unassigned});
  });
  return AnchorSet(std::move(links));
}

void save_anchors(const std::filesystem::path& path, const std::vector<AnchorLink>& links,
                  const SocialNetwork& source, const SocialNetwork& target) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : links) out << source.user(l.source) << '\t' << target.user(l.target) << '\n';
}

AnchorSet split_anchors(const AnchorSet& anchors, double eta, std::uint64_t seed) {
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("training ratio eta must lie in (0, 1)");
  std::vector<AnchorLink> links = anchors.links();
  Rng rng(seed);
  std::shuffle(links.begin(), links.end(), rng);
  // ceil(eta * n), tolerant of products like 0.3 * 10 landing just above an integer.
  const auto n_train = static_cast<std::size_t>(
      std::ceil(eta * static_cast<double>(links.size()) - 1e-9));
  for (std::size_t k = 0; k < links.size(); ++k)
    links[k].split = k < n_train ? Split::train : Split::test;
  return AnchorSet(std::move(links));
}

// ---------------------------------------------------------------- generator

void SynthConfig::validate() const {
  if (n_users == 0) throw ConfigError("synthetic config: n_users must be positive");
  for (auto [name, p] : {std::pair{"edge_keep_prob", edge_keep_prob},
                         {"name_noise", name_noise},
                         {"name_drop_prob", name_drop_prob},
                         {"content_drift", content_drift},
                         {"reciprocity", reciprocity}}) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ConfigError(std::string("synthetic config: ") + name + " must lie in [0, 1]");
  }
  if (vocab_size == 0 || topics == 0) throw ConfigError("synthetic config: empty vocabulary");
  if (name_stems == 0) throw ConfigError("synthetic config: name_stems must be positive");
}

namespace {

constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";

char random_char(Rng& rng) { return kAlphabet[uniform_index(rng, kAlphabet.size())]; }

std::string perturb_name(const std::string& name, double noise, Rng& rng) {
  std::string out;
  for (char ch : name) {
    const double r = uniform01(rng);
    if (r < noise / 3.0) {
      out.push_back(random_char(rng));  // substitute
    } else if (r < 2.0 * noise / 3.0) {
      out.push_back(ch);  // insert after
      out.push_back(random_char(rng));
    } else if (r < noise) {
      // delete
    } else {
      out.push_back(ch);
    }
  }
  return out;
}

std::vector<double> dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) total += (x = gamma(rng));
  if (total <= 0.0) {
    w.assign(n, 0.0);
    w[uniform_index(rng, n)] = 1.0;
    return w;
  }
  for (auto& x : w) x /= total;
  return w;
}

std::size_t draw(const std::vector<double>& cumulative, Rng& rng) {
  const double u = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

std::vector<double> cumsum(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  std::partial_sum(w.begin(), w.end(), c.begin());
  return c;
}

}  // namespace

std::size_t count_shared_edges(const SocialNetwork& source, const SocialNetwork& target,
                               const AnchorSet& anchors) {
  std::unordered_map<NodeId, NodeId> to_target;
  for (const auto& l : anchors.links()) to_target.emplace(l.source, l.target);
  std::size_t shared = 0;
  for (auto [s, d] : source.edges()) {
    auto a = to_target.find(s), b = to_target.find(d);
    if (a != to_target.end() && b != to_target.end() && target.has_edge(a->second, b->second))
      ++shared;
  }
  return shared;
}

SyntheticPair generate_pair(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_users;
  Rng rng(cfg.seed);

  // Directed preferential attachment: node t follows nodes chosen with
  // probability proportional to in-degree + 1; followed nodes may follow back.
  std::vector<std::pair<NodeId, NodeId>> base;
  std::vector<NodeId> attach_pool;  // node k appears in_degree(k) + 1 times
  for (NodeId t = 0; t < n; ++t) {
    const std::size_t want = std::min<std::size_t>(cfg.attach_edges, t);
    std::vector<NodeId> chosen;
    while (chosen.size() < want) {
      NodeId c = attach_pool[uniform_index(rng, attach_pool.size())];
      if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
    }
    for (NodeId c : chosen) {
      base.emplace_back(t, c);
      attach_pool.push_back(c);
      if (uniform01(rng) < cfg.reciprocity) {
        base.emplace_back(c, t);
        attach_pool.push_back(t);
      }
    }
    attach_pool.push_back(t);
  }

  // Person p is source node p and target node perm[p].
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  SyntheticPair out;
  out.base_edges = base.size();
  for (NodeId p = 0; p < n; ++p) out.source.add_user("s" + std::to_string(p));
  for (NodeId q = 0; q < n; ++q) out.target.add_user("t" + std::to_string(q));

  for (auto [a, b] : base) {
    if (uniform01(rng) < cfg.edge_keep_prob) out.source.add_edge(a, b);
    if (uniform01(rng) < cfg.edge_keep_prob) out.target.add_edge(perm[a], perm[b]);
  }

  // Names: a shared stem pool so unrelated users collide, plus an optional numeric suffix.
  std::vector<std::string> stems(cfg.name_stems);
  for (auto& s : stems) {
    const std::size_t len = 4 + uniform_index(rng, 5);
    for (std::size_t k = 0; k < len; ++k) s.push_back(kAlphabet[uniform_index(rng, 26)]);
  }
  for (NodeId p = 0; p < n; ++p) {
    std::string name = stems[uniform_index(rng, stems.size())];
    if (uniform01(rng) < 0.5) {
      const std::size_t digits = 1 + uniform_index(rng, 2);
      for (std::size_t k = 0; k < digits; ++k) name.push_back(kAlphabet[26 + uniform_index(rng, 10)]);
    }
    std::string target_name = perturb_name(name, cfg.name_noise, rng);
    if (uniform01(rng) < cfg.name_drop_prob) name.clear();
    if (uniform01(rng) < cfg.name_drop_prob) target_name.clear();
    out.source.set_screen_name(p, std::move(name));
    out.target.set_screen_name(perm[p], std::move(target_name));
  }

  // Topics: each concentrates on a random slice of the vocabulary.
  const std::size_t words_per_topic = std::max<std::size_t>(1, 2 * cfg.vocab_size / cfg.topics);
  std::vector<std::vector<std::size_t>> topic_words(cfg.topics);
  std::vector<std::vector<double>> topic_cdf(cfg.topics);
  for (std::size_t k = 0; k < cfg.topics; ++k) {
    for (std::size_t w = 0; w < words_per_topic; ++w)
      topic_words[k].push_back(uniform_index(rng, cfg.vocab_size));
    topic_cdf[k] = cumsum(dirichlet(words_per_topic, 1.0, rng));
  }
  auto sample_token = [&](const std::vector<double>& mixture_cdf) {
    const std::size_t k = draw(mixture_cdf, rng);
    return "w" + std::to_string(topic_words[k][draw(topic_cdf[k], rng)]);
  };

  // Each target token copies the source token unless it drifts to a noise mixture.
  for (NodeId p = 0; p < n; ++p) {
    auto mix = cumsum(dirichlet(cfg.topics, 0.2, rng));
    auto noise_mix = cumsum(dirichlet(cfg.topics, 0.2, rng));
    Document src_doc, tgt_doc;
    for (std::size_t k = 0; k < cfg.doc_length; ++k) {
      src_doc.push_back(sample_token(mix));
      tgt_doc.push_back(uniform01(rng) < cfg.content_drift ? sample_token(noise_mix)
                                                           : src_doc.back());
    }
    out.source.set_document(p, std::move(src_doc));
    out.target.set_document(perm[p], std::move(tgt_doc));
  }

  std::vector<AnchorLink> links;
  for (NodeId p = 0; p < n; ++p) links.push_back({p, perm[p], Split::unassigned});
  out.anchors = AnchorSet(std::move(links));
  out.shared_edges = count_shared_edges(out.source, out.target, out.anchors);
  return out;
}

}  // namespace infune
