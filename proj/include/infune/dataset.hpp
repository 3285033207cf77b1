#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace infune {

using NodeId = std::uint32_t;
using Document = std::vector<std::string>;  // bag of tokens, order irrelevant

/// One platform: users, directed follower edges, screen names, documents.
/// Internal node id == position in users().
class SocialNetwork {
 public:
  /// Returns the id of `user`, appending it if new.
  NodeId add_user(std::string_view user);
  std::optional<NodeId> find(std::string_view user) const;

  /// Adds a directed edge; returns false for self-loops and duplicates.
  bool add_edge(NodeId src, NodeId dst);

  void set_screen_name(NodeId u, std::string name) { screen_names_.at(u) = std::move(name); }
  void set_document(NodeId u, Document doc) { documents_.at(u) = std::move(doc); }

  std::size_t size() const { return users_.size(); }
  const std::vector<std::string>& users() const { return users_; }
  const std::string& user(NodeId u) const { return users_.at(u); }
  /// Sorted by (src, dst), unique, no self-loops.
  std::vector<std::pair<NodeId, NodeId>> edges() const;
  std::size_t edge_count() const { return edges_.size(); }
  bool has_edge(NodeId src, NodeId dst) const;
  const std::string& screen_name(NodeId u) const { return screen_names_.at(u); }
  const Document& document(NodeId u) const { return documents_.at(u); }

  bool operator==(const SocialNetwork& other) const;

 private:
  static std::uint64_t key(NodeId a, NodeId b) { return (std::uint64_t{a} << 32) | b; }

  std::vector<std::string> users_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::pair<NodeId, NodeId>> edges_;  // insertion order
  std::unordered_set<std::uint64_t> edge_keys_;
  std::vector<std::string> screen_names_;
  std::vector<Document> documents_;
};

/// Out-, in- and undirected neighbor lists, each sorted ascending.
struct Adjacency {
  std::vector<std::vector<NodeId>> out, in, undirected;
};
Adjacency build_adjacency(const SocialNetwork& net);

struct NetworkPaths {
  std::filesystem::path edges;
  std::filesystem::path profiles;  // optional: empty or missing file is skipped
  std::filesystem::path contents;  // optional
};

/// Reads edges.tsv / profiles.tsv / contents.jsonl. Users present in any file
/// are unioned; profile order (if given) fixes the internal ids. Self-loops and
/// duplicate edges are dropped; missing names become "". Throws DataError on a
/// malformed line.
SocialNetwork load_network(const NetworkPaths& paths, std::vector<std::string>* warnings = nullptr);
void save_network(const SocialNetwork& net, const NetworkPaths& paths);

enum class Split : std::uint8_t { unassigned, train, test };

struct AnchorLink {
  NodeId source = 0;
  NodeId target = 0;
  Split split = Split::unassigned;
  bool operator==(const AnchorLink&) const = default;
};

/// Known correspondences between a source and a target network; one-to-one.
class AnchorSet {
 public:
  AnchorSet() = default;
  explicit AnchorSet(std::vector<AnchorLink> links);  // validates one-to-one

  const std::vector<AnchorLink>& links() const { return links_; }
  std::size_t size() const { return links_.size(); }
  std::vector<AnchorLink> with_split(Split s) const;
  std::size_t count(Split s) const;
  void validate(std::size_t n_source, std::size_t n_target) const;

  bool operator==(const AnchorSet&) const = default;

 private:
  std::vector<AnchorLink> links_;
};

/// anchors.tsv: source_id<TAB>target_id
AnchorSet load_anchors(const std::filesystem::path& path, const SocialNetwork& source,
                       const SocialNetwork& target);
void save_anchors(const std::filesystem::path& path, const std::vector<AnchorLink>& links,
                  const SocialNetwork& source, const SocialNetwork& target);

/// Shuffles under `seed` and tags ceil(eta * n) pairs train, the rest test.
AnchorSet split_anchors(const AnchorSet& anchors, double eta, std::uint64_t seed);

struct SynthConfig {
  std::size_t n_users = 500;
  std::size_t attach_edges = 4;      // out-edges per new node (preferential attachment)
  double reciprocity = 0.3;          // chance a new follow is returned
  double edge_keep_prob = 0.8;
  double name_noise = 0.2;           // per-character edit probability (target view)
  double name_drop_prob = 0.1;       // per view
  std::size_t name_stems = 120;      // pool of shared name stems; collisions are intended
  std::size_t vocab_size = 2000;
  std::size_t topics = 20;
  std::size_t doc_length = 40;
  double content_drift = 0.3;        // target mixture interpolated toward noise
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticPair {
  SocialNetwork source;
  SocialNetwork target;
  AnchorSet anchors;  // every user anchored
  std::size_t base_edges = 0;
  /// Source edges whose anchored endpoints are also connected in the target.
  std::size_t shared_edges = 0;
};

SyntheticPair generate_pair(const SynthConfig& cfg);

std::size_t count_shared_edges(const SocialNetwork& source, const SocialNetwork& target,
                               const AnchorSet& anchors);

}  // namespace infune
