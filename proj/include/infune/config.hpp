#pragma once

// Flat key=value run configuration. Every tunable of the pipeline is a key;
// precedence is command line > config file > built-in defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "infune/dataset.hpp"
#include "infune/evaluation.hpp"
#include "infune/fusion.hpp"
#include "infune/neighborhood.hpp"

namespace infune {

/// Pipeline stage a key belongs to. A stage's hash covers its own keys and
/// those of every stage upstream of it; runtime keys are never hashed.
enum class Stage { data, prepare, train, enhance, eval, grid, runtime };

std::string_view to_string(Stage s);

struct RunConfig {
  // Real data: directories holding edges.tsv / profiles.tsv / contents.jsonl
  // plus an anchors file. Empty means "generate a synthetic pair".
  std::string source_dir, target_dir, anchors_file;
  SynthConfig synth;

  TrainConfig train;  // theta lives here; features are taken from `variant`
  std::string variant = "spc";
  double eta = 0.5;
  std::uint64_t seed = 1;

  NeighborhoodConfig neighborhood;

  double lambda = 0.2;
  std::size_t k = 30;
  bool bidirectional = false;

  std::string grid_variants = "s,p,c,sp,sc,pc,spc";
  std::string grid_etas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::string grid_lambdas = "0,0.2";
  std::string grid_seeds = "1";

  std::filesystem::path workdir = "runs";
  std::size_t threads = 1;
  std::string log_level = "warn";

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  /// "key=value" assignment as given on the command line.
  void assign(std::string_view assignment);
  /// Lines of key=value; blank lines and lines starting with '#' are skipped.
  void load_file(const std::filesystem::path& path);

  static const std::vector<std::string>& keys();
  static Stage stage_of(std::string_view key);

  /// Sorted "key=value\n" lines for every key in the given stages.
  std::string serialize(std::initializer_list<Stage> stages) const;
  /// All hashed keys.
  std::string serialize() const;
  std::uint64_t hash() const;
  /// Hash of `stage` and its upstream stages.
  std::uint64_t stage_hash(Stage stage) const;

  ExperimentConfig experiment() const;
  GridSpec grid() const;

  void validate() const;
};

std::string hex64(std::uint64_t v);

/// Comma-separated list helpers used by the grid keys.
std::vector<std::string> split_list(std::string_view s);
std::vector<double> parse_reals(std::string_view s);
std::vector<std::uint64_t> parse_seeds(std::string_view s);

}  // namespace infune
