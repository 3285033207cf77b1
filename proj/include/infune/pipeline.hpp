#pragma once

// Stage commands over a run directory:
//
//   <workdir>/run-<data hash>/
//     data/                 source/, target/, anchors.tsv
//     prepare-<hash>/       one cache file per feature ground
//     train-<hash>/         split, fusion checkpoint, embeddings, loss log
//     enhance-<hash>/       candidate lists, neighborhood checkpoint, loss log
//     eval-<hash>/          results.csv, detail.csv, report.json
//     grid-<hash>/          results.csv
//
// Every stage directory carries a manifest.txt with the stage hash, the full
// config hash and the complete configuration. A stage whose manifest matches
// is skipped.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "infune/config.hpp"

namespace infune {

/// Failure inside a pipeline stage; what() is prefixed with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct RunPaths {
  std::filesystem::path root, data, prepare, train, enhance, eval, grid;
};

RunPaths run_paths(const RunConfig& cfg);

struct StageOutcome {
  std::filesystem::path dir;
  bool cached = false;
  std::vector<std::string> files;  // relative to dir, manifest excluded
};

StageOutcome cmd_generate(const RunConfig& cfg);
StageOutcome cmd_prepare(const RunConfig& cfg);
StageOutcome cmd_train(const RunConfig& cfg);
StageOutcome cmd_enhance(const RunConfig& cfg);
StageOutcome cmd_eval(const RunConfig& cfg);
StageOutcome cmd_grid(const RunConfig& cfg);

/// Runs the command for `stage` (runtime is rejected).
StageOutcome run_stage(Stage stage, const RunConfig& cfg);

/// Loaders for stage outputs, shared with tests.
PairedData load_paired_data(const std::filesystem::path& data_dir);
FeatureGrounds load_feature_grounds(const std::filesystem::path& prepare_dir);

}  // namespace infune
