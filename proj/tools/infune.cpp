// infune: command-line driver for the identity-linkage pipeline.
//
//   infune generate --config run.cfg
//   infune train --set dim=64 --set epochs=20
//   infune grid --workdir runs --threads 4

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infune/config.hpp"
#include "infune/error.hpp"
#include "infune/log.hpp"
#include "infune/pipeline.hpp"

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> assignments;
  std::string workdir;
  std::size_t threads = 0;
  std::string log_level;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config_file, "key=value configuration file");
  cmd->add_option("-s,--set", o.assignments, "override one key (key=value); repeatable");
  cmd->add_option("-w,--workdir", o.workdir, "root directory for run outputs");
  cmd->add_option("-j,--threads", o.threads, "maximum worker threads");
  cmd->add_option("--log", o.log_level, "quiet | warn | info");
  cmd->add_flag("--print-config", o.print_config, "print the effective configuration and exit");
}

infune::RunConfig resolve(const Options& o) {
  infune::RunConfig cfg;
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  for (const auto& a : o.assignments) cfg.assign(a);
  if (!o.workdir.empty()) cfg.workdir = o.workdir;
  if (o.threads > 0) cfg.threads = o.threads;
  if (!o.log_level.empty()) cfg.log_level = o.log_level;
  return cfg;
}

void apply_log_level(const std::string& level) {
  using infune::log::Level;
  if (level == "quiet") infune::log::level() = Level::quiet;
  else if (level == "info") infune::log::level() = Level::info;
  else infune::log::level() = Level::warn;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"User identity linkage with information fusion and neighborhood enhancement"};
  app.require_subcommand(1);
  Options opts;

  const std::vector<std::pair<infune::Stage, std::string>> commands = {
      {infune::Stage::data, "generate a synthetic pair or import real data"},
      {infune::Stage::prepare, "build the ground-truth similarity caches"},
      {infune::Stage::train, "split anchors and train the information fusion component"},
      {infune::Stage::enhance, "train the neighborhood enhancement component"},
      {infune::Stage::eval, "rank test anchors and report hit-precision"},
      {infune::Stage::grid, "run the variant x eta x seed x lambda experiment grid"},
  };
  std::vector<std::pair<CLI::App*, infune::Stage>> subs;
  for (const auto& [stage, help] : commands) {
    CLI::App* cmd = app.add_subcommand(std::string(infune::to_string(stage)), help);
    add_common(cmd, opts);
    subs.emplace_back(cmd, stage);
  }

  CLI11_PARSE(app, argc, argv);

  infune::Stage stage = infune::Stage::data;
  for (const auto& [cmd, s] : subs)
    if (cmd->parsed()) stage = s;
  const std::string tag(infune::to_string(stage));

  try {
    const infune::RunConfig cfg = resolve(opts);
    apply_log_level(cfg.log_level);
    if (opts.print_config) {
      std::cout << cfg.serialize({infune::Stage::data, infune::Stage::prepare, infune::Stage::train,
                                  infune::Stage::enhance, infune::Stage::eval, infune::Stage::grid,
                                  infune::Stage::runtime});
      return 0;
    }
    const infune::StageOutcome out = infune::run_stage(stage, cfg);
    std::cout << out.dir.string() << (out.cached ? " (cached)" : "") << '\n';
    return 0;
  } catch (const infune::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << tag << ": " << e.what() << '\n';
  }
  return 1;
}
