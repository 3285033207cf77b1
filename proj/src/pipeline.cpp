#include "infune/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "infune/checkpoint.hpp"
#include "infune/error.hpp"
#include "infune/log.hpp"
#include "infune/rng.hpp"

namespace fs = std::filesystem;

namespace infune {

StageError::StageError(Stage stage, const std::string& what)
    : std::runtime_error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}

namespace {

constexpr const char* kManifest = "manifest.txt";

NetworkPaths network_files(const fs::path& dir) {
  return {dir / "edges.tsv", dir / "profiles.tsv", dir / "contents.jsonl"};
}

std::uint64_t file_digest(const fs::path& path, std::uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return h;
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str(), h);
}

// Real input files are fingerprinted by content so edits invalidate the run.
std::uint64_t input_digest(const RunConfig& cfg) {
  if (cfg.source_dir.empty()) return 0;
  std::uint64_t h = fnv1a64("inputs");
  for (const auto& dir : {fs::path(cfg.source_dir), fs::path(cfg.target_dir)}) {
    const NetworkPaths p = network_files(dir);
    for (const auto& f : {p.edges, p.profiles, p.contents}) h = file_digest(f, h);
  }
  return file_digest(cfg.anchors_file, h);
}

std::uint64_t stage_key(const RunConfig& cfg, Stage stage, std::uint64_t inputs) {
  return inputs == 0 ? cfg.stage_hash(stage) : mix64(cfg.stage_hash(stage) ^ inputs);
}

struct Manifest {
  std::string stage_hash;
  std::vector<std::string> files;
};

std::optional<Manifest> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) return std::nullopt;
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("stage_hash=", 0) == 0) m.stage_hash = line.substr(11);
    if (line.rfind("file=", 0) == 0) m.files.push_back(line.substr(5));
  }
  return m;
}

bool fresh(const fs::path& dir, const std::string& key) {
  const auto m = read_manifest(dir);
  if (!m || m->stage_hash != key) return false;
  for (const auto& f : m->files)
    if (!fs::exists(dir / f)) return false;
  return true;
}

void write_manifest(const fs::path& dir, Stage stage, const std::string& key, const RunConfig& cfg,
                    const std::vector<std::string>& files) {
  const fs::path tmp = dir / (std::string(kManifest) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << "stage=" << to_string(stage) << "\n"
        << "stage_hash=" << key << "\n"
        << "config_hash=" << hex64(cfg.hash()) << "\n"
        << "file_count=" << files.size() << "\n";
    for (const auto& f : files) out << "file=" << f << "\n";
    out << "# configuration\n" << cfg.serialize();
  }
  fs::rename(tmp, dir / kManifest);
}

void require(const fs::path& dir, Stage upstream, Stage current) {
  if (!fs::exists(dir / kManifest))
    throw StageError(current, "missing output of the " + std::string(to_string(upstream)) +
                                  " stage (" + dir.string() + "); run `infune " +
                                  std::string(to_string(upstream)) +
                                  "` with the same configuration first");
}

std::vector<std::string> listed(const fs::path& dir, std::initializer_list<const char*> names) {
  std::vector<std::string> out;
  for (const char* n : names)
    if (fs::exists(dir / n)) out.emplace_back(n);
  return out;
}

// Runs `body` unless `dir` already holds a matching manifest.
template <typename Body>
StageOutcome run_cached(const RunConfig& cfg, Stage stage, const fs::path& dir, Body&& body) {
  const std::string key = hex64(stage_key(cfg, stage, input_digest(cfg)));
  if (fresh(dir, key)) {
    log::info(std::string(to_string(stage)) + ": up to date in " + dir.string());
    return {dir, true, read_manifest(dir)->files};
  }
  try {
    fs::create_directories(dir);
    std::vector<std::string> files = body();
    write_manifest(dir, stage, key, cfg, files);
    log::info(std::string(to_string(stage)) + ": wrote " + dir.string());
    return {dir, false, std::move(files)};
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::vector<AnchorLink> tagged(const AnchorSet& set, Split split) {
  std::vector<AnchorLink> out = set.links();
  for (auto& l : out) l.split = split;
  return out;
}

AnchorSet load_split(const fs::path& train_dir, const PairedData& data) {
  std::vector<AnchorLink> links =
      tagged(load_anchors(train_dir / "train_anchors.tsv", data.source, data.target), Split::train);
  for (const auto& l : tagged(load_anchors(train_dir / "test_anchors.tsv", data.source, data.target),
                              Split::test))
    links.push_back(l);
  return AnchorSet(std::move(links));
}

NodeEmbeddings load_embeddings(const fs::path& train_dir, const PairedData& data) {
  return {import_embeddings(train_dir / "embeddings_source.tsv", data.source.users()),
          import_embeddings(train_dir / "embeddings_target.tsv", data.target.users())};
}

void write_report_json(const fs::path& path, const ScoreReport& report, const RunConfig& cfg,
                       const PairedData& data) {
  nlohmann::json j;
  j["variant"] = FeatureSet::parse(cfg.variant).name();
  j["eta"] = cfg.eta;
  j["lambda"] = report.lambda;
  j["seed"] = cfg.seed;
  j["k"] = report.k;
  j["config_hash"] = hex64(cfg.hash());
  j["hit_precision"] = report.hit_precision;
  if (report.reverse_hit_precision) j["reverse_hit_precision"] = *report.reverse_hit_precision;
  auto& users = j["users"] = nlohmann::json::array();
  for (const auto& u : report.users) {
    nlohmann::json ju;
    ju["source"] = data.source.user(u.source);
    ju["truth"] = data.target.user(u.truth);
    if (u.rank <= report.k) ju["hit_position"] = u.rank;
    else ju["hit_position"] = "miss";
    auto& top = ju["top"] = nlohmann::json::array();
    for (const auto& c : u.top)
      top.push_back({{"target", data.target.user(c.target)},
                     {"r_node", c.r_node},
                     {"r_nei", c.r_nei},
                     {"r_total", c.r_total}});
    users.push_back(std::move(ju));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

RunPaths run_paths(const RunConfig& cfg) {
  const std::uint64_t inputs = input_digest(cfg);
  RunPaths p;
  p.root = cfg.workdir / ("run-" + hex64(stage_key(cfg, Stage::data, inputs)));
  p.data = p.root / "data";
  auto sub = [&](Stage s) {
    return p.root / (std::string(to_string(s)) + "-" + hex64(stage_key(cfg, s, inputs)));
  };
  p.prepare = sub(Stage::prepare);
  p.train = sub(Stage::train);
  p.enhance = sub(Stage::enhance);
  p.eval = sub(Stage::eval);
  p.grid = sub(Stage::grid);
  return p;
}

PairedData load_paired_data(const fs::path& dir) {
  PairedData d;
  d.source = load_network(network_files(dir / "source"));
  d.target = load_network(network_files(dir / "target"));
  d.anchors = load_anchors(dir / "anchors.tsv", d.source, d.target);
  return d;
}

FeatureGrounds load_feature_grounds(const fs::path& dir) {
  return {SimilarityGround::load(dir / "structure_source.ground"),
          SimilarityGround::load(dir / "structure_target.ground"),
          SimilarityGround::load(dir / "profile.ground"), SimilarityGround::load(dir / "content.ground")};
}

StageOutcome cmd_generate(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  return run_cached(cfg, Stage::data, paths.data, [&] {
    cfg.validate();
    PairedData d;
    if (cfg.source_dir.empty()) {
      SyntheticPair pair = generate_pair(cfg.synth);
      d = {std::move(pair.source), std::move(pair.target), std::move(pair.anchors)};
    } else {
      std::vector<std::string> warnings;
      d.source = load_network(network_files(cfg.source_dir), &warnings);
      d.target = load_network(network_files(cfg.target_dir), &warnings);
      d.anchors = load_anchors(cfg.anchors_file, d.source, d.target);
      for (const auto& w : warnings) log::warn(w);
    }
    fs::create_directories(paths.data / "source");
    fs::create_directories(paths.data / "target");
    save_network(d.source, network_files(paths.data / "source"));
    save_network(d.target, network_files(paths.data / "target"));
    save_anchors(paths.data / "anchors.tsv", d.anchors.links(), d.source, d.target);
    return listed(paths.data, {"source/edges.tsv", "source/profiles.tsv", "source/contents.jsonl",
                               "target/edges.tsv", "target/profiles.tsv", "target/contents.jsonl",
                               "anchors.tsv"});
  });
}

StageOutcome cmd_prepare(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  require(paths.data, Stage::data, Stage::prepare);
  return run_cached(cfg, Stage::prepare, paths.prepare, [&] {
    cfg.validate();
    const PairedData d = load_paired_data(paths.data);
    const FeatureGrounds g = build_feature_grounds(d, cfg.train.theta);
    const std::string key = hex64(cfg.stage_hash(Stage::prepare));
    g.structure_source.save(paths.prepare / "structure_source.ground", key);
    g.structure_target.save(paths.prepare / "structure_target.ground", key);
    g.profile.save(paths.prepare / "profile.ground", key);
    g.content.save(paths.prepare / "content.ground", key);
    log::info("prepare: positives structure=" + std::to_string(g.structure_source.positive_count()) +
              "/" + std::to_string(g.structure_target.positive_count()) +
              " profile=" + std::to_string(g.profile.positive_count()) +
              " content=" + std::to_string(g.content.positive_count()));
    return std::vector<std::string>{"structure_source.ground", "structure_target.ground",
                                    "profile.ground", "content.ground"};
  });
}

StageOutcome cmd_train(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  require(paths.data, Stage::data, Stage::train);
  require(paths.prepare, Stage::prepare, Stage::train);
  return run_cached(cfg, Stage::train, paths.train, [&] {
    cfg.validate();
    const PairedData d = load_paired_data(paths.data);
    const FeatureGrounds g = load_feature_grounds(paths.prepare);
    const AnchorSet split = split_anchors(d.anchors, cfg.eta, sub_seed(cfg.seed, "split"));
    const SimilarityGround label =
        label_ground(split, d.source.size(), d.target.size(), cfg.train.theta);
    save_anchors(paths.train / "train_anchors.tsv", split.with_split(Split::train), d.source, d.target);
    save_anchors(paths.train / "test_anchors.tsv", split.with_split(Split::test), d.source, d.target);

    const ExperimentConfig ec = cfg.experiment();
    FusionGrounds fg{&g.structure_source, &g.structure_target, &g.profile, &g.content, &label};
    const FusionResult r = train_fusion(fg, ec.train);
    save_checkpoint(paths.train / "fusion.ckpt", r.bank.params(), cfg.serialize());
    export_embeddings(paths.train / "embeddings_source.tsv", r.embeddings.source, d.source.users());
    export_embeddings(paths.train / "embeddings_target.tsv", r.embeddings.target, d.target.users());
    write_loss_log(paths.train / "loss.csv", r.log);
    log::info("train: " + std::to_string(r.epochs_run) + " epochs");
    return std::vector<std::string>{"train_anchors.tsv",     "test_anchors.tsv",
                                    "fusion.ckpt",           "embeddings_source.tsv",
                                    "embeddings_target.tsv", "loss.csv"};
  });
}

StageOutcome cmd_enhance(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  require(paths.data, Stage::data, Stage::enhance);
  require(paths.train, Stage::train, Stage::enhance);
  return run_cached(cfg, Stage::enhance, paths.enhance, [&] {
    cfg.validate();
    const PairedData d = load_paired_data(paths.data);
    const AnchorSet split = load_split(paths.train, d);
    const SimilarityGround label =
        label_ground(split, d.source.size(), d.target.size(), cfg.train.theta);
    const NodeEmbeddings z = load_embeddings(paths.train, d);
    const Adjacency sa = build_adjacency(d.source), ta = build_adjacency(d.target);
    const ExperimentConfig ec = cfg.experiment();
    const NeighborhoodContext ctx(z, sa, ta, ec.neighborhood.tau);

    std::vector<NodeId> train_sources;
    for (const auto& l : split.with_split(Split::train)) train_sources.push_back(l.source);
    const CandidateIndex cands =
        CandidateIndex::build(ctx.scorer(), train_sources, ec.neighborhood.candidates);
    cands.save(paths.enhance / "candidates.tsv", d.source, d.target);
    const NeighborhoodModel model = train_neighborhood(label, ctx, cands, ec.neighborhood);
    save_checkpoint(paths.enhance / "neighborhood.ckpt", model.encoder.params(), cfg.serialize());
    write_loss_log(paths.enhance / "loss.csv", model.log);
    return std::vector<std::string>{"candidates.tsv", "neighborhood.ckpt", "loss.csv"};
  });
}

StageOutcome cmd_eval(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  require(paths.data, Stage::data, Stage::eval);
  require(paths.train, Stage::train, Stage::eval);
  const bool enhanced = cfg.lambda > 0.0;
  if (enhanced) require(paths.enhance, Stage::enhance, Stage::eval);
  return run_cached(cfg, Stage::eval, paths.eval, [&] {
    cfg.validate();
    const PairedData d = load_paired_data(paths.data);
    const AnchorSet split = load_split(paths.train, d);
    const std::vector<AnchorLink> test = split.with_split(Split::test);
    const NodeEmbeddings z = load_embeddings(paths.train, d);
    const NodeScorer node(z);
    const ExperimentConfig ec = cfg.experiment();

    ScoreCache cache;
    if (enhanced) {
      const Adjacency sa = build_adjacency(d.source), ta = build_adjacency(d.target);
      const NeighborhoodContext ctx(z, sa, ta, ec.neighborhood.tau);
      const NeighborhoodEncoder enc =
          NeighborhoodEncoder::from_params(load_checkpoint(paths.enhance / "neighborhood.ckpt").params);
      cache = score_test_anchors(test, node, &enc, &ctx, ec.neighborhood.candidates, ec.bidirectional);
    } else {
      cache = score_test_anchors(test, node, nullptr, nullptr, ec.neighborhood.candidates,
                                 ec.bidirectional);
    }
    const ScoreReport report = report_from_cache(cache, cfg.lambda, cfg.k);
    write_results_csv(paths.eval / "results.csv",
                      {{FeatureSet::parse(cfg.variant).name(), cfg.eta, cfg.lambda, cfg.seed,
                        report.hit_precision, report.users.size()}});
    write_run_detail(paths.eval / "detail.csv", report, d.source, d.target);
    write_report_json(paths.eval / "report.json", report, cfg, d);
    log::info("eval: hit-precision@" + std::to_string(cfg.k) + " = " +
              std::to_string(report.hit_precision));
    return std::vector<std::string>{"results.csv", "detail.csv", "report.json"};
  });
}

StageOutcome cmd_grid(const RunConfig& cfg) {
  const RunPaths paths = run_paths(cfg);
  require(paths.data, Stage::data, Stage::grid);
  require(paths.prepare, Stage::prepare, Stage::grid);
  return run_cached(cfg, Stage::grid, paths.grid, [&] {
    cfg.validate();
    const PairedData d = load_paired_data(paths.data);
    const FeatureGrounds g = load_feature_grounds(paths.prepare);
    const auto rows = run_experiment_grid(d, g, cfg.grid(), cfg.experiment());
    write_results_csv(paths.grid / "results.csv", rows);
    return std::vector<std::string>{"results.csv"};
  });
}

StageOutcome run_stage(Stage stage, const RunConfig& cfg) {
  switch (stage) {
    case Stage::data: return cmd_generate(cfg);
    case Stage::prepare: return cmd_prepare(cfg);
    case Stage::train: return cmd_train(cfg);
    case Stage::enhance: return cmd_enhance(cfg);
    case Stage::eval: return cmd_eval(cfg);
    case Stage::grid: return cmd_grid(cfg);
    case Stage::runtime: break;
  }
  throw ContractError("runtime is not a pipeline stage");
}

}  // namespace infune
