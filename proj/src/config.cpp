#include "infune/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "infune/error.hpp"
#include "infune/rng.hpp"

namespace infune {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::data: return "generate";
    case Stage::prepare: return "prepare";
    case Stage::train: return "train";
    case Stage::enhance: return "enhance";
    case Stage::eval: return "eval";
    case Stage::grid: return "grid";
    case Stage::runtime: return "runtime";
  }
  return "?";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, end);
  return std::string(16 - s.size(), '0') + s;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string format(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
std::string format(T v) {
  return std::to_string(v);
}

struct Entry {
  Stage stage;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Entry number(Stage stage, T RunConfig::*outer) {
  return {stage,
          [outer](RunConfig& c, std::string_view k, std::string_view v) { c.*outer = parse_number<T>(k, v); },
          [outer](const RunConfig& c) { return format(c.*outer); }};
}

template <typename Sub, typename T>
Entry number(Stage stage, Sub RunConfig::*sub, T Sub::*field) {
  return {stage,
          [sub, field](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*sub).*field = parse_number<T>(k, v);
          },
          [sub, field](const RunConfig& c) { return format((c.*sub).*field); }};
}

Entry text(Stage stage, std::string RunConfig::*field) {
  return {stage, [field](RunConfig& c, std::string_view, std::string_view v) { c.*field = trim(v); },
          [field](const RunConfig& c) { return c.*field; }};
}

const std::map<std::string, Entry, std::less<>>& table() {
  using R = RunConfig;
  static const std::map<std::string, Entry, std::less<>> t = [] {
    std::map<std::string, Entry, std::less<>> m;
    m.emplace("data.source", text(Stage::data, &R::source_dir));
    m.emplace("data.target", text(Stage::data, &R::target_dir));
    m.emplace("data.anchors", text(Stage::data, &R::anchors_file));
    m.emplace("synth.n_users", number(Stage::data, &R::synth, &SynthConfig::n_users));
    m.emplace("synth.attach_edges", number(Stage::data, &R::synth, &SynthConfig::attach_edges));
    m.emplace("synth.reciprocity", number(Stage::data, &R::synth, &SynthConfig::reciprocity));
    m.emplace("synth.edge_keep_prob", number(Stage::data, &R::synth, &SynthConfig::edge_keep_prob));
    m.emplace("synth.name_noise", number(Stage::data, &R::synth, &SynthConfig::name_noise));
    m.emplace("synth.name_drop_prob", number(Stage::data, &R::synth, &SynthConfig::name_drop_prob));
    m.emplace("synth.name_stems", number(Stage::data, &R::synth, &SynthConfig::name_stems));
    m.emplace("synth.vocab_size", number(Stage::data, &R::synth, &SynthConfig::vocab_size));
    m.emplace("synth.topics", number(Stage::data, &R::synth, &SynthConfig::topics));
    m.emplace("synth.doc_length", number(Stage::data, &R::synth, &SynthConfig::doc_length));
    m.emplace("synth.content_drift", number(Stage::data, &R::synth, &SynthConfig::content_drift));
    m.emplace("synth.seed", number(Stage::data, &R::synth, &SynthConfig::seed));

    m.emplace("theta", number(Stage::prepare, &R::train, &TrainConfig::theta));

    m.emplace("dim", number(Stage::train, &R::train, &TrainConfig::dim));
    m.emplace("hidden", number(Stage::train, &R::train, &TrainConfig::hidden));
    m.emplace("negatives", number(Stage::train, &R::train, &TrainConfig::negatives));
    m.emplace("lr", number(Stage::train, &R::train, &TrainConfig::lr));
    m.emplace("epochs", number(Stage::train, &R::train, &TrainConfig::epochs));
    m.emplace("batch", number(Stage::train, &R::train, &TrainConfig::batch));
    m.emplace("stop_window", number(Stage::train, &R::train, &TrainConfig::stop_window));
    m.emplace("stop_tolerance", number(Stage::train, &R::train, &TrainConfig::stop_tolerance));
    m.emplace("embed_init_std", number(Stage::train, &R::train, &TrainConfig::embed_init_std));
    m.emplace("weight.label", number(Stage::train, &R::train, &TrainConfig::weight_label));
    m.emplace("weight.structure", number(Stage::train, &R::train, &TrainConfig::weight_structure));
    m.emplace("weight.profile", number(Stage::train, &R::train, &TrainConfig::weight_profile));
    m.emplace("weight.content", number(Stage::train, &R::train, &TrainConfig::weight_content));
    m.emplace("variant", text(Stage::train, &R::variant));
    m.emplace("eta", number(Stage::train, &R::eta));
    m.emplace("seed", number(Stage::train, &R::seed));

    m.emplace("tau", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::tau));
    m.emplace("candidates", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::candidates));
    m.emplace("nei.hidden", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::hidden));
    m.emplace("nei.negatives", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::negatives));
    m.emplace("nei.lr", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::lr));
    m.emplace("nei.epochs", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::epochs));
    m.emplace("nei.batch", number(Stage::enhance, &R::neighborhood, &NeighborhoodConfig::batch));

    m.emplace("lambda", number(Stage::eval, &R::lambda));
    m.emplace("k", number(Stage::eval, &R::k));
    m.emplace("bidirectional",
              Entry{Stage::eval,
                    [](R& c, std::string_view k, std::string_view v) { c.bidirectional = parse_bool(k, v); },
                    [](const R& c) { return std::string(c.bidirectional ? "true" : "false"); }});

    m.emplace("grid.variants", text(Stage::grid, &R::grid_variants));
    m.emplace("grid.etas", text(Stage::grid, &R::grid_etas));
    m.emplace("grid.lambdas", text(Stage::grid, &R::grid_lambdas));
    m.emplace("grid.seeds", text(Stage::grid, &R::grid_seeds));

    m.emplace("workdir", Entry{Stage::runtime,
                               [](R& c, std::string_view, std::string_view v) { c.workdir = trim(v); },
                               [](const R& c) { return c.workdir.string(); }});
    m.emplace("threads", number(Stage::runtime, &R::threads));
    m.emplace("log", text(Stage::runtime, &R::log_level));
    return m;
  }();
  return t;
}

const Entry& entry(std::string_view key) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  entry(key).set(*this, key, value);
}

std::string RunConfig::get(std::string_view key) const { return entry(key).get(*this); }

void RunConfig::assign(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      assign(t);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, e] : table()) out.push_back(name);
    return out;
  }();
  return k;
}

Stage RunConfig::stage_of(std::string_view key) { return entry(key).stage; }

std::string RunConfig::serialize(std::initializer_list<Stage> stages) const {
  std::string out;
  for (const auto& [name, e] : table())
    if (std::find(stages.begin(), stages.end(), e.stage) != stages.end())
      out += name + "=" + e.get(*this) + "\n";
  return out;
}

std::string RunConfig::serialize() const {
  return serialize({Stage::data, Stage::prepare, Stage::train, Stage::enhance, Stage::eval, Stage::grid});
}

std::uint64_t RunConfig::hash() const { return fnv1a64(serialize()); }

std::uint64_t RunConfig::stage_hash(Stage stage) const {
  switch (stage) {
    case Stage::data: return fnv1a64(serialize({Stage::data}));
    case Stage::prepare: return fnv1a64(serialize({Stage::data, Stage::prepare}));
    case Stage::train: return fnv1a64(serialize({Stage::data, Stage::prepare, Stage::train}));
    case Stage::enhance:
      return fnv1a64(serialize({Stage::data, Stage::prepare, Stage::train, Stage::enhance}));
    case Stage::eval:
      return fnv1a64(
          serialize({Stage::data, Stage::prepare, Stage::train, Stage::enhance, Stage::eval}));
    case Stage::grid:
    case Stage::runtime: return hash();
  }
  return hash();
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.train = train;
  e.train.features = FeatureSet::parse(variant);
  e.train.seed = seed;
  e.neighborhood = neighborhood;
  e.neighborhood.seed = seed;
  e.k = k;
  e.bidirectional = bidirectional;
  return e;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (begin <= s.size()) {
    auto end = s.find(',', begin);
    if (end == std::string_view::npos) end = s.size();
    std::string item = trim(s.substr(begin, end - begin));
    if (!item.empty()) out.push_back(std::move(item));
    begin = end + 1;
  }
  return out;
}

std::vector<double> parse_reals(std::string_view s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<double>("list", item));
  return out;
}

std::vector<std::uint64_t> parse_seeds(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<std::uint64_t>("list", item));
  return out;
}

GridSpec RunConfig::grid() const {
  GridSpec g;
  for (const auto& v : split_list(grid_variants)) g.variants.push_back(FeatureSet::parse(v));
  g.etas = parse_reals(grid_etas);
  g.lambdas = parse_reals(grid_lambdas);
  g.seeds = parse_seeds(grid_seeds);
  g.threads = threads;
  return g;
}

void RunConfig::validate() const {
  if (source_dir.empty() != target_dir.empty() || source_dir.empty() != anchors_file.empty())
    throw ConfigError("data.source, data.target and data.anchors must be set together");
  if (source_dir.empty()) synth.validate();
  train.validate();
  FeatureSet::parse(variant);
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
  neighborhood.validate();
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (k == 0) throw ConfigError("k must be >= 1");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (log_level != "quiet" && log_level != "warn" && log_level != "info")
    throw ConfigError("log must be quiet, warn or info");
  grid().validate();
}

}  // namespace infune
