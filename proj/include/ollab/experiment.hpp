#pragma once

// Config-driven experiment runner. A config file (INI-style sections or the
// same structure as JSON) describes the dataset, stream regime, model, and
// training block; run_experiment executes every configured strategy over
// every seed, writes one artifact directory per run plus a summary, and
// compare_runs reports strategy deltas against configured gates.
//
// The frozen encoder weights and the class descriptors are part of the
// generated world: both derive from the dataset seed, so every run seed
// trains the same pretrained-model analog on the same classes and only the
// stream composition varies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ollab/artifacts.hpp"
#include "ollab/datagen.hpp"
#include "ollab/errors.hpp"
#include "ollab/io.hpp"
#include "ollab/model.hpp"
#include "ollab/streams.hpp"
#include "ollab/trainer.hpp"

namespace ollab {

// Acceptance gate for the symmetric-vs-asymmetric comparison, fixed from the
// pilot run on the reference config (see README). The pilot mean A_last gap
// was far larger; the gate is set well below it but safely above noise.
inline constexpr double kDefaultLastGapThreshold = 0.10;
inline constexpr double kDefaultSeedWinFraction = 0.8;

struct DatasetBlock {
  std::string path;  // when set, load <path>.csv/<path>.json instead of generating
  DatagenConfig gen;
  double alignment_eta = kDefaultAlignmentEta;
  std::uint64_t seed = 7;
};

struct StreamBlock {
  Regime regime = Regime::SiBlurry;
  int tasks = 5;
  double disjoint_fraction = 0.5;
  int blurry_level = 10;
};

struct TrainBlock {
  std::vector<Strategy> strategies = {Strategy::SIT, Strategy::AIT};
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 5e-4;
  int iterations_per_batch = 3;
  int batch_size = 16;
  long eval_period = 100;
};

struct CompareThresholds {
  double min_last_gap = kDefaultLastGapThreshold;
  double min_seed_win_fraction = kDefaultSeedWinFraction;
};

struct ExperimentConfig {
  DatasetBlock dataset;
  StreamBlock stream;
  ModelConfig model;  // d_in/d_desc are resolved from the dataset
  TrainBlock train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir;
  CompareThresholds thresholds;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dataset"] = {{"path", dataset.path},
                    {"num_classes", dataset.gen.num_classes},
                    {"held_out", dataset.gen.held_out_count},
                    {"per_class_train", dataset.gen.per_class_train},
                    {"per_class_test", dataset.gen.per_class_test},
                    {"d_in", dataset.gen.d_in},
                    {"cluster_sigma", dataset.gen.cluster_sigma},
                    {"separation", dataset.gen.separation},
                    {"alignment_eta", dataset.alignment_eta},
                    {"seed", dataset.seed}};
    j["stream"] = {{"regime", to_string(stream.regime)},
                   {"tasks", stream.tasks},
                   {"disjoint_fraction", stream.disjoint_fraction},
                   {"blurry_level", stream.blurry_level}};
    j["model"] = detail::model_config_to_json(model);
    nlohmann::json strategies = nlohmann::json::array();
    for (Strategy s : train.strategies) strategies.push_back(to_string(s));
    j["train"] = {{"strategies", strategies},
                  {"optimizer", to_string(train.optimizer)},
                  {"lr", train.lr},
                  {"iterations_per_batch", train.iterations_per_batch},
                  {"batch_size", train.batch_size},
                  {"eval_period", train.eval_period}};
    j["run"] = {{"seeds", seeds}, {"output_dir", output_dir}};
    j["compare"] = {{"min_last_gap", thresholds.min_last_gap},
                    {"min_seed_win_fraction", thresholds.min_seed_win_fraction}};
    return j;
  }
};

// ---------------------------------------------------------------------------
// Config file parsing. INI files are lifted into the same JSON shape the
// .json alternative uses ({section: {key: value}}), then both go through one
// typed extraction pass. Unknown sections or keys are rejected.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_ini(const std::string& text, const std::string& where) {
  nlohmann::json j = nlohmann::json::object();
  std::string section;
  long lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + " line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(where + " line " + std::to_string(lineno) + ": empty section name");
      if (!j.contains(section)) j[section] = nlohmann::json::object();
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ConfigError(where + " line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(where + " line " + std::to_string(lineno) + ": empty key");
    j[section][key] = value;
  }
  return j;
}

class ConfigReader {
 public:
  explicit ConfigReader(nlohmann::json j) : j_(std::move(j)) {
    if (!j_.is_object()) throw ConfigError("config root must be an object");
  }

  bool has(const std::string& section, const std::string& key) const {
    return j_.contains(section) && j_.at(section).contains(key);
  }

  double number(const std::string& s, const std::string& k, double dflt) {
    if (!has(s, k)) return dflt;
    const auto& v = mark(s, k);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_double(v.get<std::string>(), s + "." + k);
    throw ConfigError(s + "." + k + ": expected a number");
  }

  long integer(const std::string& s, const std::string& k, long dflt) {
    double v = number(s, k, static_cast<double>(dflt));
    long r = static_cast<long>(v);
    if (static_cast<double>(r) != v) throw ConfigError(s + "." + k + ": expected an integer");
    return r;
  }

  bool boolean(const std::string& s, const std::string& k, bool dflt) {
    if (!has(s, k)) return dflt;
    const auto& v = mark(s, k);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
      std::string t = v.get<std::string>();
      if (t == "true" || t == "1" || t == "yes") return true;
      if (t == "false" || t == "0" || t == "no") return false;
    }
    throw ConfigError(s + "." + k + ": expected true/false");
  }

  std::string str(const std::string& s, const std::string& k, const std::string& dflt) {
    if (!has(s, k)) return dflt;
    const auto& v = mark(s, k);
    if (v.is_string()) return v.get<std::string>();
    throw ConfigError(s + "." + k + ": expected a string");
  }

  std::vector<std::string> str_list(const std::string& s, const std::string& k,
                                    const std::vector<std::string>& dflt) {
    if (!has(s, k)) return dflt;
    const auto& v = mark(s, k);
    std::vector<std::string> out;
    if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_string() && !e.is_number())
          throw ConfigError(s + "." + k + ": expected strings or numbers");
        out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
      return out;
    }
    if (v.is_string()) {
      for (const auto& part : split(v.get<std::string>(), ',')) {
        std::string t = trim(part);
        if (!t.empty()) out.push_back(t);
      }
      return out;
    }
    throw ConfigError(s + "." + k + ": expected a list");
  }

  // Rejects anything that was never read.
  void ensure_consumed() const {
    for (const auto& [section, body] : j_.items()) {
      if (!body.is_object()) throw ConfigError(section + ": expected a section object");
      for (const auto& [key, v] : body.items()) {
        (void)v;
        if (!used_.count(section + "." + key))
          throw ConfigError(section + "." + key + ": unknown key");
      }
    }
  }

 private:
  const nlohmann::json& mark(const std::string& s, const std::string& k) {
    used_.insert(s + "." + k);
    return j_.at(s).at(k);
  }

  nlohmann::json j_;
  std::set<std::string> used_;
};

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& raw) {
  detail::ConfigReader r(raw);
  ExperimentConfig c;

  c.dataset.path = r.str("dataset", "path", "");
  c.dataset.gen.num_classes = static_cast<int>(r.integer("dataset", "num_classes", 20));
  c.dataset.gen.held_out_count = static_cast<int>(r.integer("dataset", "held_out", 5));
  c.dataset.gen.per_class_train = static_cast<int>(r.integer("dataset", "per_class_train", 100));
  c.dataset.gen.per_class_test = static_cast<int>(r.integer("dataset", "per_class_test", 20));
  c.dataset.gen.d_in = static_cast<std::size_t>(r.integer("dataset", "d_in", 32));
  c.dataset.gen.cluster_sigma = r.number("dataset", "cluster_sigma", kDefaultClusterSigma);
  c.dataset.gen.separation = r.number("dataset", "separation", 0.0);
  c.dataset.alignment_eta = r.number("dataset", "alignment_eta", kDefaultAlignmentEta);
  c.dataset.seed = static_cast<std::uint64_t>(r.integer("dataset", "seed", 7));

  c.stream.regime = regime_from_string(r.str("stream", "regime", "si_blurry"));
  c.stream.tasks = static_cast<int>(r.integer("stream", "tasks", 5));
  c.stream.disjoint_fraction = r.number("stream", "disjoint_fraction", 0.5);
  c.stream.blurry_level = static_cast<int>(r.integer("stream", "blurry_level", 10));

  c.model.d_embed = static_cast<std::size_t>(r.integer("model", "d_embed", 16));
  c.model.pet_kind = pet_kind_from_string(r.str("model", "pet", "lowrank"));
  c.model.pet_rank = static_cast<int>(r.integer("model", "pet_rank", 4));
  c.model.adapter_down_dim = static_cast<int>(r.integer("model", "adapter_down_dim", 64));
  c.model.tune_image = r.boolean("model", "tune_image", true);
  c.model.tune_text = r.boolean("model", "tune_text", true);
  c.model.temperature = r.number("model", "temperature", 0.07);

  std::vector<std::string> strategies = r.str_list("train", "strategies", {"sit", "ait"});
  if (strategies.empty()) throw ConfigError("train.strategies: must not be empty");
  c.train.strategies.clear();
  for (const auto& s : strategies) {
    try {
      c.train.strategies.push_back(strategy_from_string(s));
    } catch (const InvalidConfigError&) {
      throw ConfigError("train.strategies: unknown strategy '" + s + "'");
    }
  }
  try {
    c.train.optimizer = optimizer_from_string(r.str("train", "optimizer", "adam"));
  } catch (const InvalidConfigError& e) {
    throw ConfigError(std::string("train.optimizer: ") + e.what());
  }
  c.train.lr = r.number("train", "lr", 5e-4);
  c.train.iterations_per_batch = static_cast<int>(r.integer("train", "iterations_per_batch", 3));
  c.train.batch_size = static_cast<int>(r.integer("train", "batch_size", 16));
  c.train.eval_period = r.integer("train", "eval_period", 100);

  std::vector<std::string> seed_strs = r.str_list("run", "seeds", {"1", "2", "3", "4", "5"});
  if (seed_strs.empty()) throw ConfigError("run.seeds: must not be empty");
  c.seeds.clear();
  for (const auto& s : seed_strs)
    c.seeds.push_back(static_cast<std::uint64_t>(parse_long(s, "run.seeds")));
  c.output_dir = r.str("run", "output_dir", "");

  c.thresholds.min_last_gap = r.number("compare", "min_last_gap", kDefaultLastGapThreshold);
  c.thresholds.min_seed_win_fraction =
      r.number("compare", "min_seed_win_fraction", kDefaultSeedWinFraction);

  r.ensure_consumed();
  return c;
}

// Dispatches on the file extension: .json is parsed as JSON, anything else
// as the INI-style format.
inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text = read_text_file(path);
  nlohmann::json raw;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      raw = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  } else {
    raw = detail::parse_ini(text, path);
  }
  try {
    return experiment_config_from_json(raw);
  } catch (const InvalidConfigError& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Running.
// ---------------------------------------------------------------------------

namespace detail {

inline StreamSchedule build_schedule(const Dataset& ds, const StreamBlock& b, std::uint64_t seed) {
  switch (b.regime) {
    case Regime::CIL: return make_cil_schedule(ds, b.tasks, seed);
    case Regime::IBlurry:
      return make_i_blurry_schedule(ds, b.tasks, b.disjoint_fraction, b.blurry_level, seed);
    case Regime::SiBlurry:
      return make_si_blurry_schedule(ds, b.tasks, b.disjoint_fraction, b.blurry_level, seed);
  }
  throw InvalidConfigError("unknown regime");
}

inline nlohmann::json mean_std(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  if (values.size() > 1) {
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size() - 1);
  }
  return {{"mean", mean}, {"std", std::sqrt(var)}, {"values", values}};
}

}  // namespace detail

// World-model and descriptor seeds hang off the dataset seed so the frozen
// encoder is the same for every run seed.
inline ModelParams build_world_model(const ExperimentConfig& cfg, const Dataset& ds) {
  ModelConfig mc = cfg.model;
  mc.d_in = ds.d_in;
  mc.d_desc = ds.d_desc != 0 ? ds.d_desc : ds.d_in;
  return init_model(mc, derive_seed(ds.seed, 0x90de1));
}

struct ExperimentResult {
  std::string output_dir;
  nlohmann::json summary;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  if (cfg.output_dir.empty()) throw ConfigError("run.output_dir: must be set");
  if (cfg.seeds.empty()) throw ConfigError("run.seeds: must not be empty");
  ensure_dir(cfg.output_dir);

  Dataset ds;
  bool generated = cfg.dataset.path.empty();
  if (generated) {
    ds = generate_dataset(cfg.dataset.gen, cfg.dataset.seed);
  } else {
    ds = load_dataset(cfg.dataset.path);
    if (ds.d_desc == 0) throw ConfigError("dataset.path: loaded dataset has no descriptors");
  }

  ModelParams world = build_world_model(cfg, ds);
  if (generated) {
    make_descriptors(ds, world, cfg.dataset.alignment_eta, derive_seed(cfg.dataset.seed, 0xde5c));
    export_dataset(ds, cfg.output_dir + "/dataset");
  }

  nlohmann::json config_echo = cfg.to_json();
  write_text_file(cfg.output_dir + "/config.json", config_echo.dump(1) + "\n");

  std::map<std::string, std::map<std::string, std::vector<double>>> metric_values;
  for (std::uint64_t seed : cfg.seeds) {
    StreamSchedule schedule = detail::build_schedule(ds, cfg.stream, seed);
    for (Strategy strategy : cfg.train.strategies) {
      TrainConfig tc;
      tc.strategy = strategy;
      tc.optimizer = cfg.train.optimizer;
      tc.lr = cfg.train.lr;
      tc.iterations_per_batch = cfg.train.iterations_per_batch;
      tc.batch_size = cfg.train.batch_size;
      tc.eval_period = cfg.train.eval_period;
      tc.seed = seed;

      RunArtifacts art = train_online(ds, schedule, world, tc);
      std::string dir =
          cfg.output_dir + "/" + to_string(strategy) + "/seed_" + std::to_string(seed);
      write_run_artifacts(art, schedule, ds, strategy, seed, config_echo, dir);
      if (log)
        *log << to_string(strategy) << " seed " << seed << ": a_last=" << art.a_last_value
             << " a_auc=" << art.a_auc_value << "\n";

      auto& mv = metric_values[to_string(strategy)];
      mv["a_last"].push_back(art.a_last_value);
      mv["a_avg"].push_back(art.a_avg_value);
      mv["a_auc"].push_back(art.a_auc_value);
      if (art.zero_shot_before) mv["zero_shot_before"].push_back(*art.zero_shot_before);
      if (art.zero_shot_after) mv["zero_shot_after"].push_back(*art.zero_shot_after);
    }
  }

  nlohmann::json summary;
  summary["format"] = "ollab-summary-v1";
  summary["config"] = config_echo;
  summary["seeds"] = cfg.seeds;
  nlohmann::json per_strategy = nlohmann::json::object();
  for (const auto& [name, metrics] : metric_values) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [metric, values] : metrics) m[metric] = detail::mean_std(values);
    per_strategy[name] = std::move(m);
  }
  summary["strategies"] = std::move(per_strategy);
  write_text_file(cfg.output_dir + "/summary.json", summary.dump(1) + "\n");
  return {cfg.output_dir, summary};
}

// ---------------------------------------------------------------------------
// Comparison of two strategy directories (each holding seed_<n> run dirs).
// ---------------------------------------------------------------------------

struct CompareReport {
  nlohmann::json report;
  bool pass = false;
  std::string text;
};

namespace detail {

struct SeedMetrics {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<double>> values;
};

inline SeedMetrics collect_seed_metrics(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) throw MissingArtifactError("no such directory: " + dir);
  std::vector<std::pair<std::uint64_t, std::string>> runs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("seed_", 0) == 0)
      runs.emplace_back(parse_long(name.substr(5), dir), entry.path().string());
  }
  if (runs.empty()) throw MissingArtifactError("no seed_* run directories in " + dir);
  std::sort(runs.begin(), runs.end());

  SeedMetrics sm;
  for (const auto& [seed, run_dir] : runs) {
    nlohmann::json m = read_metrics_json(run_dir);
    sm.seeds.push_back(seed);
    const auto& metrics = m.at("metrics");
    for (const char* key : {"a_last", "a_avg", "a_auc", "zero_shot_before", "zero_shot_after"}) {
      if (metrics.contains(key) && metrics.at(key).is_number())
        sm.values[key].push_back(metrics.at(key).get<double>());
    }
  }
  return sm;
}

}  // namespace detail

inline CompareReport compare_runs(const std::string& dir_sit, const std::string& dir_ait,
                                  const CompareThresholds& thresholds = {}) {
  detail::SeedMetrics sit = detail::collect_seed_metrics(dir_sit);
  detail::SeedMetrics ait = detail::collect_seed_metrics(dir_ait);
  if (sit.seeds != ait.seeds)
    throw SeedMismatchError("seed lists differ between " + dir_sit + " and " + dir_ait);

  CompareReport rep;
  rep.report["format"] = "ollab-compare-v1";
  rep.report["seeds"] = sit.seeds;
  rep.report["thresholds"] = {{"min_last_gap", thresholds.min_last_gap},
                              {"min_seed_win_fraction", thresholds.min_seed_win_fraction}};

  std::ostringstream text;
  text << "metric             sit mean+-std        ait mean+-std        delta(sit-ait)\n";
  for (const char* key : {"a_auc", "a_last", "zero_shot_after"}) {
    if (!sit.values.count(key) || !ait.values.count(key)) continue;
    const auto& a = sit.values.at(key);
    const auto& b = ait.values.at(key);
    if (a.size() != b.size()) throw SeedMismatchError(std::string("metric ") + key + ": seed count mismatch");
    std::vector<double> delta(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) delta[i] = a[i] - b[i];
    nlohmann::json entry = {{"sit", detail::mean_std(a)},
                            {"ait", detail::mean_std(b)},
                            {"delta", detail::mean_std(delta)}};
    rep.report["metrics"][key] = entry;
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %8.4f +- %-8.4f %8.4f +- %-8.4f %+8.4f\n", key,
                  entry["sit"]["mean"].get<double>(), entry["sit"]["std"].get<double>(),
                  entry["ait"]["mean"].get<double>(), entry["ait"]["std"].get<double>(),
                  entry["delta"]["mean"].get<double>());
    text << line;
  }

  const auto& sit_last = sit.values.at("a_last");
  const auto& ait_last = ait.values.at("a_last");
  std::size_t wins = 0;
  double gap = 0.0;
  for (std::size_t i = 0; i < sit_last.size(); ++i) {
    if (sit_last[i] > ait_last[i]) ++wins;
    gap += sit_last[i] - ait_last[i];
  }
  gap /= static_cast<double>(sit_last.size());
  std::size_t need = static_cast<std::size_t>(std::ceil(
      thresholds.min_seed_win_fraction * static_cast<double>(sit_last.size())));
  bool pass = gap >= thresholds.min_last_gap && wins >= need;

  rep.pass = pass;
  rep.report["gate"] = {{"a_last_gap_mean", gap},
                        {"a_last_wins", wins},
                        {"needed_wins", need},
                        {"pass", pass}};
  text << "a_last gate: gap " << gap << " (min " << thresholds.min_last_gap << "), wins " << wins
       << "/" << sit_last.size() << " (need " << need << ") -> " << (pass ? "PASS" : "FAIL")
       << "\n";
  rep.text = text.str();
  return rep;
}

}  // namespace ollab
