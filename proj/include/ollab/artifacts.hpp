#pragma once

// Run artifacts on disk. One directory per (strategy, seed) run:
//
//   metrics.json    summary scalars, per-task accuracies, class metadata,
//                   config echo
//   curve.csv       samples_seen,accuracy
//   confusion.csv   final confusion matrix, classes in occurrence order
//   ledger.csv      step,class_id,role,norm
//   checkpoint.json final model parameters
//   schedule.csv    the stream the run consumed

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ollab/errors.hpp"
#include "ollab/io.hpp"
#include "ollab/objective.hpp"
#include "ollab/streams.hpp"
#include "ollab/trainer.hpp"

namespace ollab {

inline void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::string csv = "samples_seen,accuracy\n";
  for (const auto& p : curve)
    csv += std::to_string(p.samples_seen) + ',' + format_double(p.accuracy) + '\n';
  write_text_file(path, csv);
}

inline std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  std::vector<CurvePoint> curve;
  for (const auto& row : read_csv(path)) {
    if (row.fields.size() == 2 && row.fields[0] == "samples_seen") continue;  // header
    std::string where = path + " line " + std::to_string(row.line);
    if (row.fields.size() != 2) throw ParseError(where + ": expected 2 columns");
    curve.push_back({parse_long(row.fields[0], where), parse_double(row.fields[1], where)});
  }
  return curve;
}

inline void write_confusion_csv(const Mat& confusion, const std::vector<int>& class_order,
                                const std::string& path) {
  std::string csv = "true_class";
  for (int c : class_order) csv += ",pred_" + std::to_string(c);
  csv += '\n';
  for (std::size_t r = 0; r < confusion.rows; ++r) {
    csv += std::to_string(class_order[r]);
    for (std::size_t c = 0; c < confusion.cols; ++c)
      csv += ',' + format_double(confusion(r, c));
    csv += '\n';
  }
  write_text_file(path, csv);
}

struct ConfusionTable {
  Mat counts;
  std::vector<int> class_order;
};

inline ConfusionTable read_confusion_csv(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.size() < 2) throw ParseError(path + ": missing confusion rows");
  ConfusionTable t;
  std::size_t k = rows.size() - 1;
  t.counts = Mat(k, k);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    std::string where = path + " line " + std::to_string(row.line);
    if (row.fields.size() != k + 1) throw ParseError(where + ": expected " + std::to_string(k + 1) + " columns");
    t.class_order.push_back(static_cast<int>(parse_long(row.fields[0], where)));
    for (std::size_t c = 0; c < k; ++c)
      t.counts(r - 1, c) = parse_double(row.fields[c + 1], where);
  }
  return t;
}

struct LedgerRow {
  long step;
  int class_id;
  std::string role;
  double norm;
};

inline std::vector<LedgerRow> read_ledger_csv(const std::string& path) {
  std::vector<LedgerRow> out;
  for (const auto& row : read_csv(path)) {
    if (!row.fields.empty() && row.fields[0] == "step") continue;
    std::string where = path + " line " + std::to_string(row.line);
    if (row.fields.size() != 4) throw ParseError(where + ": expected 4 columns");
    out.push_back({parse_long(row.fields[0], where),
                   static_cast<int>(parse_long(row.fields[1], where)), row.fields[2],
                   parse_double(row.fields[3], where)});
  }
  return out;
}

inline nlohmann::json run_metrics_json(const RunArtifacts& art, const StreamSchedule& schedule,
                                       Strategy strategy, std::uint64_t seed,
                                       const nlohmann::json& config_echo) {
  nlohmann::json j;
  j["format"] = "ollab-run-v1";
  j["strategy"] = to_string(strategy);
  j["seed"] = seed;
  j["config"] = config_echo;
  j["metrics"] = {{"a_last", art.a_last_value},
                  {"a_avg", art.a_avg_value},
                  {"a_auc", art.a_auc_value},
                  {"task_accuracies", art.task_accuracies},
                  {"total_samples", art.total_samples},
                  {"eval_period", art.eval_period}};
  j["metrics"]["zero_shot_before"] =
      art.zero_shot_before ? nlohmann::json(*art.zero_shot_before) : nlohmann::json(nullptr);
  j["metrics"]["zero_shot_after"] =
      art.zero_shot_after ? nlohmann::json(*art.zero_shot_after) : nlohmann::json(nullptr);

  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < art.registry.order.size(); ++i) {
    int c = art.registry.order[i];
    classes.push_back({{"id", c},
                       {"occurrence_index", i},
                       {"first_step", art.registry.first_step.at(c)},
                       {"role", schedule.roles.at(c) == ClassRole::Disjoint ? "disjoint" : "blurry"},
                       {"home_task", schedule.home_task.at(c)}});
  }
  j["classes"] = std::move(classes);
  return j;
}

// Writes the whole artifact set for one run into dir.
inline void write_run_artifacts(const RunArtifacts& art, const StreamSchedule& schedule,
                                const Dataset& ds, Strategy strategy, std::uint64_t seed,
                                const nlohmann::json& config_echo, const std::string& dir) {
  ensure_dir(dir);
  write_text_file(dir + "/metrics.json",
                  run_metrics_json(art, schedule, strategy, seed, config_echo).dump(1) + "\n");
  write_curve_csv(art.curve, dir + "/curve.csv");
  write_confusion_csv(art.confusion, art.confusion_classes, dir + "/confusion.csv");
  export_ledger_csv(art.ledger, dir + "/ledger.csv");
  save_checkpoint(art.params, dir + "/checkpoint.json");
  export_schedule_csv(schedule, ds, dir + "/schedule.csv");
}

inline nlohmann::json read_metrics_json(const std::string& dir) {
  std::string path = dir + "/metrics.json";
  if (!file_exists(path)) throw MissingArtifactError("missing " + path);
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace ollab
