#pragma once

// SVG plots over a run-artifact directory: the anytime-accuracy curve, the
// final confusion heatmap (classes in occurrence order, blurry/disjoint
// marked b/d), and the gradient-ledger timeline with the positive panel on
// top and the negative panel below. A series that is identically zero (the
// asymmetric one under the symmetric strategy) is omitted.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ollab/artifacts.hpp"
#include "ollab/errors.hpp"
#include "ollab/svg.hpp"

namespace ollab {

namespace detail {

inline std::string heat_color(double t) {
  // white -> deep blue
  t = std::clamp(t, 0.0, 1.0);
  int r = static_cast<int>(255.0 - 205.0 * t);
  int g = static_cast<int>(255.0 - 175.0 * t);
  int b = static_cast<int>(255.0 - 75.0 * t);
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

inline void axis_frame(SvgDoc& svg, double x0, double y0, double x1, double y1) {
  svg.line(x0, y0, x0, y1);
  svg.line(x0, y1, x1, y1);
}

}  // namespace detail

inline std::string plot_accuracy_curve(const std::string& dir) {
  std::string csv = dir + "/curve.csv";
  if (!file_exists(csv)) throw MissingArtifactError("missing " + csv);
  std::vector<CurvePoint> curve = read_curve_csv(csv);
  if (curve.empty()) throw MissingArtifactError(csv + " has no data rows");

  const double w = 520, h = 320, ml = 50, mr = 15, mt = 20, mb = 40;
  SvgDoc svg(w, h);
  LinScale sx{0.0, static_cast<double>(curve.back().samples_seen), ml, w - mr};
  LinScale sy{0.0, 1.0, h - mb, mt};
  detail::axis_frame(svg, ml, mt, w - mr, h - mb);
  for (double g : {0.25, 0.5, 0.75, 1.0}) {
    svg.line(ml, sy(g), w - mr, sy(g), "#dddddd", 0.5);
    svg.text(ml - 6, sy(g) + 3, format_double(g), 9, "end");
  }
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : curve) pts.emplace_back(sx(static_cast<double>(p.samples_seen)), sy(p.accuracy));
  svg.polyline(pts, "#1f77b4", 1.5, "accuracy");
  for (const auto& p : pts) svg.circle(p.first, p.second, 2.0, "#1f77b4");
  svg.text(ml, h - 8, "samples seen", 10);
  svg.text(w - mr, h - 8, std::to_string(curve.back().samples_seen), 9, "end");
  svg.text(10, mt + 6, "accuracy", 10);

  std::string out = dir + "/curve.svg";
  svg.save(out);
  return out;
}

inline std::string plot_confusion(const std::string& dir) {
  std::string csv = dir + "/confusion.csv";
  if (!file_exists(csv)) throw MissingArtifactError("missing " + csv);
  ConfusionTable table = read_confusion_csv(csv);
  nlohmann::json metrics = read_metrics_json(dir);

  std::map<int, std::string> tag;  // id -> "b" | "d"
  for (const auto& c : metrics.at("classes"))
    tag[c.at("id").get<int>()] = c.at("role").get<std::string>() == "blurry" ? "b" : "d";

  std::size_t k = table.class_order.size();
  const double cell = std::max(10.0, 360.0 / static_cast<double>(k));
  const double ml = 60, mt = 40;
  const double w = ml + cell * static_cast<double>(k) + 20;
  const double h = mt + cell * static_cast<double>(k) + 30;
  SvgDoc svg(w, h);

  for (std::size_t r = 0; r < k; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) row_sum += table.counts(r, c);
    for (std::size_t c = 0; c < k; ++c) {
      double t = row_sum > 0.0 ? table.counts(r, c) / row_sum : 0.0;
      svg.rect(ml + cell * static_cast<double>(c), mt + cell * static_cast<double>(r), cell, cell,
               detail::heat_color(t), "cell");
    }
    int cid = table.class_order[r];
    std::string label = std::to_string(cid) + (tag.count(cid) ? tag[cid] : "");
    svg.text(ml - 5, mt + cell * (static_cast<double>(r) + 0.7), label, 9, "end");
    svg.text(ml + cell * (static_cast<double>(r) + 0.5), mt - 6, label, 9, "middle");
  }
  svg.text(ml, h - 8, "predicted (classes in occurrence order)", 10);
  svg.text(12, mt - 22, "true", 10);

  std::string out = dir + "/confusion.svg";
  svg.save(out);
  return out;
}

inline std::string plot_ledger_timeline(const std::string& dir) {
  std::string csv = dir + "/ledger.csv";
  if (!file_exists(csv)) throw MissingArtifactError("missing " + csv);
  std::vector<LedgerRow> rows = read_ledger_csv(csv);
  if (rows.empty()) throw MissingArtifactError(csv + " has no data rows");

  // per-step totals per role
  std::map<long, double> pos, sym, asym;
  long max_step = 0;
  for (const auto& r : rows) {
    max_step = std::max(max_step, r.step);
    if (r.role == "positive")
      pos[r.step] += r.norm;
    else if (r.role == "sym_negative")
      sym[r.step] += r.norm;
    else
      asym[r.step] += r.norm;
  }
  auto series_max = [](const std::map<long, double>& m) {
    double v = 0.0;
    for (const auto& [s, x] : m) v = std::max(v, x);
    return v;
  };
  bool has_asym = series_max(asym) > 0.0;
  double y_max = std::max({series_max(pos), series_max(sym), series_max(asym), 1e-12});

  const double w = 560, h = 420, ml = 55, mr = 15;
  const double panel_h = 160, gap = 50, mt = 25;
  SvgDoc svg(w, h);
  LinScale sx{0.0, static_cast<double>(std::max<long>(max_step, 1)), ml, w - mr};

  auto draw_panel = [&](double top, const char* title) {
    detail::axis_frame(svg, ml, top, w - mr, top + panel_h);
    svg.text(ml, top - 8, title, 11);
    return LinScale{0.0, y_max, top + panel_h, top};
  };
  auto to_pts = [&](const std::map<long, double>& m, const LinScale& sy) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [s, v] : m) pts.emplace_back(sx(static_cast<double>(s)), sy(v));
    return pts;
  };

  LinScale sy_top = draw_panel(mt, "positive-sample gradient norm");
  svg.polyline(to_pts(pos, sy_top), "#1f77b4", 1.2, "positive");

  LinScale sy_bot = draw_panel(mt + panel_h + gap, "negative-sample gradient norm");
  svg.polyline(to_pts(sym, sy_bot), "#d62728", 1.2, "sym_negative");
  if (has_asym) svg.polyline(to_pts(asym, sy_bot), "#9467bd", 1.2, "asym_negative");
  svg.text(w - mr, mt + panel_h + gap - 8, has_asym ? "red: symmetric, purple: asymmetric" : "red: symmetric",
           9, "end");
  svg.text(ml, h - 8, "optimizer step", 10);

  std::string out = dir + "/ledger.svg";
  svg.save(out);
  return out;
}

// Emits the three SVGs for one run directory; returns the file list.
inline std::vector<std::string> plot_run_dir(const std::string& dir) {
  return {plot_accuracy_curve(dir), plot_confusion(dir), plot_ledger_timeline(dir)};
}

}  // namespace ollab
