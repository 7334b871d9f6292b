// Experiment runner CLI.
//
//   ollab run -c config.ini [-o DIR] [--seeds 1,2,3] [--strategy sit]
//   ollab plot RUN_DIR
//   ollab compare DIR_SIT DIR_AIT [--min-last-gap X] [--min-seed-win-fraction F]
//
// Exit codes: 0 success, 1 run failure, 2 configuration failure.
// OLLAB_OUTPUT_ROOT sets the default output root when neither the config nor
// --output names one.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ollab/experiment.hpp"
#include "ollab/plots.hpp"

namespace {

std::string default_output_dir(const std::string& config_path) {
  const char* root = std::getenv("OLLAB_OUTPUT_ROOT");
  std::string base = root && *root ? root : "out";
  return base + "/" + std::filesystem::path(config_path).stem().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online lifelong-learning lab"};
  app.require_subcommand(1);

  std::string config_path, output_dir, seeds_csv, strategy_override;
  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("-c,--config", config_path, "config file (.ini-style or .json)")->required();
  run->add_option("-o,--output", output_dir, "output directory (overrides run.output_dir)");
  run->add_option("--seeds", seeds_csv, "comma-separated seed override");
  run->add_option("--strategy", strategy_override, "restrict to one strategy (sit|ait)");

  std::string plot_dir;
  CLI::App* plot = app.add_subcommand("plot", "render SVG plots for one run directory");
  plot->add_option("dir", plot_dir, "run directory holding curve.csv etc.")->required();

  std::string dir_sit, dir_ait, report_path;
  double min_last_gap = ollab::kDefaultLastGapThreshold;
  double min_seed_win = ollab::kDefaultSeedWinFraction;
  CLI::App* cmp = app.add_subcommand("compare", "compare sit and ait run directories");
  cmp->add_option("dir_sit", dir_sit, "directory with sit seed_* runs")->required();
  cmp->add_option("dir_ait", dir_ait, "directory with ait seed_* runs")->required();
  cmp->add_option("--min-last-gap", min_last_gap, "a_last mean-gap gate");
  cmp->add_option("--min-seed-win-fraction", min_seed_win, "per-seed win fraction gate");
  cmp->add_option("--out", report_path, "write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      ollab::ExperimentConfig cfg = ollab::load_experiment_config(config_path);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      if (cfg.output_dir.empty()) cfg.output_dir = default_output_dir(config_path);
      if (!seeds_csv.empty()) {
        cfg.seeds.clear();
        for (const auto& s : ollab::split(seeds_csv, ','))
          cfg.seeds.push_back(
              static_cast<std::uint64_t>(ollab::parse_long(ollab::trim(s), "--seeds")));
      }
      if (!strategy_override.empty())
        cfg.train.strategies = {ollab::strategy_from_string(strategy_override)};

      ollab::ExperimentResult res = ollab::run_experiment(cfg, &std::cout);
      std::cout << "summary: " << res.output_dir << "/summary.json\n";
      return 0;
    }
    if (*plot) {
      for (const auto& f : ollab::plot_run_dir(plot_dir)) std::cout << f << "\n";
      return 0;
    }
    if (*cmp) {
      ollab::CompareThresholds th{min_last_gap, min_seed_win};
      ollab::CompareReport rep = ollab::compare_runs(dir_sit, dir_ait, th);
      std::cout << rep.text;
      if (!report_path.empty())
        ollab::write_text_file(report_path, rep.report.dump(1) + "\n");
      return 0;
    }
  } catch (const ollab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ollab::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ollab::InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
