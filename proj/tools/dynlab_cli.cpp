// dynlab command-line driver.
//
//   dynlab train      --config FILE [--seed S] [--grad-path P] [--cross-check] [--out DIR]
//   dynlab gridsearch --config FILE [--seed S] [--out DIR]
//   dynlab folds      --config FILE [--seed S] [--out DIR]
//   dynlab report     --run-dir DIR
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error,
// 4 meta-gradient cross-check failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dynlab/dynlab.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCrossCheck = 4;

dynlab::ExperimentConfig load_config(const std::string& path, const std::string& grad_path) {
  auto values = dynlab::ConfigValues::load(path);
  if (!grad_path.empty()) values.set("labels.grad_path", grad_path);
  return dynlab::ExperimentConfig::from(std::move(values));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynlab: soft-label meta-learning experiments"};
  app.require_subcommand(1);

  std::string config, grad_path, out, run_dir;
  std::optional<std::uint64_t> seed;
  bool cross_check = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config file")->required();
    sub->add_option("--seed", seed, "run only this seed");
    sub->add_option("--out", out, "output root (default: $DYNLAB_OUTPUT_ROOT or cwd)");
  };
  auto* train = app.add_subcommand("train", "run the configured experiment");
  add_common(train);
  train->add_option("--grad-path", grad_path, "closed_form | lookahead_backprop | finite_difference")
      ->check(CLI::IsMember({"closed_form", "lookahead_backprop", "finite_difference"}));
  train->add_flag("--cross-check", cross_check, "compare closed-form and finite-difference meta-gradients");
  auto* grid = app.add_subcommand("gridsearch", "sweep label init and label learning rate grids");
  add_common(grid);
  auto* folds = app.add_subcommand("folds", "k-fold label learning with averaged labels");
  add_common(folds);
  auto* report = app.add_subcommand("report", "aggregate run records into summary CSVs");
  report->add_option("--run-dir", run_dir, "directory holding run records")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto root = dynlab::output_root(out.empty() ? std::nullopt : std::optional<std::string>(out));
    if (*train) {
      const auto cfg = load_config(config, grad_path);
      const auto s = dynlab::train_experiment(cfg, root, seed, cross_check);
      std::cout << "run directory: " << s.run_dir.string() << '\n';
      for (const auto& r : s.records) {
        std::cout << "seed " << r.seed << ' ' << r.method << " test_acc=" << dynlab::format_double(r.test_acc)
                  << '\n';
      }
      if (s.cross_check_failed) {
        std::cerr << "meta-gradient cross-check failed (see crosscheck.csv)\n";
        return kExitCrossCheck;
      }
    } else if (*grid) {
      const auto cfg = load_config(config, "");
      std::cout << "leaderboard: " << dynlab::gridsearch_experiment(cfg, root, seed).string() << '\n';
    } else if (*folds) {
      const auto cfg = load_config(config, "");
      std::cout << "folds directory: " << dynlab::folds_experiment(cfg, root, seed).string() << '\n';
    } else if (*report) {
      dynlab::write_report(run_dir);
      std::cout << "report written to " << run_dir << '\n';
    }
  } catch (const dynlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dynlab::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
