// sslab — a desk-scale laboratory for measuring how semi-supervised learning
// treats different sub-populations: per-group benefit ratios, generalization
// bound quantities, and mitigation experiments.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "sslab/harness.hpp"

namespace {

// 0 success, 1 usage, 2 data error, 3 training divergence
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTrain = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seed_list;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_jobs) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", args.out_dir, "bundle output directory")->required();
  cmd->add_option("--seed-list", args.seed_list, "comma-separated seeds overriding the config")
      ->delimiter(',');
  if (with_jobs) cmd->add_option("--jobs", args.jobs, "max concurrent seeds")->check(CLI::PositiveNumber);
}

sslab::harness::ExperimentConfig load_config(const CommonArgs& args) {
  auto cfg = sslab::harness::load_experiment_config(args.config_path);
  if (!args.seed_list.empty()) cfg.seeds = args.seed_list;
  return cfg;
}

template <typename Fn>
void for_each_seed(const sslab::harness::ExperimentConfig& cfg, Fn&& fn, int jobs = 1) {
  if (jobs <= 1) {
    for (std::uint64_t s : cfg.seeds) fn(s);
    return;
  }
  for (std::size_t start = 0; start < cfg.seeds.size(); start += jobs) {
    std::size_t end = std::min(cfg.seeds.size(), start + static_cast<std::size_t>(jobs));
    std::vector<std::future<void>> batch;
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(std::async(std::launch::async, [&fn, seed = cfg.seeds[i]] { fn(seed); }));
    for (auto& f : batch) f.get();
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const sslab::TrainError*>(&e)) return kExitTrain;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised learning laboratory"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, bounds_args, run_args, sweep_args;
  std::vector<int> sweep_labels;
  std::string report_out;
  std::vector<std::string> report_dirs;

  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate per-seed train/test CSVs");
  add_common(cmd_gen, gen_args, false);

  CLI::App* cmd_train = app.add_subcommand(
      "train", "train baseline/ideal/semi models from per-seed CSVs");
  add_common(cmd_train, train_args, true);

  CLI::App* cmd_eval =
      app.add_subcommand("evaluate", "compute per-group metrics.json from checkpoints");
  add_common(cmd_eval, eval_args, false);

  CLI::App* cmd_bounds =
      app.add_subcommand("bounds", "compute bounds.json from the pseudo dataset");
  add_common(cmd_bounds, bounds_args, false);

  CLI::App* cmd_run = app.add_subcommand("run", "full pipeline plus aggregation");
  add_common(cmd_run, run_args, true);

  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "repeat the experiment across labeled-data sizes");
  add_common(cmd_sweep, sweep_args, true);
  cmd_sweep->add_option("--labels", sweep_labels, "comma-separated labeled-data totals")
      ->required()
      ->delimiter(',');

  CLI::App* cmd_report = app.add_subcommand("report", "re-render aggregate tables from a bundle");
  cmd_report->add_option("--out", report_out, "bundle (and table) directory")->required();
  cmd_report->add_option("dirs", report_dirs, "additional bundles to tabulate side by side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    namespace hs = sslab::harness;
    if (cmd_gen->parsed()) {
      auto cfg = load_config(gen_args);
      std::filesystem::create_directories(gen_args.out_dir);
      for_each_seed(cfg, [&](std::uint64_t s) { hs::stage_gen_data(cfg, gen_args.out_dir, s); });
    } else if (cmd_train->parsed()) {
      auto cfg = load_config(train_args);
      for_each_seed(
          cfg, [&](std::uint64_t s) { hs::stage_train(cfg, train_args.out_dir, s); },
          train_args.jobs);
    } else if (cmd_eval->parsed()) {
      auto cfg = load_config(eval_args);
      for_each_seed(cfg, [&](std::uint64_t s) { hs::stage_evaluate(cfg, eval_args.out_dir, s); });
    } else if (cmd_bounds->parsed()) {
      auto cfg = load_config(bounds_args);
      for_each_seed(cfg, [&](std::uint64_t s) { hs::stage_bounds(cfg, bounds_args.out_dir, s); });
    } else if (cmd_run->parsed()) {
      auto cfg = load_config(run_args);
      auto errors = hs::run_experiment(cfg, run_args.out_dir, run_args.jobs);
      for (const auto& err : errors)
        std::cerr << "seed " << err.seed << " failed at " << err.stage << ": " << err.message
                  << "\n";
      if (errors.size() == cfg.seeds.size() && !errors.empty()) {
        std::cerr << "all seeds failed\n";
        return kExitData;
      }
    } else if (cmd_sweep->parsed()) {
      auto cfg = load_config(sweep_args);
      hs::run_sweep(cfg, sweep_args.out_dir, sweep_labels, sweep_args.jobs);
    } else if (cmd_report->parsed()) {
      std::vector<std::filesystem::path> bundles;
      bundles.emplace_back(report_out);
      for (const auto& d : report_dirs) bundles.emplace_back(d);
      for (const auto& dir : bundles) hs::write_report(dir, hs::discover_seeds(dir));
      if (bundles.size() > 1)
        hs::detail::write_text(std::filesystem::path(report_out) / "table.csv",
                               hs::render_table(bundles));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
