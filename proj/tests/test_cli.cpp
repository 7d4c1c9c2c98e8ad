// Drives the installed binary end to end: exit codes, the staged pipeline,
// and file outputs. SSLAB_CLI_PATH is injected by the build.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sslab/pseudolabel.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(SSLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& seeds = "[1, 2]") {
  fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << R"({
  "data": {
    "synth": {
      "num_classes": 2,
      "dim": 2,
      "test_per_group": 40,
      "groups": [
        {"name": "a", "class_means": [[-2.0, 0.0], [2.0, 0.0]], "noise_scale": 1.0,
         "n_labeled": 8, "n_unlabeled": 24},
        {"name": "b", "class_means": [[-1.0, 4.0], [1.0, 4.0]], "noise_scale": 1.0,
         "n_labeled": 8, "n_unlabeled": 24}
      ]
    }
  },
  "train": {"epochs": 40, "learning_rate": 0.3, "batch_size": 16},
  "ssl": {"mode": "two_iteration", "sigma": 0.2, "rounds": 2},
  "seeds": )" << seeds
      << ",\n  \"trace_every\": 10\n}\n";
  return path;
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run_cli("--frobnicate"), 1);
  EXPECT_EQ(run_cli("run --config nowhere.json"), 1);  // missing required --out
  EXPECT_EQ(run_cli("definitely-not-a-command"), 1);
}

TEST(Cli, MissingConfigFileIsDataError) {
  auto dir = fresh_dir("sslab_cli_missing");
  EXPECT_EQ(run_cli("run --config " + (dir / "nope.json").string() + " --out " +
                    (dir / "out").string()),
            2);
  fs::remove_all(dir);
}

TEST(Cli, MalformedConfigIsDataError) {
  auto dir = fresh_dir("sslab_cli_badcfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " +
                    (dir / "out").string()),
            2);
  std::ofstream(dir / "typo.json") << R"({"data": {"synth": {"groups": []}}, "seeds": [1]})";
  EXPECT_EQ(run_cli("run --config " + (dir / "typo.json").string() + " --out " +
                    (dir / "out").string()),
            2);
  fs::remove_all(dir);
}

TEST(Cli, StagedPipelineReproducesRun) {
  auto dir = fresh_dir("sslab_cli_pipeline");
  auto cfg = write_config(dir);
  auto out_run = dir / "run";
  auto out_staged = dir / "staged";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out_run.string()), 0);
  ASSERT_EQ(run_cli("gen-data --config " + cfg.string() + " --out " + out_staged.string()), 0);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + out_staged.string()), 0);
  ASSERT_EQ(run_cli("evaluate --config " + cfg.string() + " --out " + out_staged.string()), 0);
  ASSERT_EQ(run_cli("bounds --config " + cfg.string() + " --out " + out_staged.string()), 0);
  ASSERT_EQ(run_cli("report --out " + out_staged.string()), 0);
  for (int s : {1, 2}) {
    fs::path a = out_run / ("seed_" + std::to_string(s));
    fs::path b = out_staged / ("seed_" + std::to_string(s));
    for (const char* f :
         {"train.csv", "test.csv", "pseudo.csv", "metrics.json", "bounds.json", "trace.csv"})
      EXPECT_EQ(slurp(a / f), slurp(b / f)) << f << " differs for seed " << s;
  }
  EXPECT_EQ(slurp(out_run / "aggregate.json"), slurp(out_staged / "aggregate.json"));
  // table rows are labeled by bundle directory name; compare past the labels
  auto strip_labels = [](const std::string& s) {
    std::istringstream in(s);
    std::string line, out;
    while (std::getline(in, line)) {
      auto comma = line.find(',');
      out += (comma == std::string::npos ? line : line.substr(comma)) + "\n";
    }
    return out;
  };
  EXPECT_EQ(strip_labels(slurp(out_run / "table.csv")),
            strip_labels(slurp(out_staged / "table.csv")));
  fs::remove_all(dir);
}

TEST(Cli, RunRerunIsByteIdentical) {
  auto dir = fresh_dir("sslab_cli_rerun");
  auto cfg = write_config(dir, "[3]");
  auto out1 = dir / "one";
  auto out2 = dir / "two";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out1.string()), 0);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out2.string()), 0);
  EXPECT_EQ(slurp(out1 / "seed_3" / "metrics.json"), slurp(out2 / "seed_3" / "metrics.json"));
  EXPECT_EQ(slurp(out1 / "seed_3" / "bounds.json"), slurp(out2 / "seed_3" / "bounds.json"));
  fs::remove_all(dir);
}

TEST(Cli, SeedListOverride) {
  auto dir = fresh_dir("sslab_cli_seeds");
  auto cfg = write_config(dir);
  auto out = dir / "out";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out.string() +
                    " --seed-list 5,6,7 --jobs 3"),
            0);
  for (int s : {5, 6, 7})
    EXPECT_TRUE(fs::exists(out / ("seed_" + std::to_string(s)) / "metrics.json"));
  EXPECT_FALSE(fs::exists(out / "seed_1"));
  fs::remove_all(dir);
}

TEST(Cli, BoundsWithoutHiddenTruthNamesRequirement) {
  auto dir = fresh_dir("sslab_cli_notruth");
  // csv data: labeled rows plus unlabeled rows lacking hidden_truth
  {
    std::ofstream train_csv(dir / "train.csv");
    train_csv << "f0,label,group,hidden_truth\n";
    for (int i = 0; i < 8; ++i)
      train_csv << (i % 2 ? "1.0,2" : "-1.0,1") << ",g," << (i % 2 ? 2 : 1) << "\n";
    for (int i = 0; i < 8; ++i) train_csv << (i % 2 ? "1.1" : "-1.1") << ",,g,\n";
    std::ofstream test_csv(dir / "test.csv");
    test_csv << "f0,label,group,hidden_truth\n";
    test_csv << "-1.0,1,g,1\n1.0,2,g,2\n";
  }
  std::ofstream(dir / "cfg.json") << R"({
    "data": {"csv": {"train": ")" << (dir / "train.csv").string()
                                  << R"(", "test": ")" << (dir / "test.csv").string() << R"(",
             "num_classes": 2, "dim": 1}},
    "train": {"epochs": 30, "learning_rate": 0.3},
    "seeds": [1]
  })";
  auto out = dir / "out";
  ASSERT_EQ(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + out.string()),
            0);
  // Stage the models and pseudo dataset directly (the ideal model cannot
  // train on this data, so the train subcommand is not usable here).
  {
    using namespace sslab;
    Dataset ds = load_csv((out / "seed_1" / "train.csv").string(), 2, 1);
    Classifier teacher = Classifier::init(Architecture::SoftmaxLinear, 2, 1, 0, 3, 0.2);
    AugmentConfig aug;
    PseudoDataset pseudo = build_pseudo_dataset(teacher, ds, aug, PseudoMode::Explicit);
    save_pseudo_csv(pseudo, (out / "seed_1" / "pseudo.csv").string());
    save_checkpoint(teacher, (out / "seed_1" / "baseline.model.txt").string());
    save_checkpoint(teacher, (out / "seed_1" / "semi.model.txt").string());
  }
  std::string cmd = std::string(SSLAB_CLI_PATH) + " bounds --config " +
                    (dir / "cfg.json").string() + " --out " + out.string() + " 2> " +
                    (dir / "stderr.txt").string();
  int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  std::string err = slurp(dir / "stderr.txt");
  EXPECT_NE(err.find("hidden_truth"), std::string::npos) << err;
  fs::remove_all(dir);
}

TEST(Cli, SweepWritesProgression) {
  auto dir = fresh_dir("sslab_cli_sweep");
  auto cfg = write_config(dir, "[1]");
  auto out = dir / "out";
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --out " + out.string() +
                    " --labels 16,32 --jobs 2"),
            0);
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "labels_16" / "table.csv"));
  EXPECT_TRUE(fs::exists(out / "labels_32" / "table.csv"));
  fs::remove_all(dir);
}

TEST(Cli, ReportMergesBundles) {
  auto dir = fresh_dir("sslab_cli_report");
  auto cfg = write_config(dir, "[1]");
  auto out1 = dir / "run1";
  auto out2 = dir / "run2";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out1.string()), 0);
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out2.string()), 0);
  ASSERT_EQ(run_cli("report --out " + out1.string() + " " + out2.string()), 0);
  std::string table = slurp(out1 / "table.csv");
  EXPECT_NE(table.find("setting,a,b,SD"), std::string::npos) << table;
  EXPECT_NE(table.find("run1"), std::string::npos);
  EXPECT_NE(table.find("run2"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
