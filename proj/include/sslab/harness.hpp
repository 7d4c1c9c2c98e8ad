#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslab/bounds.hpp"
#include "sslab/dataset.hpp"
#include "sslab/errors.hpp"
#include "sslab/metrics.hpp"
#include "sslab/mitigation.hpp"
#include "sslab/model.hpp"
#include "sslab/pseudolabel.hpp"
#include "sslab/ssl.hpp"

namespace sslab::harness {

using nlohmann::json;

// Per-experiment-seed stream tags. Every random stream in a run is derived
// from (seed, tag), so seeds never interact and stages can be re-run alone.
namespace tags {
constexpr std::uint64_t kData = 0x64617461ULL;
constexpr std::uint64_t kTest = 0x74657374ULL;
constexpr std::uint64_t kGrow = 0x67726f77ULL;
constexpr std::uint64_t kTrain = 0x7472616eULL;
constexpr std::uint64_t kIdeal = 0x6964656cULL;
constexpr std::uint64_t kAugment = 0x61756720ULL;
}  // namespace tags

struct DataConfig {
  bool is_synth = true;
  SynthConfig synth;       // seed field unused; per-seed streams are derived
  int test_per_group = 1000;
  std::string csv_train;
  std::string csv_test;
  int num_classes = 0;     // csv only
  int dim = 0;             // csv only
};

struct SslConfig {
  std::string mode = "two_iteration";  // two_iteration | iterative_l1 | iterative_l2
  PseudoMode pseudo = PseudoMode::Explicit;
  double lambda = 1.0;
  AugmentConfig aug;  // aug.seed unused; derived per seed
  LossKind consistency_loss = LossKind::CrossEntropy;
};

struct MitigationConfig {
  BalanceMode mode = BalanceMode::None;
  std::map<std::string, int> grow_per_group;
  double grow_factor = 1.0;  // scales each group's labeled count; 1 = no growth
};

struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
  SslConfig ssl;
  MitigationConfig mitigation;
  double delta = 0.05;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int trace_every = 1;  // per-epoch trace stride; 0 disables the trace
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config: " + ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + key + "'");
  }
}

inline SynthConfig parse_synth(const json& j) {
  require_keys(j, {"num_classes", "dim", "test_per_group", "groups"}, "data.synth");
  SynthConfig cfg;
  cfg.num_classes = get_or(j, "num_classes", 2);
  cfg.dim = get_or(j, "dim", 2);
  if (!j.contains("groups") || !j.at("groups").is_array() || j.at("groups").empty())
    throw ConfigError("config: data.synth.groups must be a nonempty array");
  for (const auto& g : j.at("groups")) {
    require_keys(g, {"name", "class_means", "noise_scale", "n_labeled", "n_unlabeled"},
                 "data.synth.groups[]");
    SynthGroup sg;
    try {
      sg.name = g.at("name").get<std::string>();
      sg.class_means = g.at("class_means").get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
      throw ConfigError("config: each synth group needs a name and class_means matrix");
    }
    sg.noise_scale = get_or(g, "noise_scale", 1.0);
    sg.n_labeled = get_or(g, "n_labeled", 0);
    sg.n_unlabeled = get_or(g, "n_unlabeled", 0);
    cfg.groups.push_back(std::move(sg));
  }
  validate_synth_config(cfg);
  return cfg;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& j) {
  detail::require_keys(
      j, {"data", "train", "ssl", "mitigation", "delta", "seeds", "out_dir", "trace_every"},
      "top level");
  ExperimentConfig cfg;

  if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
  const json& data = j.at("data");
  detail::require_keys(data, {"synth", "csv"}, "data");
  if (data.contains("synth") == data.contains("csv"))
    throw ConfigError("config: data needs exactly one of 'synth' or 'csv'");
  if (data.contains("synth")) {
    cfg.data.is_synth = true;
    cfg.data.synth = detail::parse_synth(data.at("synth"));
    cfg.data.test_per_group = detail::get_or(data.at("synth"), "test_per_group", 1000);
    if (cfg.data.test_per_group < 1)
      throw ConfigError("config: test_per_group must be >= 1");
  } else {
    cfg.data.is_synth = false;
    const json& csv = data.at("csv");
    detail::require_keys(csv, {"train", "test", "num_classes", "dim"}, "data.csv");
    for (const char* k : {"train", "test", "num_classes", "dim"})
      if (!csv.contains(k)) throw ConfigError(std::string("config: data.csv needs '") + k + "'");
    try {
      cfg.data.csv_train = csv.at("train").get<std::string>();
      cfg.data.csv_test = csv.at("test").get<std::string>();
      cfg.data.num_classes = csv.at("num_classes").get<int>();
      cfg.data.dim = csv.at("dim").get<int>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value in data.csv");
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::require_keys(t,
                         {"epochs", "learning_rate", "batch_size", "init_scale", "architecture",
                          "hidden_units", "converge_tol", "converge_patience"},
                         "train");
    cfg.train.epochs = detail::get_or(t, "epochs", cfg.train.epochs);
    cfg.train.learning_rate = detail::get_or(t, "learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = detail::get_or(t, "batch_size", cfg.train.batch_size);
    cfg.train.init_scale = detail::get_or(t, "init_scale", cfg.train.init_scale);
    cfg.train.arch = architecture_from_string(
        detail::get_or<std::string>(t, "architecture", "softmax_linear"));
    cfg.train.hidden_units = detail::get_or(t, "hidden_units", cfg.train.hidden_units);
    cfg.train.converge_tol = detail::get_or(t, "converge_tol", 1e-5);
    cfg.train.converge_patience = detail::get_or(t, "converge_patience", 10);
  } else {
    cfg.train.converge_tol = 1e-5;
  }

  if (j.contains("ssl")) {
    const json& s = j.at("ssl");
    detail::require_keys(
        s, {"mode", "pseudo", "lambda", "sigma", "rounds", "sharpen", "temperature", "cr_loss"},
        "ssl");
    cfg.ssl.mode = detail::get_or<std::string>(s, "mode", "two_iteration");
    if (cfg.ssl.mode != "two_iteration" && cfg.ssl.mode != "iterative_l1" &&
        cfg.ssl.mode != "iterative_l2")
      throw ConfigError("config: unknown ssl.mode '" + cfg.ssl.mode + "'");
    std::string pseudo = detail::get_or<std::string>(s, "pseudo", "explicit");
    if (pseudo == "explicit")
      cfg.ssl.pseudo = PseudoMode::Explicit;
    else if (pseudo == "implicit")
      cfg.ssl.pseudo = PseudoMode::Implicit;
    else
      throw ConfigError("config: unknown ssl.pseudo '" + pseudo + "'");
    cfg.ssl.lambda = detail::get_or(s, "lambda", 1.0);
    cfg.ssl.aug.sigma = detail::get_or(s, "sigma", 0.0);
    cfg.ssl.aug.rounds = detail::get_or(s, "rounds", 1);
    std::string sharpen = detail::get_or<std::string>(s, "sharpen", "one_hot");
    if (sharpen == "one_hot")
      cfg.ssl.aug.sharpen = SharpenMode::OneHot;
    else if (sharpen == "temperature")
      cfg.ssl.aug.sharpen = SharpenMode::Temperature;
    else
      throw ConfigError("config: unknown ssl.sharpen '" + sharpen + "'");
    cfg.ssl.aug.temperature = detail::get_or(s, "temperature", 0.5);
    std::string cr = detail::get_or<std::string>(s, "cr_loss", "ce");
    if (cr == "ce")
      cfg.ssl.consistency_loss = LossKind::CrossEntropy;
    else if (cr == "mse")
      cfg.ssl.consistency_loss = LossKind::MseConsistency;
    else
      throw ConfigError("config: unknown ssl.cr_loss '" + cr + "'");
    validate_augment_config(cfg.ssl.aug);
  }

  if (j.contains("mitigation")) {
    const json& m = j.at("mitigation");
    detail::require_keys(m, {"mode", "grow_per_group", "grow_factor"}, "mitigation");
    cfg.mitigation.mode =
        balance_mode_from_string(detail::get_or<std::string>(m, "mode", "none"));
    if (m.contains("grow_per_group")) {
      try {
        cfg.mitigation.grow_per_group =
            m.at("grow_per_group").get<std::map<std::string, int>>();
      } catch (const json::exception&) {
        throw ConfigError("config: grow_per_group must map group names to counts");
      }
    }
    cfg.mitigation.grow_factor = detail::get_or(m, "grow_factor", 1.0);
    if (!(cfg.mitigation.grow_factor >= 1.0))
      throw ConfigError("config: grow_factor must be >= 1");
  }

  cfg.delta = detail::get_or(j, "delta", 0.05);
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
    throw ConfigError("config: delta must be in (0, 1)");
  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
    throw ConfigError("config: 'seeds' must be a nonempty array");
  for (const auto& s : j.at("seeds")) {
    if (!s.is_number_unsigned() && !s.is_number_integer())
      throw ConfigError("config: seeds must be integers");
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  {
    auto sorted = cfg.seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("config: duplicate seed in 'seeds'");
  }
  cfg.out_dir = detail::get_or<std::string>(j, "out_dir", "");
  cfg.trace_every = detail::get_or(j, "trace_every", 1);
  if (cfg.trace_every < 0) throw ConfigError("config: trace_every must be >= 0");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

inline std::filesystem::path seed_dir(const std::filesystem::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw ParseError(path.string() + ": write failed");
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

inline TrainConfig train_config_for(const ExperimentConfig& cfg, std::uint64_t seed,
                                    std::uint64_t tag) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, tag);
  return tc;
}

inline AugmentConfig augment_config_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  AugmentConfig aug = cfg.ssl.aug;
  aug.seed = derive_seed(seed, tags::kAugment);
  return aug;
}

}  // namespace detail

/// Writes seed_<s>/train.csv and seed_<s>/test.csv. Synthetic data is drawn
/// from per-seed derived streams (and grown when mitigation asks for it);
/// CSV-backed data is loaded, validated and re-emitted in canonical form.
inline void stage_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out,
                           std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  std::filesystem::create_directories(dir);
  Dataset train_ds, test_ds;
  if (cfg.data.is_synth) {
    SynthConfig synth = cfg.data.synth;
    synth.seed = derive_seed(seed, tags::kData);
    train_ds = generate_synthetic(synth);

    std::map<std::string, int> grow = cfg.mitigation.grow_per_group;
    if (cfg.mitigation.grow_factor > 1.0) {
      for (const auto& g : cfg.data.synth.groups)
        grow[g.name] +=
            static_cast<int>(std::llround((cfg.mitigation.grow_factor - 1.0) * g.n_labeled));
    }
    if (!grow.empty())
      train_ds = grow_labeled(train_ds, synth, grow, derive_seed(seed, tags::kGrow));

    SynthConfig test_cfg = cfg.data.synth;
    test_cfg.seed = derive_seed(seed, tags::kTest);
    for (auto& g : test_cfg.groups) {
      g.n_labeled = cfg.data.test_per_group;
      g.n_unlabeled = 0;
    }
    test_ds = generate_synthetic(test_cfg);
  } else {
    if (!cfg.mitigation.grow_per_group.empty() || cfg.mitigation.grow_factor > 1.0)
      throw ConfigError("grow_labeled needs a synthetic generator; csv data cannot grow");
    train_ds = load_csv(cfg.data.csv_train, cfg.data.num_classes, cfg.data.dim);
    test_ds = load_csv(cfg.data.csv_test, cfg.data.num_classes, cfg.data.dim);
  }
  save_csv(train_ds, (dir / "train.csv").string());
  save_csv(test_ds, (dir / "test.csv").string());
}

namespace detail {

struct LoadedSeed {
  Dataset train;
  Dataset test;
  std::vector<double> weights;
};

inline LoadedSeed load_seed_data(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                 std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  LoadedSeed ls;
  int num_classes = cfg.data.is_synth ? cfg.data.synth.num_classes : cfg.data.num_classes;
  int dim = cfg.data.is_synth ? cfg.data.synth.dim : cfg.data.dim;
  ls.train = load_csv((dir / "train.csv").string(), num_classes, dim);
  ls.test = load_csv((dir / "test.csv").string(), num_classes, dim);
  ls.weights = balance_weights(ls.train, cfg.mitigation.mode);
  return ls;
}

inline std::string trace_header(const std::vector<std::string>& groups) {
  std::string h = "epoch,sup_loss,unsup_loss";
  for (const auto& g : groups) h += ",acc_" + g;
  return h;
}

inline std::string trace_row(int epoch, double sup, double unsup,
                             const std::vector<std::string>& groups,
                             const std::map<std::string, double>& acc) {
  std::string row = std::to_string(epoch) + "," + sslab::detail::format_double(sup) + "," +
                    sslab::detail::format_double(unsup);
  for (const auto& g : groups) {
    auto it = acc.find(g);
    row += ",";
    if (it != acc.end()) row += sslab::detail::format_double(it->second);
  }
  return row;
}

}  // namespace detail

/// Trains the baseline, ideal and semi models for one seed and writes
/// baseline.model.txt, ideal.model.txt, semi.model.txt, pseudo.csv, trace.csv.
inline void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                        std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  auto ls = detail::load_seed_data(cfg, out, seed);
  TrainConfig tc = detail::train_config_for(cfg, seed, tags::kTrain);
  TrainConfig tc_ideal = detail::train_config_for(cfg, seed, tags::kIdeal);
  AugmentConfig aug = detail::augment_config_for(cfg, seed);

  std::ostringstream trace;
  trace << detail::trace_header(ls.train.groups) << "\n";
  auto group_acc = [&](const Classifier& c) {
    std::map<std::string, double> acc;
    for (const auto& g : ls.train.groups) {
      auto a = accuracy(c, ls.test.examples, g);
      if (a) acc[g] = *a;
    }
    return acc;
  };

  Classifier baseline, semi;
  PseudoDataset pseudo;
  if (cfg.ssl.mode == "two_iteration") {
    baseline = train_baseline(ls.train, tc, ls.weights);
    pseudo = build_pseudo_dataset(baseline, ls.train, aug, cfg.ssl.pseudo);
    // Trace of the second-stage training: mean loss over given vs pseudo rows
    // at each epoch's start, plus per-group test accuracy.
    std::vector<TrainExample> given_rows, pseudo_rows;
    for (std::size_t i = 0; i < pseudo.examples.size(); ++i) {
      const auto& e = pseudo.examples[i];
      TrainExample t{e.feature, e.reference, ls.weights[i]};
      (e.origin == Origin::Given ? given_rows : pseudo_rows).push_back(std::move(t));
    }
    EpochHook hook;
    if (cfg.trace_every > 0) {
      hook = [&](int epoch, const Classifier& c) {
        if (epoch % cfg.trace_every != 0) return;
        double sup = given_rows.empty() ? 0.0 : batch_loss(c, given_rows, LossKind::CrossEntropy);
        double unsup =
            pseudo_rows.empty() ? 0.0 : batch_loss(c, pseudo_rows, LossKind::CrossEntropy);
        trace << detail::trace_row(epoch, sup, unsup, ls.train.groups, group_acc(c)) << "\n";
      };
    }
    TrainConfig semi_cfg = tc;
    semi_cfg.seed = derive_seed(tc.seed, sslab::detail::kSemiInitTag);
    semi = train_on_pseudo(pseudo, semi_cfg, ls.weights, nullptr, hook);
  } else {
    baseline = train_baseline(ls.train, tc, ls.weights);
    pseudo = build_pseudo_dataset(baseline, ls.train, aug, cfg.ssl.pseudo);
    IterativeOptions opts;
    opts.mode = cfg.ssl.mode == "iterative_l1" ? IterativeMode::ExplicitL1
                                               : IterativeMode::ImplicitL2;
    opts.lambda = cfg.ssl.lambda;
    opts.consistency_loss = cfg.ssl.consistency_loss;
    std::vector<EpochTraceRow> rows;
    // evaluate the test set only at the trace stride
    int eval_calls = 0;
    EpochEval eval = [&](const Classifier& c) {
      return eval_calls++ % cfg.trace_every == 0 ? group_acc(c)
                                                 : std::map<std::string, double>{};
    };
    TrainConfig it_cfg = tc;
    it_cfg.seed = derive_seed(tc.seed, sslab::detail::kSemiInitTag);
    semi = train_iterative(ls.train, it_cfg, aug, opts, ls.weights, &rows,
                           cfg.trace_every > 0 ? &eval : nullptr);
    if (cfg.trace_every > 0)
      for (const auto& r : rows)
        if (r.epoch % cfg.trace_every == 0)
          trace << detail::trace_row(r.epoch, r.sup_loss, r.unsup_loss, ls.train.groups,
                                     r.group_acc)
                << "\n";
  }
  Classifier ideal = train_ideal(ls.train, tc_ideal, ls.weights);

  save_checkpoint(baseline, (dir / "baseline.model.txt").string());
  save_checkpoint(ideal, (dir / "ideal.model.txt").string());
  save_checkpoint(semi, (dir / "semi.model.txt").string());
  save_pseudo_csv(pseudo, (dir / "pseudo.csv").string());
  detail::write_text(dir / "trace.csv", trace.str());
}

/// Reads the three checkpoints plus test.csv and writes metrics.json.
inline void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out,
                           std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  auto ls = detail::load_seed_data(cfg, out, seed);
  Classifier baseline = load_checkpoint((dir / "baseline.model.txt").string());
  Classifier semi = load_checkpoint((dir / "semi.model.txt").string());
  Classifier ideal = load_checkpoint((dir / "ideal.model.txt").string());
  auto reports = subgroup_report(baseline, semi, ideal, ls.test.examples, ls.train.groups);
  detail::write_text(dir / "metrics.json", metrics_to_json(reports).dump(2) + "\n");
}

/// Reads pseudo.csv and the semi/baseline checkpoints and writes bounds.json,
/// including per-group benefit-ratio proxies.
inline void stage_bounds(const ExperimentConfig& cfg, const std::filesystem::path& out,
                         std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  auto ls = detail::load_seed_data(cfg, out, seed);
  int num_classes = ls.train.num_classes;
  PseudoDataset pseudo = load_pseudo_csv((dir / "pseudo.csv").string(), num_classes, ls.train.dim);
  for (const auto& e : pseudo.examples)
    if (e.origin != Origin::Given && !e.hidden_truth)
      throw ConfigError(
          "bounds need hidden_truth on every pseudo-labeled example; this bundle "
          "has unlabeled data without evaluation-only ground truth");
  Classifier semi = load_checkpoint((dir / "semi.model.txt").string());
  Classifier baseline = load_checkpoint((dir / "baseline.model.txt").string());
  BoundsReport r = compute_bounds(pseudo, semi, cfg.delta);
  auto holdout = accuracy(baseline, ls.test.examples);
  if (holdout) r.baseline_holdout_error = 1.0 - *holdout;
  json doc = bounds_to_json(r);

  // Per-group proxy of the benefit ratio from the bound quantities.
  doc["groups"] = json::array();
  for (const auto& g : ls.train.groups) {
    int n_group = 0, n_labeled = 0, n_pseudo = 0;
    double tv = 0.0;
    for (const auto& e : pseudo.examples) {
      if (e.group != g) continue;
      ++n_group;
      if (e.origin == Origin::Given) {
        ++n_labeled;
      } else {
        ++n_pseudo;
        tv += tv_distance(e.reference, SoftLabel::one_hot(num_classes, *e.hidden_truth));
      }
    }
    double eta_bar_group =
        n_group > 0 && n_pseudo > 0 ? (tv / n_pseudo) * (static_cast<double>(n_pseudo) / n_group)
                                    : 0.0;
    json entry = {{"group", g},
                  {"n", n_group},
                  {"n_labeled", n_labeled},
                  {"eta_bar", eta_bar_group},
                  {"complexity_gain", nullptr},
                  {"br_proxy", nullptr}};
    if (n_labeled >= 1 && n_group > n_labeled) {
      entry["complexity_gain"] = complexity_gain(n_group, n_labeled, cfg.delta);
      entry["br_proxy"] = br_proxy(eta_bar_group, n_group, n_labeled, cfg.delta);
    }
    doc["groups"].push_back(std::move(entry));
  }
  detail::write_text(dir / "bounds.json", doc.dump(2) + "\n");
}

struct SeedError {
  std::uint64_t seed = 0;
  std::string stage;
  std::string message;
};

/// Full pipeline for one seed. Any stage failure aborts just that seed and is
/// recorded in seed_<s>/error.json, so the aggregate can be rebuilt from the
/// per-seed files alone.
inline std::optional<SeedError> run_seed(const ExperimentConfig& cfg,
                                         const std::filesystem::path& out, std::uint64_t seed) {
  auto dir = seed_dir(out, seed);
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / "error.json");
  std::string stage = "gen-data";
  try {
    stage_gen_data(cfg, out, seed);
    stage = "train";
    stage_train(cfg, out, seed);
    stage = "evaluate";
    stage_evaluate(cfg, out, seed);
    stage = "bounds";
    stage_bounds(cfg, out, seed);
  } catch (const std::exception& e) {
    SeedError err{seed, stage, e.what()};
    detail::write_text(dir / "error.json",
                       json({{"seed", seed}, {"stage", stage}, {"message", err.message}}).dump(2) +
                           "\n");
    return err;
  }
  return std::nullopt;
}

/// Recomputes the aggregate document from the per-seed files alone.
inline json aggregate_from_files(const std::filesystem::path& out,
                                 const std::vector<std::uint64_t>& seeds) {
  json agg;
  agg["seeds"] = seeds;
  agg["errors"] = json::array();
  std::vector<std::uint64_t> ok_seeds;
  for (std::uint64_t s : seeds) {
    auto dir = seed_dir(out, s);
    if (std::filesystem::exists(dir / "error.json")) {
      agg["errors"].push_back(detail::read_json(dir / "error.json"));
    } else if (!std::filesystem::exists(dir / "metrics.json")) {
      agg["errors"].push_back(
          {{"seed", s}, {"stage", "evaluate"}, {"message", "metrics.json not found"}});
    } else {
      ok_seeds.push_back(s);
    }
  }

  std::vector<std::string> group_order;
  std::map<std::string, std::vector<double>> group_brs;
  std::map<std::string, std::vector<double>> group_acc[3];
  json per_seed = json::array();
  for (std::uint64_t s : ok_seeds) {
    json doc = detail::read_json(seed_dir(out, s) / "metrics.json");
    json row = {{"seed", s},
                {"br_std", doc.at("br_std")},
                {"br_gap", doc.at("br_gap")},
                {"n_negative_br", doc.at("n_negative_br")},
                {"n_undefined_br", doc.at("n_undefined_br")}};
    per_seed.push_back(row);
    for (const auto& g : doc.at("groups")) {
      std::string name = g.at("group").get<std::string>();
      if (std::find(group_order.begin(), group_order.end(), name) == group_order.end())
        group_order.push_back(name);
      if (!g.at("br").is_null()) group_brs[name].push_back(g.at("br").get<double>());
      const char* keys[3] = {"a_baseline", "a_semi", "a_ideal"};
      for (int i = 0; i < 3; ++i)
        if (!g.at(keys[i]).is_null()) group_acc[i][name].push_back(g.at(keys[i]).get<double>());
    }
  }
  agg["per_seed"] = per_seed;

  json per_group = json::object();
  for (const auto& g : group_order) {
    json entry;
    const auto& brs = group_brs[g];
    entry["n_defined_br"] = brs.size();
    entry["br_mean"] = brs.empty() ? json(nullptr) : json(group_mean(brs));
    entry["br_std"] = brs.size() < 2 ? json(nullptr) : json(group_std(brs));
    const char* keys[3] = {"a_baseline_mean", "a_semi_mean", "a_ideal_mean"};
    for (int i = 0; i < 3; ++i) {
      const auto& accs = group_acc[i][g];
      entry[keys[i]] = accs.empty() ? json(nullptr) : json(group_mean(accs));
    }
    per_group[g] = std::move(entry);
  }
  agg["per_group"] = per_group;
  agg["group_order"] = group_order;

  // Across-seed summaries of the per-seed spread statistics.
  std::vector<double> seed_stds;
  long long negatives = 0;
  for (const auto& row : per_seed) {
    if (!row.at("br_std").is_null()) seed_stds.push_back(row.at("br_std").get<double>());
    negatives += row.at("n_negative_br").get<long long>();
  }
  if (!seed_stds.empty()) {
    std::sort(seed_stds.begin(), seed_stds.end());
    std::size_t mid = seed_stds.size() / 2;
    double median = seed_stds.size() % 2 == 1
                        ? seed_stds[mid]
                        : 0.5 * (seed_stds[mid - 1] + seed_stds[mid]);
    agg["br_std_median"] = median;
    agg["br_std_mean"] = group_mean(seed_stds);
  } else {
    agg["br_std_median"] = nullptr;
    agg["br_std_mean"] = nullptr;
  }
  agg["n_negative_br_total"] = negatives;
  return agg;
}

/// Table with groups as columns and one row per bundle; SD column last.
/// Cell values are across-seed mean benefit ratios per group.
inline std::string render_table(const std::vector<std::filesystem::path>& bundles) {
  std::vector<std::string> group_order;
  struct Row {
    std::string label;
    std::map<std::string, double> br;
  };
  std::vector<Row> rows;
  for (const auto& dir : bundles) {
    json agg = detail::read_json(dir / "aggregate.json");
    Row row;
    row.label = dir.filename().empty() ? dir.string() : dir.filename().string();
    for (const auto& g : agg.at("group_order")) {
      std::string name = g.get<std::string>();
      if (std::find(group_order.begin(), group_order.end(), name) == group_order.end())
        group_order.push_back(name);
      const json& mean = agg.at("per_group").at(name).at("br_mean");
      if (!mean.is_null()) row.br[name] = mean.get<double>();
    }
    rows.push_back(std::move(row));
  }
  std::ostringstream out;
  out << "setting";
  for (const auto& g : group_order) out << "," << g;
  out << ",SD\n";
  for (const auto& row : rows) {
    out << row.label;
    std::vector<double> values;
    for (const auto& g : group_order) {
      out << ",";
      auto it = row.br.find(g);
      if (it != row.br.end()) {
        out << sslab::detail::format_double(it->second);
        values.push_back(it->second);
      }
    }
    out << ",";
    if (values.size() >= 2) out << sslab::detail::format_double(group_std(values));
    out << "\n";
  }
  return out.str();
}

/// Re-renders aggregate.json and table.csv from the per-seed files.
inline void write_report(const std::filesystem::path& out,
                         const std::vector<std::uint64_t>& seeds) {
  detail::write_text(out / "aggregate.json", aggregate_from_files(out, seeds).dump(2) + "\n");
  detail::write_text(out / "table.csv", render_table({out}));
}

/// Seeds present in a bundle directory, in numeric order.
inline std::vector<std::uint64_t> discover_seeds(const std::filesystem::path& out) {
  std::vector<std::uint64_t> seeds;
  if (!std::filesystem::is_directory(out)) throw ParseError(out.string() + ": not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(out)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0) continue;
    try {
      seeds.push_back(std::stoull(name.substr(5)));
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

/// Runs every seed (up to `jobs` concurrently), then aggregates. Seed
/// failures are recorded in the bundle; surviving seeds still aggregate.
inline std::vector<SeedError> run_experiment(const ExperimentConfig& cfg,
                                             const std::filesystem::path& out, int jobs = 1) {
  if (cfg.seeds.empty()) throw ConfigError("run: empty seed list");
  if (jobs < 1) throw ConfigError("run: jobs must be >= 1");
  {
    auto sorted = cfg.seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("run: duplicate seed in the seed list");
  }
  std::filesystem::create_directories(out);
  std::vector<SeedError> errors;
  for (std::size_t start = 0; start < cfg.seeds.size(); start += jobs) {
    std::size_t end = std::min(cfg.seeds.size(), start + static_cast<std::size_t>(jobs));
    std::vector<std::future<std::optional<SeedError>>> batch;
    for (std::size_t i = start; i < end; ++i)
      batch.push_back(std::async(std::launch::async,
                                 [&cfg, &out, seed = cfg.seeds[i]] { return run_seed(cfg, out, seed); }));
    for (auto& f : batch) {
      auto err = f.get();
      if (err) errors.push_back(*err);
    }
  }
  write_report(out, cfg.seeds);
  return errors;
}

/// Scales each group's labeled count to hit the requested totals and runs the
/// experiment once per size under out/labels_<n>. Emits sweep.csv with
/// across-group mean and SD of the across-seed accuracy and benefit ratio.
inline void run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      const std::vector<int>& label_totals, int jobs = 1) {
  if (!cfg.data.is_synth) throw ConfigError("sweep needs a synthetic data source");
  if (label_totals.empty()) throw ConfigError("sweep: empty label list");
  int base_total = 0;
  for (const auto& g : cfg.data.synth.groups) base_total += g.n_labeled;
  if (base_total < 1) throw ConfigError("sweep: base config has no labeled data");
  std::filesystem::create_directories(out);

  std::ostringstream sweep;
  sweep << "labels,acc_mean,acc_sd,br_mean,br_sd\n";
  for (int target : label_totals) {
    if (target < 1) throw ConfigError("sweep: label counts must be >= 1");
    ExperimentConfig scaled = cfg;
    double factor = static_cast<double>(target) / base_total;
    for (auto& g : scaled.data.synth.groups)
      if (g.n_labeled > 0)
        g.n_labeled = std::max(1, static_cast<int>(std::llround(factor * g.n_labeled)));
    auto dir = out / ("labels_" + std::to_string(target));
    run_experiment(scaled, dir, jobs);

    json agg = detail::read_json(dir / "aggregate.json");
    std::vector<double> acc_means, br_means;
    for (const auto& g : agg.at("group_order")) {
      const json& entry = agg.at("per_group").at(g.get<std::string>());
      if (!entry.at("a_semi_mean").is_null())
        acc_means.push_back(entry.at("a_semi_mean").get<double>());
      if (!entry.at("br_mean").is_null()) br_means.push_back(entry.at("br_mean").get<double>());
    }
    auto cell = [](const std::vector<double>& v, bool sd) -> std::string {
      if (v.empty() || (sd && v.size() < 2)) return "";
      return sslab::detail::format_double(sd ? group_std(v) : group_mean(v));
    };
    sweep << target << "," << cell(acc_means, false) << "," << cell(acc_means, true) << ","
          << cell(br_means, false) << "," << cell(br_means, true) << "\n";
  }
  detail::write_text(out / "sweep.csv", sweep.str());
}

}  // namespace sslab::harness
