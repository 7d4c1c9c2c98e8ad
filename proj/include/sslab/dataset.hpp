#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sslab/errors.hpp"
#include "sslab/random.hpp"

namespace sslab {

namespace detail {

// 17 significant digits round-trips IEEE doubles through decimal text.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(where + ": bad number '" + tok + "'");
  }
  if (pos != tok.size() || !std::isfinite(v))
    throw ParseError(where + ": bad number '" + tok + "'");
  return v;
}

inline int parse_int(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(where + ": bad integer '" + tok + "'");
  }
  if (pos != tok.size()) throw ParseError(where + ": bad integer '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// One observation. Classes are 1-based; `label` absent means unlabeled.
/// `hidden_truth` is evaluation-only ground truth for unlabeled examples;
/// it must never feed training.
struct Example {
  std::vector<double> feature;
  std::optional<int> label;
  std::string group;
  std::optional<int> hidden_truth;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 0;
  int dim = 0;
  std::vector<std::string> groups;  // distinct ids, first-appearance order

  int n_labeled() const {
    int n = 0;
    for (const auto& e : examples) n += e.label.has_value() ? 1 : 0;
    return n;
  }
  int n_unlabeled() const { return static_cast<int>(examples.size()) - n_labeled(); }
  bool has_group(const std::string& g) const {
    return std::find(groups.begin(), groups.end(), g) != groups.end();
  }
};

/// Gaussian class-conditional generator for one sub-population.
/// Smaller class-mean separation relative to noise_scale makes the group harder.
struct SynthGroup {
  std::string name;
  std::vector<std::vector<double>> class_means;  // K vectors of length dim
  double noise_scale = 1.0;
  int n_labeled = 0;
  int n_unlabeled = 0;
};

struct SynthConfig {
  int num_classes = 2;
  int dim = 2;
  std::vector<SynthGroup> groups;
  std::uint64_t seed = 0;
};

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("synth config: num_classes must be >= 2");
  if (cfg.dim < 1) throw ConfigError("synth config: dim must be >= 1");
  if (cfg.groups.empty()) throw ConfigError("synth config: at least one group required");
  for (const auto& g : cfg.groups) {
    if (g.name.empty()) throw ConfigError("synth config: empty group name");
    if (!(g.noise_scale > 0.0))
      throw ConfigError("synth config: group '" + g.name + "' noise_scale must be > 0");
    if (g.n_labeled < 0 || g.n_unlabeled < 0)
      throw ConfigError("synth config: group '" + g.name + "' counts must be >= 0");
    if (static_cast<int>(g.class_means.size()) != cfg.num_classes)
      throw ConfigError("synth config: group '" + g.name + "' needs one mean per class");
    for (const auto& m : g.class_means) {
      if (static_cast<int>(m.size()) != cfg.dim)
        throw ConfigError("synth config: group '" + g.name + "' mean has wrong dimension");
      for (double v : m)
        if (!std::isfinite(v))
          throw ConfigError("synth config: group '" + g.name + "' mean has non-finite entry");
    }
  }
}

namespace detail {

inline Example draw_example(const SynthGroup& g, int cls, int dim, std::mt19937_64& rng,
                            bool labeled) {
  std::normal_distribution<double> z(0.0, 1.0);
  Example e;
  e.feature.resize(dim);
  for (int j = 0; j < dim; ++j) e.feature[j] = g.class_means[cls - 1][j] + g.noise_scale * z(rng);
  e.group = g.name;
  e.hidden_truth = cls;
  if (labeled) e.label = cls;
  return e;
}

}  // namespace detail

/// Pure function of the config: same seed, same bytes. Labeled examples carry
/// label == hidden_truth; unlabeled carry only hidden_truth. Classes are dealt
/// round-robin within each partition so per-class counts are exact.
inline Dataset generate_synthetic(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.dim = cfg.dim;
  std::mt19937_64 rng(cfg.seed);
  for (const auto& g : cfg.groups) {
    ds.groups.push_back(g.name);
    for (int i = 0; i < g.n_labeled; ++i)
      ds.examples.push_back(detail::draw_example(g, i % cfg.num_classes + 1, cfg.dim, rng, true));
    for (int i = 0; i < g.n_unlabeled; ++i)
      ds.examples.push_back(detail::draw_example(g, i % cfg.num_classes + 1, cfg.dim, rng, false));
  }
  return ds;
}

struct GroupCounts {
  int n_labeled = 0;
  int n_unlabeled = 0;
};

inline std::map<std::string, GroupCounts> group_counts(const Dataset& ds) {
  std::map<std::string, GroupCounts> out;
  for (const auto& g : ds.groups) out[g];  // groups with zero examples still appear
  for (const auto& e : ds.examples) {
    auto& c = out[e.group];
    if (e.label)
      ++c.n_labeled;
    else
      ++c.n_unlabeled;
  }
  return out;
}

inline std::string csv_header(int dim) {
  std::string h;
  for (int j = 0; j < dim; ++j) h += "f" + std::to_string(j) + ",";
  h += "label,group,hidden_truth";
  return h;
}

/// Schema: f0,...,f{d-1},label,group,hidden_truth. Labels are 1-based or empty.
inline Dataset load_csv(const std::string& path, int num_classes, int dim) {
  if (num_classes < 2) throw ConfigError("load_csv: num_classes must be >= 2");
  if (dim < 1) throw ConfigError("load_csv: dim must be >= 1");
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.dim = dim;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  if (detail::split_csv_line(line) != detail::split_csv_line(csv_header(dim)))
    throw ParseError(path + ":1: header does not match schema for dim=" + std::to_string(dim));
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto tok = detail::split_csv_line(line);
    if (static_cast<int>(tok.size()) != dim + 3)
      throw ParseError(where + ": expected " + std::to_string(dim + 3) + " columns, got " +
                       std::to_string(tok.size()));
    Example e;
    e.feature.resize(dim);
    for (int j = 0; j < dim; ++j) e.feature[j] = detail::parse_double(tok[j], where);
    auto parse_class = [&](const std::string& t, const char* col) -> std::optional<int> {
      if (t.empty()) return std::nullopt;
      int v = detail::parse_int(t, where);
      if (v < 1 || v > num_classes)
        throw ParseError(where + ": " + col + " " + t + " outside 1.." +
                         std::to_string(num_classes));
      return v;
    };
    e.label = parse_class(tok[dim], "label");
    e.group = tok[dim + 1];
    if (e.group.empty()) throw ParseError(where + ": empty group");
    e.hidden_truth = parse_class(tok[dim + 2], "hidden_truth");
    if (!ds.has_group(e.group)) ds.groups.push_back(e.group);
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << csv_header(ds.dim) << "\n";
  for (const auto& e : ds.examples) {
    if (e.group.find(',') != std::string::npos || e.group.find('\n') != std::string::npos)
      throw ConfigError("save_csv: group id '" + e.group + "' contains a delimiter");
    for (int j = 0; j < ds.dim; ++j) out << detail::format_double(e.feature[j]) << ",";
    if (e.label) out << *e.label;
    out << "," << e.group << ",";
    if (e.hidden_truth) out << *e.hidden_truth;
    out << "\n";
  }
  if (!out) throw ParseError(path + ": write failed");
}

}  // namespace sslab
