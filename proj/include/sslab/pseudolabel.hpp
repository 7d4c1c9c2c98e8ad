#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sslab/dataset.hpp"
#include "sslab/errors.hpp"
#include "sslab/model.hpp"
#include "sslab/random.hpp"

namespace sslab {

enum class Origin { Given, ExplicitPseudo, ImplicitPseudo };

inline std::string to_string(Origin o) {
  switch (o) {
    case Origin::Given: return "given";
    case Origin::ExplicitPseudo: return "explicit";
    default: return "implicit";
  }
}
inline Origin origin_from_string(const std::string& s) {
  if (s == "given") return Origin::Given;
  if (s == "explicit") return Origin::ExplicitPseudo;
  if (s == "implicit") return Origin::ImplicitPseudo;
  throw ParseError("unknown origin '" + s + "'");
}

/// Entry of the reference-labeled dataset that semi-supervised training fits.
/// origin == Given implies the reference is the one-hot of the source label.
struct PseudoExample {
  std::vector<double> feature;
  SoftLabel reference;
  Origin origin = Origin::Given;
  std::string group;
  std::optional<int> hidden_truth;
};

struct PseudoDataset {
  std::vector<PseudoExample> examples;
  int num_classes = 0;
  int dim = 0;

  int n_given() const {
    int n = 0;
    for (const auto& e : examples) n += e.origin == Origin::Given ? 1 : 0;
    return n;
  }
  int n_pseudo() const { return static_cast<int>(examples.size()) - n_given(); }
};

enum class SharpenMode { OneHot, Temperature };
enum class PseudoMode { Explicit, Implicit };

inline std::string to_string(SharpenMode m) {
  return m == SharpenMode::OneHot ? "one_hot" : "temperature";
}
inline std::string to_string(PseudoMode m) {
  return m == PseudoMode::Explicit ? "explicit" : "implicit";
}

struct AugmentConfig {
  double sigma = 0.0;       // additive Gaussian noise scale, >= 0
  int rounds = 1;           // augmentation rounds per explicit pseudo-label
  SharpenMode sharpen = SharpenMode::OneHot;
  double temperature = 0.5;  // only for SharpenMode::Temperature, in (0, 1]
  std::uint64_t seed = 0;
};

inline void validate_augment_config(const AugmentConfig& cfg) {
  if (!(cfg.sigma >= 0.0)) throw ConfigError("augment config: sigma must be >= 0");
  if (cfg.rounds < 1) throw ConfigError("augment config: rounds must be >= 1");
  if (cfg.sharpen == SharpenMode::Temperature &&
      !(cfg.temperature > 0.0 && cfg.temperature <= 1.0))
    throw ConfigError("augment config: temperature must be in (0, 1]");
}

/// x' = x + sigma * z with z standard normal per coordinate.
inline std::vector<double> augment(std::span<const double> x, double sigma,
                                   std::mt19937_64& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (sigma > 0.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    for (double& v : out) v += sigma * z(rng);
  }
  return out;
}

/// Entropy-reducing map. OneHot collapses to the argmax (ties to the lowest
/// index); Temperature renormalizes probs[i]^(1/T).
inline SoftLabel sharpen(const SoftLabel& s, SharpenMode mode, double temperature = 0.5) {
  if (mode == SharpenMode::OneHot) return SoftLabel::one_hot(s.num_classes(), s.argmax_class());
  if (!(temperature > 0.0 && temperature <= 1.0))
    throw ConfigError("sharpen: temperature must be in (0, 1]");
  SoftLabel out;
  out.probs.resize(s.probs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    out.probs[i] = std::pow(std::max(s.probs[i], 0.0), 1.0 / temperature);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

/// Sharpened mean of `rounds` teacher outputs on independent augmentations.
/// The teacher is a frozen copy; nothing propagates back into it.
inline SoftLabel explicit_pseudo(const Classifier& teacher, std::span<const double> x,
                                 const AugmentConfig& cfg, std::mt19937_64& rng) {
  validate_augment_config(cfg);
  std::vector<double> mean(teacher.num_classes, 0.0);
  for (int m = 0; m < cfg.rounds; ++m) {
    SoftLabel out = teacher.forward(augment(x, cfg.sigma, rng));
    for (int i = 0; i < teacher.num_classes; ++i) mean[i] += out.probs[i];
  }
  for (double& v : mean) v /= cfg.rounds;
  return sharpen(SoftLabel(std::move(mean)), cfg.sharpen, cfg.temperature);
}

/// Teacher output on one augmented copy, unsharpened.
inline SoftLabel implicit_pseudo(const Classifier& teacher, std::span<const double> x,
                                 const AugmentConfig& cfg, std::mt19937_64& rng) {
  validate_augment_config(cfg);
  return teacher.forward(augment(x, cfg.sigma, rng));
}

/// Builds the reference-labeled dataset: labeled examples become one-hot
/// `given` entries, unlabeled ones get pseudo references per `mode`. Order,
/// group and hidden_truth carry through from the source dataset. Each example
/// gets its own child rng stream, so the result is independent of evaluation
/// order.
inline PseudoDataset build_pseudo_dataset(const Classifier& teacher, const Dataset& ds,
                                          const AugmentConfig& cfg, PseudoMode mode) {
  validate_augment_config(cfg);
  if (teacher.num_classes != ds.num_classes || teacher.dim != ds.dim)
    throw ConfigError("build_pseudo_dataset: teacher and dataset disagree on K or d");
  PseudoDataset out;
  out.num_classes = ds.num_classes;
  out.dim = ds.dim;
  out.examples.reserve(ds.examples.size());
  for (std::size_t n = 0; n < ds.examples.size(); ++n) {
    const Example& e = ds.examples[n];
    PseudoExample p;
    p.feature = e.feature;
    p.group = e.group;
    p.hidden_truth = e.hidden_truth;
    if (e.label) {
      p.reference = SoftLabel::one_hot(ds.num_classes, *e.label);
      p.origin = Origin::Given;
    } else {
      auto rng = child_rng(cfg.seed, n);
      if (mode == PseudoMode::Explicit) {
        p.reference = explicit_pseudo(teacher, e.feature, cfg, rng);
        p.origin = Origin::ExplicitPseudo;
      } else {
        p.reference = implicit_pseudo(teacher, e.feature, cfg, rng);
        p.origin = Origin::ImplicitPseudo;
      }
    }
    out.examples.push_back(std::move(p));
  }
  return out;
}

/// Oracle-teacher variant: pseudo references are the one-hot hidden truth.
/// Evaluation-only; requires hidden_truth on every unlabeled example.
inline PseudoDataset build_pseudo_dataset_from_truth(const Dataset& ds) {
  PseudoDataset out;
  out.num_classes = ds.num_classes;
  out.dim = ds.dim;
  out.examples.reserve(ds.examples.size());
  for (const Example& e : ds.examples) {
    PseudoExample p;
    p.feature = e.feature;
    p.group = e.group;
    p.hidden_truth = e.hidden_truth;
    if (e.label) {
      p.reference = SoftLabel::one_hot(ds.num_classes, *e.label);
      p.origin = Origin::Given;
    } else {
      if (!e.hidden_truth)
        throw ConfigError("oracle pseudo dataset requires hidden_truth on unlabeled examples");
      p.reference = SoftLabel::one_hot(ds.num_classes, *e.hidden_truth);
      p.origin = Origin::ExplicitPseudo;
    }
    out.examples.push_back(std::move(p));
  }
  return out;
}

inline std::string pseudo_csv_header(int dim, int num_classes) {
  std::string h;
  for (int j = 0; j < dim; ++j) h += "f" + std::to_string(j) + ",";
  h += "label,group,hidden_truth";
  for (int i = 0; i < num_classes; ++i) h += ",ref_" + std::to_string(i);
  h += ",origin";
  return h;
}

/// Dataset CSV schema extended with ref_0..ref_{K-1} and origin columns.
inline void save_pseudo_csv(const PseudoDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << pseudo_csv_header(ds.dim, ds.num_classes) << "\n";
  for (const auto& e : ds.examples) {
    for (int j = 0; j < ds.dim; ++j) out << detail::format_double(e.feature[j]) << ",";
    if (e.origin == Origin::Given) out << e.reference.argmax_class();
    out << "," << e.group << ",";
    if (e.hidden_truth) out << *e.hidden_truth;
    for (int i = 0; i < ds.num_classes; ++i)
      out << "," << detail::format_double(e.reference.probs[i]);
    out << "," << to_string(e.origin) << "\n";
  }
  if (!out) throw ParseError(path + ": write failed");
}

inline PseudoDataset load_pseudo_csv(const std::string& path, int num_classes, int dim) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  PseudoDataset ds;
  ds.num_classes = num_classes;
  ds.dim = dim;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  if (detail::split_csv_line(line) != detail::split_csv_line(pseudo_csv_header(dim, num_classes)))
    throw ParseError(path + ":1: header does not match pseudo-dataset schema");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto tok = detail::split_csv_line(line);
    int expected = dim + 3 + num_classes + 1;
    if (static_cast<int>(tok.size()) != expected)
      throw ParseError(where + ": expected " + std::to_string(expected) + " columns, got " +
                       std::to_string(tok.size()));
    PseudoExample e;
    e.feature.resize(dim);
    for (int j = 0; j < dim; ++j) e.feature[j] = detail::parse_double(tok[j], where);
    e.group = tok[dim + 1];
    if (e.group.empty()) throw ParseError(where + ": empty group");
    if (!tok[dim + 2].empty()) {
      int v = detail::parse_int(tok[dim + 2], where);
      if (v < 1 || v > num_classes) throw ParseError(where + ": hidden_truth out of range");
      e.hidden_truth = v;
    }
    e.reference.probs.resize(num_classes);
    for (int i = 0; i < num_classes; ++i)
      e.reference.probs[i] = detail::parse_double(tok[dim + 3 + i], where);
    if (!e.reference.is_valid(1e-6)) throw ParseError(where + ": reference is not on the simplex");
    e.origin = origin_from_string(tok[dim + 3 + num_classes]);
    if (e.origin == Origin::Given && !e.reference.is_one_hot(1e-9))
      throw ParseError(where + ": given entry must carry a one-hot reference");
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

}  // namespace sslab
