#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslab/dataset.hpp"
#include "sslab/model.hpp"

namespace sslab {

// Below this denominator magnitude the benefit ratio is reported as undefined.
constexpr double kBrDenominatorEps = 1e-6;

/// Per-group accuracies of the three training regimes plus their benefit
/// ratio. n_test == 0 flags a group missing from the evaluation set.
struct SubPopReport {
  std::string group;
  std::optional<double> a_baseline;
  std::optional<double> a_semi;
  std::optional<double> a_ideal;
  std::optional<double> br;
  int n_test = 0;
};

/// Normalized accuracy improvement (a_semi - a_baseline) / (a_ideal - a_baseline).
/// Undefined when the denominator is within kBrDenominatorEps of zero.
inline std::optional<double> benefit_ratio(double a_baseline, double a_semi, double a_ideal) {
  for (double a : {a_baseline, a_semi, a_ideal})
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("benefit_ratio: accuracies must lie in [0, 1]");
  double denom = a_ideal - a_baseline;
  if (std::abs(denom) < kBrDenominatorEps) return std::nullopt;
  return (a_semi - a_baseline) / denom;
}

/// One report per requested group, evaluated on the test set.
inline std::vector<SubPopReport> subgroup_report(const Classifier& baseline,
                                                 const Classifier& semi, const Classifier& ideal,
                                                 const std::vector<Example>& test,
                                                 const std::vector<std::string>& groups) {
  std::vector<SubPopReport> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    SubPopReport r;
    r.group = g;
    for (const auto& e : test) r.n_test += e.group == g ? 1 : 0;
    r.a_baseline = accuracy(baseline, test, g);
    r.a_semi = accuracy(semi, test, g);
    r.a_ideal = accuracy(ideal, test, g);
    if (r.a_baseline && r.a_semi && r.a_ideal)
      r.br = benefit_ratio(*r.a_baseline, *r.a_semi, *r.a_ideal);
    out.push_back(std::move(r));
  }
  return out;
}

/// Largest pairwise benefit-ratio gap; zero means every group benefits
/// equally. Undefined entries are excluded; fewer than two defined ratios
/// yield nullopt.
inline std::optional<double> equalized_br_gap(const std::vector<SubPopReport>& reports) {
  std::vector<double> brs;
  for (const auto& r : reports)
    if (r.br) brs.push_back(*r.br);
  if (brs.size() < 2) return std::nullopt;
  auto [lo, hi] = std::minmax_element(brs.begin(), brs.end());
  return *hi - *lo;
}

inline double group_mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("group_mean: empty input");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

/// Sample standard deviation (n-1 divisor).
inline double group_std(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("group_std: needs at least two values");
  double mean = group_mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

/// Report document:
/// {groups:[{group, a_baseline, a_semi, a_ideal, br, n_test}],
///  br_mean, br_std, br_gap, n_negative_br, n_undefined_br}
inline nlohmann::json metrics_to_json(const std::vector<SubPopReport>& reports) {
  nlohmann::json doc;
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  doc["groups"] = nlohmann::json::array();
  std::vector<double> brs;
  int n_negative = 0, n_undefined = 0;
  for (const auto& r : reports) {
    doc["groups"].push_back({{"group", r.group},
                             {"a_baseline", opt(r.a_baseline)},
                             {"a_semi", opt(r.a_semi)},
                             {"a_ideal", opt(r.a_ideal)},
                             {"br", opt(r.br)},
                             {"n_test", r.n_test}});
    if (r.br) {
      brs.push_back(*r.br);
      n_negative += *r.br < 0.0 ? 1 : 0;
    } else {
      ++n_undefined;
    }
  }
  doc["br_mean"] = brs.empty() ? nlohmann::json(nullptr) : nlohmann::json(group_mean(brs));
  doc["br_std"] = brs.size() < 2 ? nlohmann::json(nullptr) : nlohmann::json(group_std(brs));
  auto gap = equalized_br_gap(reports);
  doc["br_gap"] = opt(gap);
  doc["n_negative_br"] = n_negative;
  doc["n_undefined_br"] = n_undefined;
  return doc;
}

inline std::vector<SubPopReport> metrics_from_json(const nlohmann::json& doc) {
  std::vector<SubPopReport> out;
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  for (const auto& g : doc.at("groups")) {
    SubPopReport r;
    r.group = g.at("group").get<std::string>();
    r.a_baseline = opt(g.at("a_baseline"));
    r.a_semi = opt(g.at("a_semi"));
    r.a_ideal = opt(g.at("a_ideal"));
    r.br = opt(g.at("br"));
    r.n_test = g.at("n_test").get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sslab
