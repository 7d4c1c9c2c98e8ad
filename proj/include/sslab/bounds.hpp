#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sslab/model.hpp"
#include "sslab/pseudolabel.hpp"

namespace sslab {

/// Total-variation distance between a reference label distribution and the
/// true label distribution at one feature: half the L1 distance.
inline double tv_distance(const SoftLabel& reference, const SoftLabel& truth) {
  if (reference.num_classes() != truth.num_classes())
    throw std::invalid_argument("tv_distance: class-count mismatch");
  double s = 0.0;
  for (int i = 0; i < reference.num_classes(); ++i)
    s += std::abs(reference.probs[i] - truth.probs[i]);
  return 0.5 * s;
}

struct ConfidentNoiseIdentity {
  double tv = 0.0;          // total variation against the one-hot truth
  double error_rate = 0.0;  // 1 - reference[confident class]
  bool equal = false;       // the two coincide (within 1e-12) for confident truth
};

/// With a confident truth (probability 1 on `confident_class`), the TV
/// distance equals the reference's error rate at that feature.
inline ConfidentNoiseIdentity confident_noise_identity(const SoftLabel& reference,
                                                       int confident_class) {
  if (confident_class < 1 || confident_class > reference.num_classes())
    throw std::invalid_argument("confident_noise_identity: class out of range");
  ConfidentNoiseIdentity out;
  out.tv = tv_distance(reference, SoftLabel::one_hot(reference.num_classes(), confident_class));
  out.error_rate = 1.0 - reference.probs[confident_class - 1];
  out.equal = std::abs(out.tv - out.error_rate) <= 1e-12;
  return out;
}

/// Label-error statistics of a reference-labeled dataset, measured against
/// hidden ground truth on the pseudo entries.
struct LabelErrorStats {
  double tv_mean = 0.0;        // mean TV over pseudo entries
  double mismatch_mean = 0.0;  // mean of 1{argmax(reference) != truth} over pseudo entries
  double expected_label_error = 0.0;  // tv_mean * n_pseudo / n_total
  int n_pseudo = 0;
  int n_total = 0;
};

inline LabelErrorStats pseudo_label_error_stats(const PseudoDataset& ds) {
  LabelErrorStats s;
  s.n_total = static_cast<int>(ds.examples.size());
  for (const auto& e : ds.examples) {
    if (e.origin == Origin::Given) continue;
    if (!e.hidden_truth)
      throw std::invalid_argument(
          "pseudo_label_error_stats: pseudo entry lacks hidden_truth; "
          "label-error statistics need evaluation-only ground truth");
    ++s.n_pseudo;
    s.tv_mean += tv_distance(e.reference, SoftLabel::one_hot(ds.num_classes, *e.hidden_truth));
    s.mismatch_mean += e.reference.argmax_class() != *e.hidden_truth ? 1.0 : 0.0;
  }
  if (s.n_pseudo > 0) {
    s.tv_mean /= s.n_pseudo;
    s.mismatch_mean /= s.n_pseudo;
  }
  s.expected_label_error =
      s.n_total > 0 ? s.tv_mean * static_cast<double>(s.n_pseudo) / s.n_total : 0.0;
  return s;
}

/// Mean over the dataset of sum_i reference[i] * 1{predict(x) == i}: the
/// classifier's expected agreement with the stochastic reference labels.
inline double reference_accuracy(const Classifier& c, const PseudoDataset& ds) {
  if (ds.examples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : ds.examples) s += e.reference.probs[c.predict(e.feature) - 1];
  return s / static_cast<double>(ds.examples.size());
}

/// Bounds on the clean-vs-reference risk gap:
///   (2*a_tilde - 1) * e_bar  <=  gap  <=  tv_bar.
inline std::pair<double, double> risk_gap_bounds(double a_tilde, double e_bar, double tv_bar) {
  for (double v : {a_tilde, e_bar, tv_bar})
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("risk_gap_bounds: inputs must lie in [0, 1]");
  return {(2.0 * a_tilde - 1.0) * e_bar, tv_bar};
}

/// Small discrete world with explicit distributions: feature marginal,
/// true and reference label conditionals, and a deterministic classifier
/// table. Everything about it can be computed exactly by enumeration.
struct DiscreteInstance {
  std::vector<double> p_x;
  std::vector<std::vector<double>> p_y_given_x;       // per feature: K-simplex
  std::vector<std::vector<double>> p_ytilde_given_x;  // per feature: K-simplex
  std::vector<int> f_of_x;                            // 1-based class per feature
};

struct RiskGapCheck {
  double gap = 0.0;    // clean risk minus reference risk, exact
  double lower = 0.0;  // (2*a_tilde - 1) * e_bar
  double upper = 0.0;  // tv_bar
  double a_tilde = 0.0;
  double e_bar = 0.0;
  double tv_bar = 0.0;
  bool holds = false;  // lower - 1e-12 <= gap <= upper + 1e-12
};

namespace detail {

inline void validate_simplex(const std::vector<double>& p, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0 + 1e-12))
      throw std::invalid_argument(what + ": entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument(what + ": does not sum to 1");
}

}  // namespace detail

/// Exhaustive check of the risk-gap sandwich on a discrete instance. The
/// reference labels are drawn conditionally independently of the true labels
/// given the feature.
inline RiskGapCheck check_risk_gap(const DiscreteInstance& inst) {
  std::size_t n = inst.p_x.size();
  if (n == 0 || inst.p_y_given_x.size() != n || inst.p_ytilde_given_x.size() != n ||
      inst.f_of_x.size() != n)
    throw std::invalid_argument("check_risk_gap: inconsistent instance sizes");
  detail::validate_simplex(inst.p_x, "p_x");
  std::size_t num_classes = inst.p_y_given_x[0].size();
  for (std::size_t j = 0; j < n; ++j) {
    if (inst.p_y_given_x[j].size() != num_classes ||
        inst.p_ytilde_given_x[j].size() != num_classes)
      throw std::invalid_argument("check_risk_gap: class-count mismatch");
    detail::validate_simplex(inst.p_y_given_x[j], "p_y_given_x");
    detail::validate_simplex(inst.p_ytilde_given_x[j], "p_ytilde_given_x");
    if (inst.f_of_x[j] < 1 || inst.f_of_x[j] > static_cast<int>(num_classes))
      throw std::invalid_argument("check_risk_gap: classifier table entry out of range");
  }

  RiskGapCheck out;
  double risk_clean = 0.0, risk_ref = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    int f = inst.f_of_x[j] - 1;
    const auto& py = inst.p_y_given_x[j];
    const auto& pt = inst.p_ytilde_given_x[j];
    risk_clean += inst.p_x[j] * (1.0 - py[f]);
    risk_ref += inst.p_x[j] * (1.0 - pt[f]);
    out.a_tilde += inst.p_x[j] * pt[f];
    double agree = 0.0, l1 = 0.0;
    for (std::size_t i = 0; i < num_classes; ++i) {
      agree += py[i] * pt[i];
      l1 += std::abs(py[i] - pt[i]);
    }
    out.e_bar += inst.p_x[j] * (1.0 - agree);
    out.tv_bar += inst.p_x[j] * 0.5 * l1;
  }
  out.gap = risk_clean - risk_ref;
  auto [lo, hi] = risk_gap_bounds(std::clamp(out.a_tilde, 0.0, 1.0),
                                  std::clamp(out.e_bar, 0.0, 1.0),
                                  std::clamp(out.tv_bar, 0.0, 1.0));
  out.lower = lo;
  out.upper = hi;
  out.holds = out.lower - 1e-12 <= out.gap && out.gap <= out.upper + 1e-12;
  return out;
}

/// Sample-complexity term sqrt(2 ln(4/delta) / n).
inline double hoeffding_term(int n, double delta) {
  if (n < 1) throw std::invalid_argument("hoeffding_term: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("hoeffding_term: delta must be in (0, 1)");
  return std::sqrt(2.0 * std::log(4.0 / delta) / n);
}

/// Error upper bound for supervised training on n_labeled clean examples.
inline double supervised_bound(int n_labeled, double delta, double sharpness_clean) {
  if (!(sharpness_clean >= 0.0 && sharpness_clean <= 1.0))
    throw std::invalid_argument("supervised_bound: sharpness must lie in [0, 1]");
  return hoeffding_term(n_labeled, delta) + sharpness_clean;
}

/// Error upper bound for training on the n-example reference-labeled dataset:
/// expected label error + reference sharpness + sample-complexity term.
inline double ssl_bound(double expected_label_error, double sharpness_noisy, int n,
                        double delta) {
  for (double v : {expected_label_error, sharpness_noisy})
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("ssl_bound: probabilities must lie in [0, 1]");
  return expected_label_error + sharpness_noisy + hoeffding_term(n, delta);
}

/// Sample-complexity gain from pseudo-labeling a group: the drop in the
/// Hoeffding term when the group's n_labeled grows to its full n.
inline double complexity_gain(int n_group, int n_group_labeled, double delta) {
  if (n_group_labeled < 1 || n_group <= n_group_labeled)
    throw std::invalid_argument("complexity_gain: need n_group > n_group_labeled >= 1");
  return hoeffding_term(n_group_labeled, delta) - hoeffding_term(n_group, delta);
}

/// Bound-derived benefit-ratio proxy: 1 - expected_label_error / gain.
/// Negative iff the label-error cost outweighs the sample-complexity gain.
inline double br_proxy(double expected_label_error, int n_group, int n_group_labeled,
                       double delta) {
  if (!(expected_label_error >= 0.0 && expected_label_error <= 1.0))
    throw std::invalid_argument("br_proxy: label error must lie in [0, 1]");
  return 1.0 - expected_label_error / complexity_gain(n_group, n_group_labeled, delta);
}

/// Every computable bound quantity for one experiment, in one document.
struct BoundsReport {
  double eta_bar_prime = 0.0;  // mean reference-vs-truth TV over pseudo entries
  double eta_bar = 0.0;        // eta_bar_prime scaled by n_pseudo / n_total
  double e_bar = 0.0;          // mean argmax mismatch over pseudo entries
  double a_tilde = 0.0;        // classifier agreement with the references
  double sharpness = 0.0;      // mean (1 - max reference prob) over pseudo entries
  std::optional<double> hoeffding_L;  // absent when the dataset has no given entries
  double hoeffding_N = 0.0;
  std::optional<double> supervised_ub;
  double ssl_ub = 0.0;
  double term1_lower = 0.0;
  double term1_upper = 0.0;
  double delta = 0.05;
  // Held-out error of the baseline model, when a test set was available; the
  // second reading of the supervised error next to the pseudo-measured one.
  std::optional<double> baseline_holdout_error;
};

/// Assembles the report from a reference-labeled dataset and the classifier
/// trained on it. Requires hidden_truth on every pseudo entry.
inline BoundsReport compute_bounds(const PseudoDataset& ds, const Classifier& trained,
                                   double delta, double sharpness_clean = 0.0) {
  if (ds.examples.empty()) throw std::invalid_argument("compute_bounds: empty dataset");
  BoundsReport r;
  r.delta = delta;
  LabelErrorStats stats = pseudo_label_error_stats(ds);
  r.eta_bar_prime = stats.tv_mean;
  r.eta_bar = stats.expected_label_error;
  r.e_bar = stats.mismatch_mean;
  r.a_tilde = reference_accuracy(trained, ds);
  double sharp = 0.0;
  for (const auto& e : ds.examples) {
    if (e.origin == Origin::Given) continue;
    sharp += 1.0 - *std::max_element(e.reference.probs.begin(), e.reference.probs.end());
  }
  r.sharpness = stats.n_pseudo > 0 ? sharp / stats.n_pseudo : 0.0;
  int n_given = ds.n_given();
  if (n_given >= 1) {
    r.hoeffding_L = hoeffding_term(n_given, delta);
    r.supervised_ub = supervised_bound(n_given, delta, sharpness_clean);
  }
  r.hoeffding_N = hoeffding_term(stats.n_total, delta);
  r.ssl_ub = ssl_bound(r.eta_bar, r.sharpness, stats.n_total, delta);
  auto [lo, hi] = risk_gap_bounds(r.a_tilde, r.e_bar, r.eta_bar_prime);
  r.term1_lower = lo;
  r.term1_upper = hi;
  return r;
}

inline nlohmann::json bounds_to_json(const BoundsReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"eta_bar_prime", r.eta_bar_prime},
          {"eta_bar", r.eta_bar},
          {"e_bar", r.e_bar},
          {"a_tilde", r.a_tilde},
          {"sharpness", r.sharpness},
          {"hoeffding_L", opt(r.hoeffding_L)},
          {"hoeffding_N", r.hoeffding_N},
          {"supervised_ub", opt(r.supervised_ub)},
          {"ssl_ub", r.ssl_ub},
          {"term1_lower", r.term1_lower},
          {"term1_upper", r.term1_upper},
          {"delta", r.delta},
          {"baseline_holdout_error", opt(r.baseline_holdout_error)}};
}

}  // namespace sslab
