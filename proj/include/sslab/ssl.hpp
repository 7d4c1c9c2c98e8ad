#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sslab/dataset.hpp"
#include "sslab/errors.hpp"
#include "sslab/model.hpp"
#include "sslab/pseudolabel.hpp"
#include "sslab/random.hpp"

namespace sslab {

namespace detail {

constexpr std::uint64_t kSemiInitTag = 0x73656d69ULL;

inline std::vector<TrainExample> labeled_train_set(const Dataset& ds,
                                                   std::span<const double> weights) {
  if (!weights.empty() && weights.size() != ds.examples.size())
    throw ConfigError("weights must align with the dataset");
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& e = ds.examples[i];
    if (!e.label) continue;
    TrainExample t;
    t.feature = e.feature;
    t.target = SoftLabel::one_hot(ds.num_classes, *e.label);
    t.weight = weights.empty() ? 1.0 : weights[i];
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

/// Supervised training on the labeled part only.
inline Classifier train_baseline(const Dataset& ds, const TrainConfig& cfg,
                                 std::span<const double> weights = {}) {
  auto data = detail::labeled_train_set(ds, weights);
  if (data.empty()) throw ConfigError("train_baseline: no labeled examples");
  return train(data, cfg, LossKind::CrossEntropy);
}

/// Supervised training with every example's ground truth revealed
/// (label where present, hidden_truth otherwise).
inline Classifier train_ideal(const Dataset& ds, const TrainConfig& cfg,
                              std::span<const double> weights = {}) {
  if (!weights.empty() && weights.size() != ds.examples.size())
    throw ConfigError("weights must align with the dataset");
  std::vector<TrainExample> data;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& e = ds.examples[i];
    int truth;
    if (e.label)
      truth = *e.label;
    else if (e.hidden_truth)
      truth = *e.hidden_truth;
    else
      throw ConfigError("train_ideal: example lacks both label and hidden_truth");
    TrainExample t;
    t.feature = e.feature;
    t.target = SoftLabel::one_hot(ds.num_classes, truth);
    t.weight = weights.empty() ? 1.0 : weights[i];
    data.push_back(std::move(t));
  }
  if (data.empty()) throw ConfigError("train_ideal: empty dataset");
  return train(data, cfg, LossKind::CrossEntropy);
}

/// Trains a fresh classifier on the reference-labeled dataset with the mean
/// cross-entropy objective. hidden_truth never enters.
inline Classifier train_on_pseudo(const PseudoDataset& ds, const TrainConfig& cfg,
                                  std::span<const double> weights = {},
                                  TrainTrace* trace = nullptr,
                                  const EpochHook& epoch_hook = {}) {
  if (!weights.empty() && weights.size() != ds.examples.size())
    throw ConfigError("weights must align with the pseudo dataset");
  std::vector<TrainExample> data;
  data.reserve(ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    TrainExample t;
    t.feature = ds.examples[i].feature;
    t.target = ds.examples[i].reference;
    t.weight = weights.empty() ? 1.0 : weights[i];
    data.push_back(std::move(t));
  }
  if (data.empty()) throw ConfigError("train_on_pseudo: empty dataset");
  return train(data, cfg, LossKind::CrossEntropy, trace, epoch_hook);
}

struct TwoIterationResult {
  Classifier baseline;
  Classifier semi;
  PseudoDataset pseudo;
};

/// Train to convergence on the labeled part, pseudo-label everything once
/// with that frozen model, then train a fresh model on the combined
/// reference-labeled dataset. The semi model's initialization seed is derived
/// from cfg.seed.
inline TwoIterationResult train_two_iteration(const Dataset& ds, const TrainConfig& cfg,
                                              const AugmentConfig& aug, PseudoMode mode,
                                              std::span<const double> weights = {},
                                              TrainTrace* semi_trace = nullptr,
                                              const EpochHook& semi_epoch_hook = {}) {
  TwoIterationResult out;
  out.baseline = train_baseline(ds, cfg, weights);
  out.pseudo = build_pseudo_dataset(out.baseline, ds, aug, mode);
  TrainConfig semi_cfg = cfg;
  semi_cfg.seed = derive_seed(cfg.seed, detail::kSemiInitTag);
  out.semi = train_on_pseudo(out.pseudo, semi_cfg, weights, semi_trace, semi_epoch_hook);
  return out;
}

enum class IterativeMode { ExplicitL1, ImplicitL2 };

struct IterativeOptions {
  IterativeMode mode = IterativeMode::ImplicitL2;
  double lambda = 1.0;  // scales the consistency term
  LossKind consistency_loss = LossKind::CrossEntropy;
};

/// Loss values at the start-of-epoch snapshot plus optional per-group test
/// accuracy; the rows behind training-curve plots.
struct EpochTraceRow {
  int epoch = 0;
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  std::map<std::string, double> group_acc;
};

using EpochEval = std::function<std::map<std::string, double>(const Classifier&)>;

/// Iterative consistency training. Each epoch snapshots the current model,
/// regenerates pseudo references from the snapshot, then takes one full-batch
/// gradient step on
///   weighted_mean(labeled CE) + lambda * weighted_mean(consistency loss).
/// Losses are recorded at the snapshot, before the step. Gradients never
/// reach the snapshot copy.
inline Classifier train_iterative(const Dataset& ds, const TrainConfig& cfg,
                                  const AugmentConfig& aug, const IterativeOptions& opts,
                                  std::span<const double> weights = {},
                                  std::vector<EpochTraceRow>* trace = nullptr,
                                  const EpochEval* eval = nullptr) {
  validate_augment_config(aug);
  if (!weights.empty() && weights.size() != ds.examples.size())
    throw ConfigError("weights must align with the dataset");
  if (cfg.epochs < 0) throw ConfigError("train_iterative: epochs must be >= 0");

  std::vector<std::size_t> labeled, unlabeled;
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    (ds.examples[i].label ? labeled : unlabeled).push_back(i);
  if (labeled.empty()) throw ConfigError("train_iterative: no labeled examples");

  Classifier c = Classifier::init(cfg.arch, ds.num_classes, ds.dim, cfg.hidden_units, cfg.seed,
                                  cfg.init_scale);
  auto weight_of = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  std::vector<double> grad(c.param_count());
  std::vector<double> term_grad(c.param_count());
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Classifier teacher = c;  // frozen snapshot for this epoch

    // Supervised term: weighted mean CE over the labeled part.
    std::fill(term_grad.begin(), term_grad.end(), 0.0);
    double sup_loss = 0.0, sup_w = 0.0;
    for (std::size_t i : labeled) {
      const Example& e = ds.examples[i];
      TrainExample t{e.feature, SoftLabel::one_hot(ds.num_classes, *e.label), weight_of(i)};
      detail::accumulate_example_grad(c, t, LossKind::CrossEntropy, t.weight, term_grad,
                                      sup_loss);
      sup_w += t.weight;
    }
    if (sup_w <= 0.0) throw ConfigError("train_iterative: zero total labeled weight");
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = term_grad[i] / sup_w;
    sup_loss /= sup_w;

    // Consistency term: references regenerated from this epoch's snapshot.
    double unsup_loss = 0.0;
    if (!unlabeled.empty() && opts.lambda != 0.0) {
      std::fill(term_grad.begin(), term_grad.end(), 0.0);
      double unsup_w = 0.0;
      for (std::size_t i : unlabeled) {
        const Example& e = ds.examples[i];
        auto rng = child_rng(aug.seed, derive_seed(static_cast<std::uint64_t>(epoch), i));
        SoftLabel ref = opts.mode == IterativeMode::ExplicitL1
                            ? explicit_pseudo(teacher, e.feature, aug, rng)
                            : implicit_pseudo(teacher, e.feature, aug, rng);
        TrainExample t{e.feature, std::move(ref), weight_of(i)};
        detail::accumulate_example_grad(c, t, opts.consistency_loss, t.weight, term_grad,
                                        unsup_loss);
        unsup_w += t.weight;
      }
      if (unsup_w > 0.0) {
        for (std::size_t i = 0; i < grad.size(); ++i)
          grad[i] += opts.lambda * term_grad[i] / unsup_w;
        unsup_loss /= unsup_w;
      }
    }

    if (trace) {
      EpochTraceRow row;
      row.epoch = epoch;
      row.sup_loss = sup_loss;
      row.unsup_loss = unsup_loss;
      if (eval && *eval) row.group_acc = (*eval)(c);
      trace->push_back(std::move(row));
    }

    double total = sup_loss + opts.lambda * unsup_loss;
    if (!std::isfinite(total))
      throw TrainError("iterative training diverged at epoch " + std::to_string(epoch));
    for (std::size_t i = 0; i < grad.size(); ++i) c.params[i] -= cfg.learning_rate * grad[i];

    if (cfg.converge_tol > 0.0) {
      if (total < best_loss - cfg.converge_tol) {
        best_loss = total;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.converge_patience) {
        break;
      }
    }
  }
  return c;
}

}  // namespace sslab
