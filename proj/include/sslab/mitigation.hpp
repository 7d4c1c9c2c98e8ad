#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sslab/dataset.hpp"
#include "sslab/errors.hpp"

namespace sslab {

enum class BalanceMode { None, BalanceLabeled, BalanceBoth };

inline std::string to_string(BalanceMode m) {
  switch (m) {
    case BalanceMode::None: return "none";
    case BalanceMode::BalanceLabeled: return "balance_labeled";
    default: return "balance_both";
  }
}
inline BalanceMode balance_mode_from_string(const std::string& s) {
  if (s == "none") return BalanceMode::None;
  if (s == "balance_labeled") return BalanceMode::BalanceLabeled;
  if (s == "balance_both") return BalanceMode::BalanceBoth;
  throw ConfigError("unknown balance mode '" + s + "'");
}

/// Per-example loss weights, aligned with ds.examples. Within each balanced
/// partition (labeled only, or labeled and unlabeled separately) every group
/// ends up with the same total weight and the weights sum to the partition
/// size. Unbalanced partitions keep weight 1.
inline std::vector<double> balance_weights(const Dataset& ds, BalanceMode mode) {
  std::vector<double> w(ds.examples.size(), 1.0);
  if (mode == BalanceMode::None) return w;

  auto counts = group_counts(ds);
  auto apply = [&](bool labeled_partition) {
    int partition_size = 0;
    int n_groups = static_cast<int>(ds.groups.size());
    for (const auto& g : ds.groups) {
      int n = labeled_partition ? counts.at(g).n_labeled : counts.at(g).n_unlabeled;
      if (n == 0)
        throw ConfigError("balance_weights: group '" + g + "' is empty in the " +
                          (labeled_partition ? "labeled" : "unlabeled") + " partition");
      partition_size += n;
    }
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      const auto& e = ds.examples[i];
      if (e.label.has_value() != labeled_partition) continue;
      int n = labeled_partition ? counts.at(e.group).n_labeled : counts.at(e.group).n_unlabeled;
      w[i] = static_cast<double>(partition_size) / (static_cast<double>(n_groups) * n);
    }
  };

  apply(true);
  if (mode == BalanceMode::BalanceBoth) apply(false);
  return w;
}

/// Freshly draws additional labeled examples per group from the same
/// generator the dataset came from. Existing examples are untouched.
inline Dataset grow_labeled(const Dataset& ds, const SynthConfig& generator,
                            const std::map<std::string, int>& n_more_per_group,
                            std::uint64_t seed) {
  validate_synth_config(generator);
  if (generator.num_classes != ds.num_classes || generator.dim != ds.dim)
    throw ConfigError("grow_labeled: generator does not match the dataset's K or d");
  Dataset out = ds;
  for (std::size_t gi = 0; gi < generator.groups.size(); ++gi) {
    const SynthGroup& g = generator.groups[gi];
    auto it = n_more_per_group.find(g.name);
    int n_more = it == n_more_per_group.end() ? 0 : it->second;
    if (n_more < 0) throw ConfigError("grow_labeled: negative allocation for '" + g.name + "'");
    if (n_more == 0) continue;
    if (!out.has_group(g.name)) out.groups.push_back(g.name);
    auto rng = child_rng(seed, gi);
    for (int i = 0; i < n_more; ++i)
      out.examples.push_back(
          detail::draw_example(g, i % generator.num_classes + 1, generator.dim, rng, true));
  }
  for (const auto& [name, n] : n_more_per_group) {
    bool known = false;
    for (const auto& g : generator.groups) known = known || g.name == name;
    if (!known && n != 0)
      throw ConfigError("grow_labeled: no generator for group '" + name + "'");
  }
  return out;
}

}  // namespace sslab
