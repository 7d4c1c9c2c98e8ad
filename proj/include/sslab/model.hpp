#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sslab/dataset.hpp"
#include "sslab/errors.hpp"
#include "sslab/random.hpp"

namespace sslab {

constexpr double kLogClamp = 1e-12;  // floor for probabilities before ln

/// Point on the K-simplex. probs[k] is the probability of class k+1
/// (classes stay 1-based everywhere in the API).
struct SoftLabel {
  std::vector<double> probs;

  SoftLabel() = default;
  explicit SoftLabel(std::vector<double> p) : probs(std::move(p)) {}

  static SoftLabel one_hot(int num_classes, int cls) {
    SoftLabel s;
    s.probs.assign(num_classes, 0.0);
    s.probs.at(cls - 1) = 1.0;
    return s;
  }
  static SoftLabel uniform(int num_classes) {
    SoftLabel s;
    s.probs.assign(num_classes, 1.0 / num_classes);
    return s;
  }

  int num_classes() const { return static_cast<int>(probs.size()); }

  /// 1-based argmax; ties break to the lowest index.
  int argmax_class() const {
    int best = 0;
    for (int i = 1; i < num_classes(); ++i)
      if (probs[i] > probs[best]) best = i;
    return best + 1;
  }

  double entropy() const {
    double h = 0.0;
    for (double p : probs)
      if (p > 0.0) h -= p * std::log(p);
    return h;
  }

  bool is_valid(double tol = 1e-9) const {
    if (probs.empty()) return false;
    double sum = 0.0;
    for (double p : probs) {
      if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
  }

  bool is_one_hot(double tol = 1e-12) const {
    int ones = 0;
    for (double p : probs) {
      if (std::abs(p - 1.0) <= tol)
        ++ones;
      else if (std::abs(p) > tol)
        return false;
    }
    return ones == 1;
  }
};

/// Cross-entropy with soft targets: sum_i target[i] * (-ln pred[i]).
/// pred entries are clamped below at kLogClamp, so the value is always finite.
inline double ce_loss(const SoftLabel& pred, const SoftLabel& target) {
  double loss = 0.0;
  for (int i = 0; i < pred.num_classes(); ++i)
    loss -= target.probs[i] * std::log(std::max(pred.probs[i], kLogClamp));
  return loss;
}

/// Mean-squared consistency loss: ||pred - target||^2 / K.
inline double mse_consistency(const SoftLabel& pred, const SoftLabel& target) {
  double s = 0.0;
  for (int i = 0; i < pred.num_classes(); ++i) {
    double diff = pred.probs[i] - target.probs[i];
    s += diff * diff;
  }
  return s / pred.num_classes();
}

enum class Architecture { SoftmaxLinear, OneHidden };
enum class LossKind { CrossEntropy, MseConsistency };

inline std::string to_string(Architecture a) {
  return a == Architecture::SoftmaxLinear ? "softmax_linear" : "one_hidden";
}
inline Architecture architecture_from_string(const std::string& s) {
  if (s == "softmax_linear") return Architecture::SoftmaxLinear;
  if (s == "one_hidden") return Architecture::OneHidden;
  throw ConfigError("unknown architecture '" + s + "'");
}

/// Softmax-output classifier. Parameters live in one flat vector:
///   SoftmaxLinear: [W (K x d, row-major), b (K)]
///   OneHidden:     [W1 (h x d), b1 (h), W2 (K x h), b2 (K)], tanh hidden layer
struct Classifier {
  Architecture arch = Architecture::SoftmaxLinear;
  int num_classes = 0;
  int dim = 0;
  int hidden = 0;  // 0 for SoftmaxLinear
  std::uint64_t seed = 0;
  std::vector<double> params;

  static std::size_t param_count(Architecture arch, int num_classes, int dim, int hidden) {
    if (arch == Architecture::SoftmaxLinear)
      return static_cast<std::size_t>(num_classes) * dim + num_classes;
    return static_cast<std::size_t>(hidden) * dim + hidden +
           static_cast<std::size_t>(num_classes) * hidden + num_classes;
  }
  std::size_t param_count() const { return param_count(arch, num_classes, dim, hidden); }

  /// Weights ~ N(0, init_scale^2), biases 0. Deterministic given seed.
  static Classifier init(Architecture arch, int num_classes, int dim, int hidden,
                         std::uint64_t seed, double init_scale) {
    if (num_classes < 2) throw ConfigError("classifier: num_classes must be >= 2");
    if (dim < 1) throw ConfigError("classifier: dim must be >= 1");
    if (arch == Architecture::OneHidden && hidden < 1)
      throw ConfigError("classifier: hidden units must be >= 1");
    Classifier c;
    c.arch = arch;
    c.num_classes = num_classes;
    c.dim = dim;
    c.hidden = arch == Architecture::OneHidden ? hidden : 0;
    c.seed = seed;
    c.params.assign(c.param_count(), 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    if (arch == Architecture::SoftmaxLinear) {
      for (int i = 0; i < num_classes * dim; ++i) c.params[i] = init_scale * z(rng);
    } else {
      int w1 = hidden * dim;
      for (int i = 0; i < w1; ++i) c.params[i] = init_scale * z(rng);
      int off = w1 + hidden;
      for (int i = 0; i < num_classes * hidden; ++i) c.params[off + i] = init_scale * z(rng);
    }
    return c;
  }

  void logits(std::span<const double> x, std::vector<double>& z,
              std::vector<double>* hidden_out = nullptr) const {
    if (static_cast<int>(x.size()) != dim)
      throw std::invalid_argument("classifier: feature dimension mismatch");
    z.assign(num_classes, 0.0);
    if (arch == Architecture::SoftmaxLinear) {
      const double* w = params.data();
      const double* b = params.data() + static_cast<std::size_t>(num_classes) * dim;
      for (int k = 0; k < num_classes; ++k) {
        double s = b[k];
        const double* wk = w + static_cast<std::size_t>(k) * dim;
        for (int j = 0; j < dim; ++j) s += wk[j] * x[j];
        z[k] = s;
      }
    } else {
      const double* w1 = params.data();
      const double* b1 = w1 + static_cast<std::size_t>(hidden) * dim;
      const double* w2 = b1 + hidden;
      const double* b2 = w2 + static_cast<std::size_t>(num_classes) * hidden;
      std::vector<double> h(hidden);
      for (int u = 0; u < hidden; ++u) {
        double s = b1[u];
        const double* wu = w1 + static_cast<std::size_t>(u) * dim;
        for (int j = 0; j < dim; ++j) s += wu[j] * x[j];
        h[u] = std::tanh(s);
      }
      for (int k = 0; k < num_classes; ++k) {
        double s = b2[k];
        const double* wk = w2 + static_cast<std::size_t>(k) * hidden;
        for (int u = 0; u < hidden; ++u) s += wk[u] * h[u];
        z[k] = s;
      }
      if (hidden_out) *hidden_out = std::move(h);
    }
  }

  SoftLabel forward(std::span<const double> x) const {
    std::vector<double> z;
    logits(x, z);
    double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double& v : z) {
      v = std::exp(v - zmax);
      denom += v;
    }
    for (double& v : z) v /= denom;
    return SoftLabel(std::move(z));
  }

  /// 1-based predicted class; ties break to the lowest index.
  int predict(std::span<const double> x) const { return forward(x).argmax_class(); }
};

struct TrainExample {
  std::vector<double> feature;
  SoftLabel target;
  double weight = 1.0;
};

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 1;
  double init_scale = 0.1;
  Architecture arch = Architecture::SoftmaxLinear;
  int hidden_units = 16;
  // Plateau stop: halt after `patience` epochs without a new best loss
  // improving by at least tol. 0 runs all epochs.
  double converge_tol = 0.0;
  int converge_patience = 10;
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // weighted mean loss per completed epoch
  int epochs_run = 0;
};

// Observes the model at the start of each epoch, before that epoch's updates.
using EpochHook = std::function<void(int epoch, const Classifier&)>;

namespace detail {

// dL/dlogits for one example; probs = softmax(logits).
inline void loss_grad_logits(const SoftLabel& probs, const SoftLabel& target, LossKind kind,
                             std::vector<double>& dz) {
  int num_classes = probs.num_classes();
  dz.resize(num_classes);
  if (kind == LossKind::CrossEntropy) {
    for (int i = 0; i < num_classes; ++i) dz[i] = probs.probs[i] - target.probs[i];
  } else {
    // d/dz of ||p - t||^2 / K through the softmax Jacobian.
    double inner = 0.0;
    for (int i = 0; i < num_classes; ++i)
      inner += (probs.probs[i] - target.probs[i]) * probs.probs[i];
    for (int j = 0; j < num_classes; ++j)
      dz[j] = (2.0 / num_classes) * probs.probs[j] *
              ((probs.probs[j] - target.probs[j]) - inner);
  }
}

inline double example_loss(const SoftLabel& probs, const SoftLabel& target, LossKind kind) {
  return kind == LossKind::CrossEntropy ? ce_loss(probs, target) : mse_consistency(probs, target);
}

// Accumulates weight * dL/dparams for one example into grad.
inline void accumulate_example_grad(const Classifier& c, const TrainExample& ex, LossKind kind,
                                    double weight, std::vector<double>& grad, double& loss_sum) {
  std::vector<double> z;
  std::vector<double> h;
  c.logits(ex.feature, z, &h);
  double zmax = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  SoftLabel probs(p);
  loss_sum += weight * example_loss(probs, ex.target, kind);

  std::vector<double> dz;
  loss_grad_logits(probs, ex.target, kind, dz);

  int K = c.num_classes, d = c.dim, hid = c.hidden;
  if (c.arch == Architecture::SoftmaxLinear) {
    double* gw = grad.data();
    double* gb = grad.data() + static_cast<std::size_t>(K) * d;
    for (int k = 0; k < K; ++k) {
      double g = weight * dz[k];
      gb[k] += g;
      double* gwk = gw + static_cast<std::size_t>(k) * d;
      for (int j = 0; j < d; ++j) gwk[j] += g * ex.feature[j];
    }
  } else {
    const double* w2 = c.params.data() + static_cast<std::size_t>(hid) * d + hid;
    double* gw1 = grad.data();
    double* gb1 = grad.data() + static_cast<std::size_t>(hid) * d;
    double* gw2 = gb1 + hid;
    double* gb2 = gw2 + static_cast<std::size_t>(K) * hid;
    for (int k = 0; k < K; ++k) {
      double g = weight * dz[k];
      gb2[k] += g;
      double* gwk = gw2 + static_cast<std::size_t>(k) * hid;
      for (int u = 0; u < hid; ++u) gwk[u] += g * h[u];
    }
    for (int u = 0; u < hid; ++u) {
      double dh = 0.0;
      for (int k = 0; k < K; ++k) dh += dz[k] * w2[static_cast<std::size_t>(k) * hid + u];
      double du = weight * dh * (1.0 - h[u] * h[u]);
      gb1[u] += du;
      double* gwu = gw1 + static_cast<std::size_t>(u) * d;
      for (int j = 0; j < d; ++j) gwu[j] += du * ex.feature[j];
    }
  }
}

}  // namespace detail

/// Weighted mean loss over a batch (weights renormalize within the batch).
inline double batch_loss(const Classifier& c, const std::vector<TrainExample>& batch,
                         LossKind kind) {
  double loss = 0.0, wsum = 0.0;
  for (const auto& ex : batch) {
    loss += ex.weight * detail::example_loss(c.forward(ex.feature), ex.target, kind);
    wsum += ex.weight;
  }
  if (wsum <= 0.0) throw std::invalid_argument("batch_loss: nonpositive total weight");
  return loss / wsum;
}

/// Gradient of batch_loss with respect to the flat parameter vector.
inline std::vector<double> batch_gradient(const Classifier& c,
                                          const std::vector<TrainExample>& batch, LossKind kind) {
  std::vector<double> grad(c.param_count(), 0.0);
  double loss_sum = 0.0, wsum = 0.0;
  for (const auto& ex : batch) {
    detail::accumulate_example_grad(c, ex, kind, ex.weight, grad, loss_sum);
    wsum += ex.weight;
  }
  if (wsum <= 0.0) throw std::invalid_argument("batch_gradient: nonpositive total weight");
  for (double& g : grad) g /= wsum;
  return grad;
}

/// Mini-batch SGD on the weighted mean loss. Deterministic given cfg.seed.
/// epochs == 0 returns the freshly initialized classifier.
inline Classifier train(const std::vector<TrainExample>& data, const TrainConfig& cfg,
                        LossKind kind = LossKind::CrossEntropy, TrainTrace* trace = nullptr,
                        const EpochHook& epoch_hook = {}) {
  if (data.empty()) throw ConfigError("train: empty training set");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  int d = static_cast<int>(data[0].feature.size());
  int K = data[0].target.num_classes();
  for (const auto& ex : data) {
    if (static_cast<int>(ex.feature.size()) != d || ex.target.num_classes() != K)
      throw ConfigError("train: inconsistent feature/target dimensions");
    if (!(ex.weight >= 0.0) || !ex.target.is_valid())
      throw ConfigError("train: bad weight or target");
  }

  Classifier c = Classifier::init(cfg.arch, K, d, cfg.hidden_units, cfg.seed, cfg.init_scale);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7261696eULL));
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> grad(c.param_count());
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch_hook) epoch_hook(epoch, c);
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0, epoch_w = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      std::size_t end = std::min(idx.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss_sum = 0.0, wsum = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = data[idx[i]];
        detail::accumulate_example_grad(c, ex, kind, ex.weight, grad, loss_sum);
        wsum += ex.weight;
      }
      if (wsum <= 0.0) continue;  // all-zero-weight batch contributes nothing
      for (std::size_t i = 0; i < grad.size(); ++i)
        c.params[i] -= cfg.learning_rate * grad[i] / wsum;
      epoch_loss += loss_sum;
      epoch_w += wsum;
    }
    double mean_loss = epoch_w > 0.0 ? epoch_loss / epoch_w : 0.0;
    if (!std::isfinite(mean_loss))
      throw TrainError("training diverged at epoch " + std::to_string(epoch));
    if (trace) {
      trace->epoch_loss.push_back(mean_loss);
      trace->epochs_run = epoch + 1;
    }
    if (cfg.converge_tol > 0.0) {
      // converged once the best loss stops improving by tol for `patience` epochs
      if (mean_loss < best_loss - cfg.converge_tol) {
        best_loss = mean_loss;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.converge_patience) {
        break;
      }
    }
  }
  return c;
}

/// Fraction of correct predictions over the (optionally group-filtered) set.
/// Evaluation label is `label` when present, else `hidden_truth`.
/// Empty filtered set yields nullopt.
inline std::optional<double> accuracy(const Classifier& c, const std::vector<Example>& examples,
                                      const std::optional<std::string>& group = std::nullopt) {
  long long correct = 0, total = 0;
  for (const auto& e : examples) {
    if (group && e.group != *group) continue;
    int truth;
    if (e.label)
      truth = *e.label;
    else if (e.hidden_truth)
      truth = *e.hidden_truth;
    else
      throw std::invalid_argument("accuracy: example carries neither label nor hidden_truth");
    correct += c.predict(e.feature) == truth ? 1 : 0;
    ++total;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Checkpoint format: plain text header plus one parameter per line (row-major).
inline void save_checkpoint(const Classifier& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "sslab-model 1\n";
  out << "arch " << to_string(c.arch) << "\n";
  out << "K " << c.num_classes << "\n";
  out << "d " << c.dim << "\n";
  out << "hidden " << c.hidden << "\n";
  out << "seed " << c.seed << "\n";
  out << "params " << c.params.size() << "\n";
  for (double p : c.params) out << detail::format_double(p) << "\n";
  if (!out) throw ParseError(path + ": write failed");
}

inline Classifier load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  auto expect = [&](const std::string& key) -> std::string {
    std::string k, v;
    if (!(in >> k >> v) || k != key) throw ParseError(path + ": expected '" + key + "' field");
    return v;
  };
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "sslab-model" || version != "1")
    throw ParseError(path + ": not a model checkpoint");
  Classifier c;
  c.arch = architecture_from_string(expect("arch"));
  c.num_classes = detail::parse_int(expect("K"), path);
  c.dim = detail::parse_int(expect("d"), path);
  c.hidden = detail::parse_int(expect("hidden"), path);
  c.seed = std::stoull(expect("seed"));
  std::size_t n = std::stoull(expect("params"));
  if (n != c.param_count()) throw ParseError(path + ": parameter count mismatch");
  c.params.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(in >> c.params[i])) throw ParseError(path + ": truncated parameter block");
  return c;
}

}  // namespace sslab
