#pragma once

// Test-only oracles, independent of the library's computation paths.

#include <cmath>
#include <random>
#include <vector>

#include "sslab/model.hpp"

namespace testutil {

// Central finite differences of the batch loss with respect to each
// parameter. Step 1e-5.
inline std::vector<double> numeric_gradient(sslab::Classifier c,
                                            const std::vector<sslab::TrainExample>& batch,
                                            sslab::LossKind kind, double step = 1e-5) {
  std::vector<double> g(c.param_count());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    double saved = c.params[i];
    c.params[i] = saved + step;
    double up = sslab::batch_loss(c, batch, kind);
    c.params[i] = saved - step;
    double down = sslab::batch_loss(c, batch, kind);
    c.params[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double rel = std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i]) + std::abs(b[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Bayes accuracy of the two-class isotropic-Gaussian mixture with equal
// priors: Phi(separation / (2 sigma)).
inline double bayes_accuracy_two_gaussians(double separation, double sigma) {
  return std_normal_cdf(separation / (2.0 * sigma));
}

inline sslab::SoftLabel random_simplex(int num_classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> p(num_classes);
  double sum = 0.0;
  for (double& v : p) {
    v = u(rng);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return sslab::SoftLabel(std::move(p));
}

}  // namespace testutil
