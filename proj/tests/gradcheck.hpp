#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "mlcvqa/model.hpp"

namespace mlcvqa::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  Eigen::Index parameters = 0;
  int resamples = 0;
};

/// Smallest |pre-activation| over all ReLU inputs.
inline double relu_margin(const QualityModel<double>& model, const Eigen::MatrixXd& x) {
  const auto cache = forward_cached(model, x);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& z : cache.pre) margin = std::min(margin, z.cwiseAbs().minCoeff());
  return margin;
}

/// Compares backward() against central differences on every parameter. A
/// model/input draw is rejected while any ReLU input lies within `margin` of
/// zero, so that the +-h probes stay on one linear piece. The target is
/// placed at a fixed distance from the score, away from the smooth-L1 knot.
inline GradCheckResult gradient_check(const ModelConfig& cfg, Eigen::Index steps, std::uint64_t seed,
                                      double target_offset, double h = 1e-3, double margin = 0.05) {
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  QualityModel<double> model;
  Eigen::MatrixXd x(steps, cfg.input_dim);
  for (;; ++result.resamples) {
    model = init_model<double>(cfg, rng());
    // Non-zero biases so that bias gradients are exercised off the origin.
    model.for_each_tensor([&](auto& t) {
      if (t.cols() == 1) for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = 0.1 * normal(rng);
    });
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    if (relu_margin(model, x) >= margin) break;
  }
  const double y = forward(model, x).score + target_offset;
  const auto analytic = backward(model, x, y);

  std::vector<double*> params, grads;
  model.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) params.push_back(t.data() + i);
  });
  auto grad_copy = analytic.grad;
  grad_copy.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) grads.push_back(t.data() + i);
  });
  result.parameters = static_cast<Eigen::Index>(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double saved = *params[p];
    *params[p] = saved + h;
    const double up = smooth_l1(y, forward(model, x).score);
    *params[p] = saved - h;
    const double down = smooth_l1(y, forward(model, x).score);
    *params[p] = saved;
    const double numeric = (up - down) / (2 * h);
    const double g = *grads[p];
    // Exact zeros on both sides (dead units) compare as equal.
    const double scale = std::max({std::abs(g), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(g - numeric) / scale);
  }
  return result;
}

}  // namespace mlcvqa::testing
