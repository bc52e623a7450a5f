#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "blade/core/random.hpp"
#include "blade/core/tensor.hpp"

// Exact t-SNE (quadratic in the number of points) for the small feature
// exports visualized here. Standard recipe: per-point precision found by
// bisection to match the target perplexity, symmetrized affinities, early
// exaggeration, momentum gradient descent with per-coordinate gains.

namespace blade {
namespace eval {

struct TsneConfig {
  double perplexity = 30.0;
  int iters = 500;
  double learning_rate = 150.0;
  uint64_t seed = 0;
};

inline MatX<double> tsne_embed(const MatX<float>& x, const TsneConfig& cfg = {}) {
  const int n = static_cast<int>(x.rows());
  if (n < 4) throw DataError("tsne: need at least 4 points");
  const double perp = std::min(cfg.perplexity, (n - 1) / 3.0);

  // pairwise squared distances
  MatX<double> xd = x.cast<double>();
  VecX<double> sq = xd.rowwise().squaredNorm();
  MatX<double> d2 = (-2.0 * (xd * xd.transpose())).colwise() + sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);

  // conditional affinities with bisection on precision
  MatX<double> p = MatX<double>::Zero(n, n);
  const double log_perp = std::log(perp);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = 1e30;
    for (int it = 0; it < 60; ++it) {
      double sum = 0, dot = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        double e = std::exp(-beta * d2(i, j));
        sum += e;
        dot += beta * d2(i, j) * e;
      }
      double entropy = (sum > 0) ? std::log(sum) + dot / sum : 0.0;
      double diff = entropy - log_perp;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        beta_lo = beta;
        beta = (beta_hi > 1e29) ? beta * 2 : (beta + beta_hi) / 2;
      } else {
        beta_hi = beta;
        beta = (beta + beta_lo) / 2;
      }
    }
    double sum = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) sum += std::exp(-beta * d2(i, j));
    for (int j = 0; j < n; ++j) p(i, j) = (j == i || sum <= 0) ? 0.0 : std::exp(-beta * d2(i, j)) / sum;
  }
  MatX<double> pp = (p + p.transpose()) / (2.0 * n);
  pp = pp.cwiseMax(1e-12);

  Rng rng = Rng(cfg.seed).derive("tsne");
  MatX<double> y(n, 2), dy = MatX<double>::Zero(n, 2), gains = MatX<double>::Constant(n, 2, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) y(i, j) = rng.normal(0.0, 1e-4);

  const int exaggeration_until = std::min(100, cfg.iters / 4);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    const double exag = iter < exaggeration_until ? 12.0 : 1.0;
    // low-dimensional affinities (student-t)
    MatX<double> num(n, n);
    double qsum = 0;
    for (int i = 0; i < n; ++i) {
      num(i, i) = 0;
      for (int j = i + 1; j < n; ++j) {
        double dx = y(i, 0) - y(j, 0), dyv = y(i, 1) - y(j, 1);
        double q = 1.0 / (1.0 + dx * dx + dyv * dyv);
        num(i, j) = num(j, i) = q;
        qsum += 2 * q;
      }
    }
    MatX<double> grad = MatX<double>::Zero(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double q = num(i, j);
        double coeff = 4.0 * (exag * pp(i, j) - q / qsum) * q;
        grad(i, 0) += coeff * (y(i, 0) - y(j, 0));
        grad(i, 1) += coeff * (y(i, 1) - y(j, 1));
      }
    const double momentum = iter < 250 ? 0.5 : 0.8;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) {
        gains(i, j) = (grad(i, j) > 0) == (dy(i, j) > 0) ? std::max(0.01, gains(i, j) * 0.8) : gains(i, j) + 0.2;
        dy(i, j) = momentum * dy(i, j) - cfg.learning_rate * gains(i, j) * grad(i, j);
        y(i, j) += dy(i, j);
      }
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

}  // namespace eval
}  // namespace blade
