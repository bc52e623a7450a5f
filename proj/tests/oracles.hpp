#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "blade/core/random.hpp"
#include "blade/core/tensor.hpp"

// Brute-force reference implementations used as independent oracles by the
// unit and acceptance suites. Written from the definitions alone; they never
// call into the production loss code.

namespace oracle {

using blade::MatX;
using blade::VecX;

inline VecX<double> softmax(const VecX<double>& s) {
  VecX<double> e(s.size());
  double sum = 0;
  for (long i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i]);
    sum += e[i];
  }
  return e / sum;
}

inline double ce(const VecX<double>& logits, int y) { return -std::log(softmax(logits)[y]); }

inline double gce(const VecX<double>& probs, int y, double q) { return (1.0 - std::pow(probs[y], q)) / q; }

inline double bcs(double lb, double ld) { return lb / (lb + ld); }

/// Instance alignment loss by direct summation over all pairs.
inline double align(const MatX<double>& z, const MatX<double>& zp, double tau) {
  const long n = z.rows();
  double total = 0;
  for (long i = 0; i < n; ++i) {
    double num = std::exp(z.row(i).dot(zp.row(i)) / tau);
    double den = 0;
    for (long k = 0; k < n; ++k) den += std::exp(z.row(i).dot(zp.row(k)) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(n);
}

/// Common-bias regularization loss by direct summation.
inline double reg(const MatX<double>& z, double tau) {
  const long n = z.rows();
  double total = 0;
  for (long i = 0; i < n; ++i) {
    double num = std::exp(z.row(i).dot(z.row(i)) / tau);
    double den = 0;
    for (long j = 0; j < n; ++j) den += std::exp(z.row(i).dot(z.row(j)) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(n);
}

/// Central finite differences over a flat parameter vector.
inline std::vector<double> fd_gradient(std::function<double(const std::vector<double>&)> f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double fp = f(x);
    x[i] = keep - h;
    double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

inline MatX<double> random_rows(blade::Rng& rng, long n, long d, bool normalize) {
  MatX<double> m(n, d);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < d; ++j) m(i, j) = rng.normal();
    if (normalize) m.row(i) /= m.row(i).norm();
  }
  return m;
}

}  // namespace oracle
