#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <vector>

#include "blade/core/error.hpp"
#include "blade/core/tensor.hpp"

// Training losses for the debiasing objective: cross entropy, generalized
// cross entropy, bias-conflicting severity, adaptive refinement, the
// instance alignment loss and the common-bias regularization loss. All of
// them are pure functions with analytic gradients.

namespace blade {

template <class S>
VecX<S> softmax(const VecX<S>& logits) {
  VecX<S> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Row-wise stable softmax.
template <class S>
MatX<S> softmax_rows(const MatX<S>& logits) {
  MatX<S> p(logits.rows(), logits.cols());
  for (long i = 0; i < logits.rows(); ++i) p.row(i) = softmax<S>(logits.row(i).transpose()).transpose();
  return p;
}

/// -log softmax(logits)[y]
template <class S>
S ce_loss(const VecX<S>& logits, int y) {
  assert(y >= 0 && y < logits.size());
  S m = logits.maxCoeff();
  S lse = std::log((logits.array() - m).exp().sum()) + m;
  return lse - logits[y];
}

/// d ce / d logits = softmax(logits) - onehot(y)
template <class S>
VecX<S> ce_grad(const VecX<S>& logits, int y) {
  VecX<S> g = softmax<S>(logits);
  g[y] -= S(1);
  return g;
}

/// Generalized cross entropy on a categorical distribution: (1 - p_y^q) / q.
template <class S>
S gce_loss(const VecX<S>& probs, int y, S q) {
  if (q <= S(0)) throw DataError("gce_loss: q must be positive");
  assert(y >= 0 && y < probs.size());
  return (S(1) - std::pow(probs[y], q)) / q;
}

/// d gce / d probs (only the true-class entry is nonzero).
template <class S>
VecX<S> gce_grad_probs(const VecX<S>& probs, int y, S q) {
  if (q <= S(0)) throw DataError("gce_loss: q must be positive");
  VecX<S> g = VecX<S>::Zero(probs.size());
  g[y] = -std::pow(probs[y], q - S(1));
  return g;
}

/// GCE evaluated through a softmax, with the gradient w.r.t. the logits:
/// d gce / d logits = p_y^q * (softmax - onehot).
template <class S>
S gce_from_logits(const VecX<S>& logits, int y, S q, VecX<S>* grad_logits = nullptr) {
  if (q <= S(0)) throw DataError("gce_loss: q must be positive");
  VecX<S> p = softmax<S>(logits);
  if (grad_logits) {
    *grad_logits = p;
    (*grad_logits)[y] -= S(1);
    *grad_logits *= std::pow(p[y], q);
  }
  return (S(1) - std::pow(p[y], q)) / q;
}

/// Bias-conflicting severity: ratio of the bias-sensitive model's loss to the
/// sum of both models' losses. Treated as a constant downstream (no gradient
/// flows through it). When both losses are below eps_den the ratio is
/// undefined and 0.5 is returned.
template <class S>
S bcs_weight(S loss_b, S loss_d, S eps_den = S(1e-8)) {
  assert(loss_b >= S(0) && loss_d >= S(0));
  if (loss_b < eps_den && loss_d < eps_den) return S(0.5);
  return loss_b / (loss_b + loss_d);
}

/// Adaptive refinement: elementwise w * x + (1 - w) * x_translated.
template <class S>
void refine_into(const S* x, const S* x_translated, S w, S* out, long n) {
  for (long i = 0; i < n; ++i) out[i] = w * x[i] + (S(1) - w) * x_translated[i];
}

template <class S>
Tensor<S> refine(const Tensor<S>& x, const Tensor<S>& x_translated, S w) {
  if (!x.same_shape(x_translated))
    throw DataError("refine: shape mismatch " + x.shape_str() + " vs " + x_translated.shape_str());
  Tensor<S> out(x.dims());
  refine_into(x.data(), x_translated.data(), w, out.data(), x.size());
  return out;
}

/// Row-wise l2 normalization with a norm floor.
template <class S>
MatX<S> l2_normalize_rows(const MatX<S>& x, S floor = S(1e-12)) {
  MatX<S> out(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i) {
    S n = std::max(x.row(i).norm(), floor);
    out.row(i) = x.row(i) / n;
  }
  return out;
}

/// Gradient of l2_normalize_rows: given raw rows x and the gradient w.r.t.
/// the normalized rows, returns the gradient w.r.t. x.
template <class S>
MatX<S> l2_normalize_rows_backward(const MatX<S>& x, const MatX<S>& grad_normed, S floor = S(1e-12)) {
  MatX<S> g(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i) {
    S n = x.row(i).norm();
    if (n < floor) {
      g.row(i) = grad_normed.row(i) / floor;
      continue;
    }
    auto xn = x.row(i) / n;
    S dot = grad_normed.row(i).dot(xn);
    g.row(i) = (grad_normed.row(i) - dot * xn) / n;
  }
  return g;
}

/// Instance alignment loss between original features Z and bias-translated
/// features Zp, paired by row index:
///   -1/N sum_i log( exp(z_i . zp_i / tau) / sum_k exp(z_i . zp_k / tau) )
/// Rows are expected to be l2-normalized already.
template <class S>
S align_loss(const MatX<S>& z, const MatX<S>& zp, S tau, MatX<S>* grad_z = nullptr, MatX<S>* grad_zp = nullptr) {
  if (z.rows() == 0) throw DataError("align_loss: empty batch");
  if (z.rows() != zp.rows() || z.cols() != zp.cols()) throw DataError("align_loss: shape mismatch");
  if (tau <= S(0)) throw DataError("align_loss: tau must be positive");
  const long n = z.rows();
  MatX<S> sim = (z * zp.transpose()) / tau;  // sim(i,k) = z_i . zp_k / tau
  S loss = 0;
  MatX<S> p(n, n);
  for (long i = 0; i < n; ++i) {
    S m = sim.row(i).maxCoeff();
    VecX<S> e = (sim.row(i).transpose().array() - m).exp();
    S denom = e.sum();
    p.row(i) = (e / denom).transpose();
    loss += -(sim(i, i) - m - std::log(denom));
  }
  loss /= S(n);
  if (grad_z) {
    // dL/dz_i = -1/(N tau) (zp_i - sum_k p_ik zp_k)
    *grad_z = (p * zp - zp) / (S(n) * tau);
  }
  if (grad_zp) {
    // dL/dzp_k = -1/(N tau) sum_i (delta_ik - p_ik) z_i
    *grad_zp = (p.transpose() * z - z) / (S(n) * tau);
  }
  return loss;
}

/// Common-bias regularization loss over features of samples translated to one
/// shared bias domain:
///   -1/N sum_i log( exp(z_i . z_i / tau) / sum_j exp(z_i . z_j / tau) )
/// With unit-norm rows the numerator is the constant exp(1/tau); the loss
/// penalizes off-diagonal similarity. The gradient treats the input rows as
/// free variables (the diagonal depends on z_i twice).
template <class S>
S reg_loss(const MatX<S>& z, S tau, MatX<S>* grad_z = nullptr) {
  if (z.rows() == 0) throw DataError("reg_loss: empty batch");
  if (tau <= S(0)) throw DataError("reg_loss: tau must be positive");
  const long n = z.rows();
  MatX<S> sim = (z * z.transpose()) / tau;
  S loss = 0;
  MatX<S> a(n, n);  // a(i,j) = dL/dsim_ij, sim entries treated as independent
  for (long i = 0; i < n; ++i) {
    S m = sim.row(i).maxCoeff();
    VecX<S> e = (sim.row(i).transpose().array() - m).exp();
    S denom = e.sum();
    loss += -(sim(i, i) - m - std::log(denom));
    a.row(i) = (e / denom).transpose() / (S(n));
    a(i, i) -= S(1) / S(n);
  }
  loss /= S(n);
  if (grad_z) {
    // z_c appears in sim(c,.) rows and sim(.,c) columns; chain both.
    *grad_z = (a * z + a.transpose() * z) / tau;
  }
  return loss;
}

/// Batch-mean cross entropy of translated-image logits against the original
/// task labels.
template <class S>
S gen_loss(const MatX<S>& logits, const std::vector<int>& labels, MatX<S>* grad_logits = nullptr) {
  if (static_cast<long>(labels.size()) != logits.rows()) throw DataError("gen_loss: label count mismatch");
  if (logits.rows() == 0) throw DataError("gen_loss: empty batch");
  const long n = logits.rows();
  S loss = 0;
  if (grad_logits) grad_logits->resize(n, logits.cols());
  for (long i = 0; i < n; ++i) {
    VecX<S> row = logits.row(i).transpose();
    loss += ce_loss<S>(row, labels[static_cast<size_t>(i)]);
    if (grad_logits) grad_logits->row(i) = ce_grad<S>(row, labels[static_cast<size_t>(i)]).transpose() / S(n);
  }
  return loss / S(n);
}

/// Severity-weighted batch cross entropy on refined images: mean_i w_i * ce_i.
/// The weights are constants (no gradient is taken through them).
template <class S>
S ref_loss(const MatX<S>& logits, const std::vector<int>& labels, const std::vector<S>& weights,
           MatX<S>* grad_logits = nullptr) {
  if (static_cast<long>(labels.size()) != logits.rows() || weights.size() != labels.size())
    throw DataError("ref_loss: batch length mismatch");
  if (logits.rows() == 0) throw DataError("ref_loss: empty batch");
  const long n = logits.rows();
  S loss = 0;
  if (grad_logits) grad_logits->resize(n, logits.cols());
  for (long i = 0; i < n; ++i) {
    VecX<S> row = logits.row(i).transpose();
    S w = weights[static_cast<size_t>(i)];
    loss += w * ce_loss<S>(row, labels[static_cast<size_t>(i)]);
    if (grad_logits) grad_logits->row(i) = w * ce_grad<S>(row, labels[static_cast<size_t>(i)]).transpose() / S(n);
  }
  return loss / S(n);
}

}  // namespace blade
