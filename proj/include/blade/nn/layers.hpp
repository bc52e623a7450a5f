#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "blade/core/random.hpp"
#include "blade/core/tensor.hpp"

// Minimal layer zoo with explicit forward/backward passes. Layers own their
// parameters; activations needed by the backward pass live in small per-call
// Ctx structs held by the caller, so several passes through one model can be
// in flight before gradients are pulled back. Parameter gradients accumulate
// until the optimizer clears them.

namespace blade {
namespace nn {

template <class S>
struct Param {
  Tensor<S> v;  // value
  Tensor<S> g;  // accumulated gradient

  void init_shape(std::vector<int> dims) {
    v = Tensor<S>(dims);
    g = Tensor<S>(std::move(dims));
  }
  void zero_grad() { g.set_zero(); }
  long size() const { return v.size(); }
};

template <class S>
using NamedParams = std::vector<std::pair<std::string, Param<S>*>>;

// ---------------------------------------------------------------------------
// initializers

template <class S>
void fill_normal(Tensor<S>& t, Rng& rng, double stddev) {
  for (long i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.normal(0.0, stddev));
}

template <class S>
void he_init(Param<S>& w, Rng& rng, long fan_in) {
  fill_normal(w.v, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

template <class S>
void xavier_init(Param<S>& w, Rng& rng, long fan_in, long fan_out) {
  fill_normal(w.v, rng, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, x is {N, in}

template <class S>
class Linear {
 public:
  struct Ctx {
    Tensor<S> x;
  };

  Linear() = default;
  Linear(int in, int out) : in_(in), out_(out) {
    w.init_shape({out, in});
    b.init_shape({out});
  }

  void init(Rng& rng, bool relu_gain = true) {
    if (relu_gain)
      he_init(w, rng, in_);
    else
      xavier_init(w, rng, in_, out_);
    b.v.set_zero();
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    assert(x.rank() == 2 && x.dim(1) == in_);
    if (ctx) ctx->x = x;
    const long n = x.dim(0);
    Tensor<S> y({static_cast<int>(n), out_});
    y.as_matrix(n, out_).noalias() = x.as_matrix(n, in_) * w.v.as_matrix(out_, in_).transpose();
    y.as_matrix(n, out_).rowwise() += ConstMatMap<S>(b.v.data(), 1, out_).row(0);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) {
    const long n = gy.dim(0);
    w.g.as_matrix(out_, in_).noalias() += gy.as_matrix(n, out_).transpose() * ctx.x.as_matrix(n, in_);
    MatMap<S>(b.g.data(), 1, out_).noalias() += gy.as_matrix(n, out_).colwise().sum();
    Tensor<S> gx({static_cast<int>(n), in_});
    gx.as_matrix(n, in_).noalias() = gy.as_matrix(n, out_) * w.v.as_matrix(out_, in_);
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<S>& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<S> w, b;

 private:
  int in_ = 0, out_ = 0;
};

// ---------------------------------------------------------------------------
// Conv2d via im2col + GEMM. NCHW all around.

template <class S>
class Conv2d {
 public:
  struct Ctx {
    Tensor<S> x;
  };

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride = 1, int pad = 0)
      : in_(in_ch), out_(out_ch), k_(k), stride_(stride), pad_(pad) {
    w.init_shape({out_ch, in_ch, k, k});
    b.init_shape({out_ch});
  }

  void init(Rng& rng, bool relu_gain = true) {
    long fan_in = static_cast<long>(in_) * k_ * k_;
    if (relu_gain)
      he_init(w, rng, fan_in);
    else
      xavier_init(w, rng, fan_in, static_cast<long>(out_) * k_ * k_);
    b.v.set_zero();
  }

  int out_size(int in_size) const { return (in_size + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    assert(x.rank() == 4 && x.dim(1) == in_);
    if (ctx) ctx->x = x;
    const int n = x.dim(0), h = x.dim(2), w_in = x.dim(3);
    const int oh = out_size(h), ow = out_size(w_in);
    const long ckk = static_cast<long>(in_) * k_ * k_;
    Tensor<S> y({n, out_, oh, ow});
    std::vector<S> col(static_cast<size_t>(ckk) * oh * ow);
    auto wm = w.v.as_matrix(out_, ckk);
    ConstMatMap<S> bm(b.v.data(), out_, 1);
    for (int i = 0; i < n; ++i) {
      im2col(x.data() + static_cast<long>(i) * in_ * h * w_in, h, w_in, col.data());
      MatMap<S> ym(y.data() + static_cast<long>(i) * out_ * oh * ow, out_, static_cast<long>(oh) * ow);
      ym.noalias() = wm * ConstMatMap<S>(col.data(), ckk, static_cast<long>(oh) * ow);
      ym.colwise() += bm.col(0);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) {
    const Tensor<S>& x = ctx.x;
    const int n = x.dim(0), h = x.dim(2), w_in = x.dim(3);
    const int oh = out_size(h), ow = out_size(w_in);
    const long ckk = static_cast<long>(in_) * k_ * k_;
    const long ohw = static_cast<long>(oh) * ow;
    Tensor<S> gx({n, in_, h, w_in});
    std::vector<S> col(static_cast<size_t>(ckk) * ohw);
    std::vector<S> gcol(static_cast<size_t>(ckk) * ohw);
    auto wm = w.v.as_matrix(out_, ckk);
    auto gwm = w.g.as_matrix(out_, ckk);
    MatMap<S> gbm(b.g.data(), out_, 1);
    for (int i = 0; i < n; ++i) {
      im2col(x.data() + static_cast<long>(i) * in_ * h * w_in, h, w_in, col.data());
      ConstMatMap<S> gym(gy.data() + static_cast<long>(i) * out_ * ohw, out_, ohw);
      gwm.noalias() += gym * ConstMatMap<S>(col.data(), ckk, ohw).transpose();
      gbm.col(0).noalias() += gym.rowwise().sum();
      MatMap<S>(gcol.data(), ckk, ohw).noalias() = wm.transpose() * gym;
      col2im_add(gcol.data(), h, w_in, gx.data() + static_cast<long>(i) * in_ * h * w_in);
    }
    return gx;
  }

  void collect(const std::string& prefix, NamedParams<S>& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }

  Param<S> w, b;

 private:
  // col layout: rows = in*k*k, cols = oh*ow (row-major)
  void im2col(const S* x, int h, int w_in, S* col) const {
    const int oh = out_size(h), ow = out_size(w_in);
    const long ohw = static_cast<long>(oh) * ow;
    long r = 0;
    for (int c = 0; c < in_; ++c) {
      const S* xc = x + static_cast<long>(c) * h * w_in;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx, ++r) {
          S* dst = col + r * ohw;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              for (int ox = 0; ox < ow; ++ox) dst[static_cast<long>(oy) * ow + ox] = S(0);
              continue;
            }
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              dst[static_cast<long>(oy) * ow + ox] = (ix < 0 || ix >= w_in) ? S(0) : xc[static_cast<long>(iy) * w_in + ix];
            }
          }
        }
    }
  }

  void col2im_add(const S* col, int h, int w_in, S* gx) const {
    const int oh = out_size(h), ow = out_size(w_in);
    const long ohw = static_cast<long>(oh) * ow;
    long r = 0;
    for (int c = 0; c < in_; ++c) {
      S* gc = gx + static_cast<long>(c) * h * w_in;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx, ++r) {
          const S* src = col + r * ohw;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w_in) gc[static_cast<long>(iy) * w_in + ix] += src[static_cast<long>(oy) * ow + ox];
            }
          }
        }
    }
  }

  int in_ = 0, out_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
};

// ---------------------------------------------------------------------------
// Instance normalization (learned per-channel affine optional).

template <class S>
struct InstanceNormStats {
  Tensor<S> xhat;    // normalized input
  Tensor<S> invstd;  // {N, C}
};

/// Normalizes each (sample, channel) plane to zero mean / unit variance with
/// a variance floor.
template <class S>
InstanceNormStats<S> instance_norm_normalize(const Tensor<S>& x, S eps) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long hw = static_cast<long>(h) * w;
  InstanceNormStats<S> st;
  st.xhat = Tensor<S>({n, c, h, w});
  st.invstd = Tensor<S>({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const S* p = x.data() + (static_cast<long>(i) * c + j) * hw;
      S* q = st.xhat.data() + (static_cast<long>(i) * c + j) * hw;
      S mean = 0;
      for (long t = 0; t < hw; ++t) mean += p[t];
      mean /= static_cast<S>(hw);
      S var = 0;
      for (long t = 0; t < hw; ++t) {
        S d = p[t] - mean;
        var += d * d;
      }
      var /= static_cast<S>(hw);
      S inv = S(1) / std::sqrt(var + eps);
      st.invstd[static_cast<long>(i) * c + j] = inv;
      for (long t = 0; t < hw; ++t) q[t] = (p[t] - mean) * inv;
    }
  return st;
}

/// Backward of the normalization step: given d/d xhat, returns d/d x.
template <class S>
Tensor<S> instance_norm_backward(const Tensor<S>& gxhat, const InstanceNormStats<S>& st) {
  const int n = gxhat.dim(0), c = gxhat.dim(1), h = gxhat.dim(2), w = gxhat.dim(3);
  const long hw = static_cast<long>(h) * w;
  Tensor<S> gx({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const long off = (static_cast<long>(i) * c + j) * hw;
      const S* g = gxhat.data() + off;
      const S* xh = st.xhat.data() + off;
      S inv = st.invstd[static_cast<long>(i) * c + j];
      S sum_g = 0, sum_gx = 0;
      for (long t = 0; t < hw; ++t) {
        sum_g += g[t];
        sum_gx += g[t] * xh[t];
      }
      S* o = gx.data() + off;
      for (long t = 0; t < hw; ++t)
        o[t] = inv * (g[t] - (sum_g + xh[t] * sum_gx) / static_cast<S>(hw));
    }
  return gx;
}

template <class S>
class InstanceNorm {
 public:
  struct Ctx {
    InstanceNormStats<S> st;
  };

  InstanceNorm() = default;
  explicit InstanceNorm(int channels, S eps = S(1e-5)) : c_(channels), eps_(eps) {
    gamma.init_shape({channels});
    beta.init_shape({channels});
    gamma.v.fill(S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    InstanceNormStats<S> st = instance_norm_normalize(x, eps_);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long hw = static_cast<long>(h) * w;
    Tensor<S> y({n, c_, h, w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c_; ++j) {
        const long off = (static_cast<long>(i) * c_ + j) * hw;
        const S g = gamma.v[j], b = beta.v[j];
        for (long t = 0; t < hw; ++t) y.data()[off + t] = st.xhat.data()[off + t] * g + b;
      }
    if (ctx) ctx->st = std::move(st);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) {
    const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const long hw = static_cast<long>(h) * w;
    Tensor<S> gxhat({n, c_, h, w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c_; ++j) {
        const long off = (static_cast<long>(i) * c_ + j) * hw;
        S sg = 0, sgx = 0;
        const S g = gamma.v[j];
        for (long t = 0; t < hw; ++t) {
          const S gv = gy.data()[off + t];
          sg += gv;
          sgx += gv * ctx.st.xhat.data()[off + t];
          gxhat.data()[off + t] = gv * g;
        }
        beta.g[j] += sg;
        gamma.g[j] += sgx;
      }
    return instance_norm_backward(gxhat, ctx.st);
  }

  void collect(const std::string& prefix, NamedParams<S>& out) {
    out.emplace_back(prefix + ".gamma", &gamma);
    out.emplace_back(prefix + ".beta", &beta);
  }

  Param<S> gamma, beta;

 private:
  int c_ = 0;
  S eps_ = S(1e-5);
};

// ---------------------------------------------------------------------------
// Adaptive instance normalization: instance-normalize, then apply a per-sample
// per-channel affine transform supplied by the style pathway.

template <class S>
struct AdainCtx {
  InstanceNormStats<S> st;
  Tensor<S> gamma;  // {N, C}
};

/// y[n,c,:,:] = xhat[n,c,:,:] * gamma[n,c] + beta[n,c]
template <class S>
Tensor<S> adain_forward(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps_var,
                        AdainCtx<S>* ctx) {
  assert(gamma.rank() == 2 && beta.rank() == 2);
  assert(gamma.dim(0) == x.dim(0) && gamma.dim(1) == x.dim(1));
  InstanceNormStats<S> st = instance_norm_normalize(x, eps_var);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long hw = static_cast<long>(h) * w;
  Tensor<S> y({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const long off = (static_cast<long>(i) * c + j) * hw;
      const S g = gamma[static_cast<long>(i) * c + j], b = beta[static_cast<long>(i) * c + j];
      for (long t = 0; t < hw; ++t) y.data()[off + t] = st.xhat.data()[off + t] * g + b;
    }
  if (ctx) {
    ctx->st = std::move(st);
    ctx->gamma = gamma;
  }
  return y;
}

/// Returns gx; writes per-sample-channel affine grads into ggamma/gbeta {N,C}.
template <class S>
Tensor<S> adain_backward(const Tensor<S>& gy, const AdainCtx<S>& ctx, Tensor<S>& ggamma, Tensor<S>& gbeta) {
  const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
  const long hw = static_cast<long>(h) * w;
  ggamma = Tensor<S>({n, c});
  gbeta = Tensor<S>({n, c});
  Tensor<S> gxhat({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const long off = (static_cast<long>(i) * c + j) * hw;
      const S g = ctx.gamma[static_cast<long>(i) * c + j];
      S sg = 0, sgx = 0;
      for (long t = 0; t < hw; ++t) {
        const S gv = gy.data()[off + t];
        sg += gv;
        sgx += gv * ctx.st.xhat.data()[off + t];
        gxhat.data()[off + t] = gv * g;
      }
      gbeta[static_cast<long>(i) * c + j] = sg;
      ggamma[static_cast<long>(i) * c + j] = sgx;
    }
  return instance_norm_backward(gxhat, ctx.st);
}

// ---------------------------------------------------------------------------
// Activations

template <class S>
class ReLU {
 public:
  struct Ctx {
    Tensor<S> x;
  };
  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    if (ctx) ctx->x = x;
    Tensor<S> y = x;
    for (long i = 0; i < y.size(); ++i) y[i] = y[i] > S(0) ? y[i] : S(0);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) const {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i)
      if (ctx.x[i] <= S(0)) gx[i] = S(0);
    return gx;
  }
};

template <class S>
class LeakyReLU {
 public:
  struct Ctx {
    Tensor<S> x;
  };
  explicit LeakyReLU(S alpha = S(0.01)) : alpha_(alpha) {}
  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    if (ctx) ctx->x = x;
    Tensor<S> y = x;
    for (long i = 0; i < y.size(); ++i)
      if (y[i] < S(0)) y[i] *= alpha_;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) const {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i)
      if (ctx.x[i] < S(0)) gx[i] *= alpha_;
    return gx;
  }

 private:
  S alpha_;
};

/// tanh squashed to [0, 1]: y = (tanh(x) + 1) / 2, so dy/dx = 2 y (1 - y).
template <class S>
class Tanh01 {
 public:
  struct Ctx {
    Tensor<S> y;
  };
  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    Tensor<S> y = x;
    for (long i = 0; i < y.size(); ++i) y[i] = (std::tanh(y[i]) + S(1)) / S(2);
    if (ctx) ctx->y = y;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) const {
    Tensor<S> gx = gy;
    for (long i = 0; i < gx.size(); ++i) gx[i] *= S(2) * ctx.y[i] * (S(1) - ctx.y[i]);
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Resampling / pooling

template <class S>
class Upsample2x {
 public:
  Tensor<S> forward(const Tensor<S>& x) const {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<S> y({n, c, h * 2, w * 2});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        for (int yy = 0; yy < h * 2; ++yy)
          for (int xx = 0; xx < w * 2; ++xx) y.at(i, j, yy, xx) = x.at(i, j, yy / 2, xx / 2);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) const {
    const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2) / 2, w = gy.dim(3) / 2;
    Tensor<S> gx({n, c, h, w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        for (int yy = 0; yy < h * 2; ++yy)
          for (int xx = 0; xx < w * 2; ++xx) gx.at(i, j, yy / 2, xx / 2) += gy.at(i, j, yy, xx);
    return gx;
  }
};

/// N×C×H×W -> {N, C} spatial mean.
template <class S>
class GlobalAvgPool {
 public:
  struct Ctx {
    int h = 0, w = 0;
  };
  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (ctx) {
      ctx->h = h;
      ctx->w = w;
    }
    const long hw = static_cast<long>(h) * w;
    Tensor<S> y({n, c});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const S* p = x.data() + (static_cast<long>(i) * c + j) * hw;
        S s = 0;
        for (long t = 0; t < hw; ++t) s += p[t];
        y[static_cast<long>(i) * c + j] = s / static_cast<S>(hw);
      }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Ctx& ctx) const {
    const int n = gy.dim(0), c = gy.dim(1);
    const long hw = static_cast<long>(ctx.h) * ctx.w;
    Tensor<S> gx({n, c, ctx.h, ctx.w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const S g = gy[static_cast<long>(i) * c + j] / static_cast<S>(hw);
        S* p = gx.data() + (static_cast<long>(i) * c + j) * hw;
        for (long t = 0; t < hw; ++t) p[t] = g;
      }
    return gx;
  }
};

}  // namespace nn
}  // namespace blade
