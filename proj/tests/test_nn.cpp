#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "blade/nn/layers.hpp"
#include "blade/nn/optim.hpp"
#include "oracles.hpp"

using namespace blade;
using namespace blade::nn;

namespace {

Rng test_rng(uint64_t salt) { return Rng(0x17a9e5u).derive("nn" + std::to_string(salt)); }

Tensor<double> random_tensor(std::vector<int> dims, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(dims));
  for (long i = 0; i < t.size(); ++i) t[i] = rng.normal(0, scale);
  return t;
}

double probe(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0;
  for (long i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

/// Finite-difference check of d probe / d x for a layer forward closure.
void check_input_grad(std::function<Tensor<double>(const Tensor<double>&)> fwd, const Tensor<double>& x,
                      const Tensor<double>& probe_w, const Tensor<double>& gx, double tol = 2e-5) {
  Tensor<double> xm = x;
  for (long i = 0; i < x.size(); ++i) {
    const double h = 1e-5;
    double keep = xm[i];
    xm[i] = keep + h;
    double fp = probe(fwd(xm), probe_w);
    xm[i] = keep - h;
    double fm = probe(fwd(xm), probe_w);
    xm[i] = keep;
    double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(fd - gx[i]) < tol * std::max(1.0, std::abs(fd)));
  }
}

void check_param_grad(std::function<double()> eval, Param<double>& p, double tol = 2e-5) {
  for (long i = 0; i < p.v.size(); ++i) {
    const double h = 1e-5;
    double keep = p.v[i];
    p.v[i] = keep + h;
    double fp = eval();
    p.v[i] = keep - h;
    double fm = eval();
    p.v[i] = keep;
    double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(fd - p.g[i]) < tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("linear: input and parameter gradients") {
  Rng rng = test_rng(1);
  Linear<double> lin(5, 3);
  lin.init(rng);
  Tensor<double> x = random_tensor({4, 5}, rng);
  Tensor<double> w = random_tensor({4, 3}, rng);

  Linear<double>::Ctx ctx;
  lin.forward(x, &ctx);
  lin.w.zero_grad();
  lin.b.zero_grad();
  Tensor<double> gx = lin.backward(w, ctx);

  check_input_grad([&](const Tensor<double>& t) { return lin.forward(t, nullptr); }, x, w, gx);
  auto eval = [&] { return probe(lin.forward(x, nullptr), w); };
  check_param_grad(eval, lin.w);
  check_param_grad(eval, lin.b);
}

TEST_CASE("conv2d: gradients across stride and padding configurations") {
  Rng rng = test_rng(2);
  struct Case {
    int in, out, k, stride, pad, h;
  };
  for (Case c : {Case{2, 3, 3, 1, 1, 6}, Case{3, 2, 4, 2, 1, 8}, Case{1, 2, 7, 1, 3, 8}}) {
    Conv2d<double> conv(c.in, c.out, c.k, c.stride, c.pad);
    conv.init(rng);
    Tensor<double> x = random_tensor({2, c.in, c.h, c.h}, rng);
    Tensor<double> y = conv.forward(x, nullptr);
    Tensor<double> w = random_tensor(y.dims(), rng);

    Conv2d<double>::Ctx ctx;
    conv.forward(x, &ctx);
    conv.w.zero_grad();
    conv.b.zero_grad();
    Tensor<double> gx = conv.backward(w, ctx);

    check_input_grad([&](const Tensor<double>& t) { return conv.forward(t, nullptr); }, x, w, gx);
    auto eval = [&] { return probe(conv.forward(x, nullptr), w); };
    check_param_grad(eval, conv.w);
    check_param_grad(eval, conv.b);
  }
}

TEST_CASE("instance norm: normalization statistics and gradients") {
  Rng rng = test_rng(3);
  InstanceNorm<double> norm(3);
  Tensor<double> x = random_tensor({2, 3, 5, 5}, rng, 2.0);
  // give the affine parameters non-trivial values
  for (int j = 0; j < 3; ++j) {
    norm.gamma.v[j] = rng.uniform(0.5, 1.5);
    norm.beta.v[j] = rng.normal(0, 0.3);
  }

  Tensor<double> y = norm.forward(x, nullptr);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (int h = 0; h < 5; ++h)
        for (int wi = 0; wi < 5; ++wi) mean += y.at(n, c, h, wi);
      mean /= 25;
      for (int h = 0; h < 5; ++h)
        for (int wi = 0; wi < 5; ++wi) var += (y.at(n, c, h, wi) - mean) * (y.at(n, c, h, wi) - mean);
      var /= 25;
      CHECK(mean == doctest::Approx(norm.beta.v[c]).epsilon(1e-6));
      CHECK(std::sqrt(var) == doctest::Approx(norm.gamma.v[c]).epsilon(1e-3));
    }

  Tensor<double> w = random_tensor(x.dims(), rng);
  InstanceNorm<double>::Ctx ctx;
  norm.forward(x, &ctx);
  norm.gamma.zero_grad();
  norm.beta.zero_grad();
  Tensor<double> gx = norm.backward(w, ctx);
  check_input_grad([&](const Tensor<double>& t) { return norm.forward(t, nullptr); }, x, w, gx, 5e-5);
  auto eval = [&] { return probe(norm.forward(x, nullptr), w); };
  check_param_grad(eval, norm.gamma);
  check_param_grad(eval, norm.beta);
}

TEST_CASE("adain: output statistics match the style affine") {
  Rng rng = test_rng(4);
  Tensor<double> x = random_tensor({3, 4, 6, 6}, rng, 1.7);
  Tensor<double> gamma({3, 4}), beta({3, 4});
  for (long i = 0; i < gamma.size(); ++i) {
    gamma[i] = rng.uniform(0.3, 2.0);
    beta[i] = rng.normal(0, 1.0);
  }
  Tensor<double> y = adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr));
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < 4; ++c) {
      double mean = 0, var = 0;
      for (int h = 0; h < 6; ++h)
        for (int wi = 0; wi < 6; ++wi) mean += y.at(n, c, h, wi);
      mean /= 36;
      for (int h = 0; h < 6; ++h)
        for (int wi = 0; wi < 6; ++wi) var += (y.at(n, c, h, wi) - mean) * (y.at(n, c, h, wi) - mean);
      var /= 36;
      CHECK(std::abs(mean - beta[n * 4 + c]) < 1e-4);
      CHECK(std::abs(std::sqrt(var) - gamma[n * 4 + c]) < 1e-4);
    }
}

TEST_CASE("adain: identity affine reduces to plain instance normalization") {
  Rng rng = test_rng(5);
  Tensor<double> x = random_tensor({2, 3, 4, 4}, rng);
  Tensor<double> gamma = Tensor<double>::full({2, 3}, 1.0);
  Tensor<double> beta({2, 3});
  Tensor<double> y = adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr));
  InstanceNormStats<double> st = instance_norm_normalize(x, 1e-5);
  CHECK(max_abs_diff(y, st.xhat) < 1e-12);
}

TEST_CASE("adain: constant-valued channel yields the constant beta") {
  Tensor<double> x({1, 2, 3, 3});
  x.fill(7.5);
  Tensor<double> gamma = Tensor<double>::full({1, 2}, 2.0);
  Tensor<double> beta({1, 2});
  beta[0] = -0.4;
  beta[1] = 0.9;
  Tensor<double> y = adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr));
  for (int c = 0; c < 2; ++c)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) CHECK(y.at(0, c, h, w) == doctest::Approx(beta[c]).epsilon(1e-9));
}

TEST_CASE("adain: gradients w.r.t. input and per-sample affine") {
  Rng rng = test_rng(6);
  Tensor<double> x = random_tensor({2, 3, 4, 4}, rng);
  Tensor<double> gamma({2, 3}), beta({2, 3});
  for (long i = 0; i < gamma.size(); ++i) {
    gamma[i] = rng.uniform(0.4, 1.8);
    beta[i] = rng.normal();
  }
  Tensor<double> w = random_tensor(x.dims(), rng);

  AdainCtx<double> ctx;
  adain_forward(x, gamma, beta, 1e-5, &ctx);
  Tensor<double> ggamma, gbeta;
  Tensor<double> gx = adain_backward(w, ctx, ggamma, gbeta);

  check_input_grad(
      [&](const Tensor<double>& t) {
        return adain_forward(t, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr));
      },
      x, w, gx, 5e-5);

  for (long i = 0; i < gamma.size(); ++i) {
    const double h = 1e-5;
    double keep = gamma[i];
    gamma[i] = keep + h;
    double fp = probe(adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr)), w);
    gamma[i] = keep - h;
    double fm = probe(adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr)), w);
    gamma[i] = keep;
    CHECK(std::abs((fp - fm) / (2 * h) - ggamma[i]) < 2e-5);
  }
  for (long i = 0; i < beta.size(); ++i) {
    const double h = 1e-5;
    double keep = beta[i];
    beta[i] = keep + h;
    double fp = probe(adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr)), w);
    beta[i] = keep - h;
    double fm = probe(adain_forward(x, gamma, beta, 1e-5, static_cast<AdainCtx<double>*>(nullptr)), w);
    beta[i] = keep;
    CHECK(std::abs((fp - fm) / (2 * h) - gbeta[i]) < 2e-5);
  }
}

TEST_CASE("activations: gradients away from kink points") {
  Rng rng = test_rng(7);
  Tensor<double> x = random_tensor({3, 4}, rng);
  for (long i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05) x[i] = 0.1;  // keep clear of the kink
  Tensor<double> w = random_tensor({3, 4}, rng);

  ReLU<double> relu;
  ReLU<double>::Ctx rc;
  relu.forward(x, &rc);
  check_input_grad([&](const Tensor<double>& t) { return relu.forward(t, nullptr); }, x, w,
                   relu.backward(w, rc));

  LeakyReLU<double> lrelu(0.01);
  LeakyReLU<double>::Ctx lc;
  lrelu.forward(x, &lc);
  check_input_grad([&](const Tensor<double>& t) { return lrelu.forward(t, nullptr); }, x, w,
                   lrelu.backward(w, lc));

  Tanh01<double> tanh01;
  Tanh01<double>::Ctx tc;
  Tensor<double> y = tanh01.forward(x, &tc);
  for (long i = 0; i < y.size(); ++i) {
    CHECK(y[i] >= 0.0);
    CHECK(y[i] <= 1.0);
  }
  check_input_grad([&](const Tensor<double>& t) { return tanh01.forward(t, nullptr); }, x, w,
                   tanh01.backward(w, tc));
}

TEST_CASE("upsample and global average pool gradients") {
  Rng rng = test_rng(8);
  Upsample2x<double> up;
  Tensor<double> x = random_tensor({2, 3, 3, 3}, rng);
  Tensor<double> w = random_tensor({2, 3, 6, 6}, rng);
  check_input_grad([&](const Tensor<double>& t) { return up.forward(t); }, x, w, up.backward(w));

  GlobalAvgPool<double> gap;
  GlobalAvgPool<double>::Ctx gc;
  gap.forward(x, &gc);
  Tensor<double> w2 = random_tensor({2, 3}, rng);
  check_input_grad([&](const Tensor<double>& t) { return gap.forward(t, nullptr); }, x, w2, gap.backward(w2, gc));
}

TEST_CASE("adam: converges on a quadratic and touches only registered params") {
  Param<double> p;
  p.init_shape({4});
  Rng rng = test_rng(9);
  for (long i = 0; i < 4; ++i) p.v[i] = rng.uniform(-2, 2);
  Param<double> untouched;
  untouched.init_shape({2});
  untouched.v[0] = 1.25;
  untouched.v[1] = -0.5;

  Adam<double> opt({{"p", &p}});
  for (int it = 0; it < 400; ++it) {
    opt.zero_grad();
    for (long i = 0; i < 4; ++i) p.g[i] = 2.0 * (p.v[i] - 3.0);
    opt.step(0.05);
  }
  for (long i = 0; i < 4; ++i) CHECK(p.v[i] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(untouched.v[0] == 1.25);
  CHECK(untouched.v[1] == -0.5);
}

TEST_CASE("gradient clipping scales the global norm") {
  Param<double> a, b;
  a.init_shape({3});
  b.init_shape({2});
  a.g[0] = 3.0;
  a.g[1] = 0.0;
  a.g[2] = 4.0;  // norm 5 so far
  b.g[0] = 0.0;
  b.g[1] = 12.0;  // total norm 13
  Adam<double> opt({{"a", &a}, {"b", &b}});
  double before = opt.clip_global_norm(6.5);
  CHECK(before == doctest::Approx(13.0));
  double after = std::sqrt(a.g[0] * a.g[0] + a.g[1] * a.g[1] + a.g[2] * a.g[2] + b.g[0] * b.g[0] + b.g[1] * b.g[1]);
  CHECK(after == doctest::Approx(6.5).epsilon(1e-9));
}

TEST_CASE("cosine schedule: starts at base, ends exactly at the floor") {
  const double base = 1e-3;
  const int total = 150;
  CHECK(cosine_lr(base, 0, total) == doctest::Approx(base).epsilon(1e-12));
  CHECK(std::abs(cosine_lr(base, total - 1, total) - 0.1 * base) < 1e-9);
  for (int e = 1; e < total; ++e) CHECK(cosine_lr(base, e, total) <= cosine_lr(base, e - 1, total));
}
