#include <doctest.h>

#include <cmath>
#include <vector>

#include "blade/losses.hpp"
#include "oracles.hpp"

using namespace blade;

namespace {
Rng test_rng(uint64_t salt) { return Rng(0xb1adeu).derive("losses" + std::to_string(salt)); }
}  // namespace

TEST_CASE("cross entropy: closed-form and oracle values") {
  VecX<double> uniform = VecX<double>::Zero(10);
  CHECK(ce_loss<double>(uniform, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  // dominant true-class logit drives the loss to zero
  VecX<double> peaked = VecX<double>::Zero(5);
  peaked[2] = 50.0;
  CHECK(ce_loss<double>(peaked, 2) < 1e-9);

  Rng rng = test_rng(1);
  for (int rep = 0; rep < 120; ++rep) {
    int k = 2 + rng.uniform_int(7);
    VecX<double> logits(k);
    for (int i = 0; i < k; ++i) logits[i] = rng.normal(0, 2);
    int y = rng.uniform_int(k);
    CHECK(std::abs(ce_loss<double>(logits, y) - oracle::ce(logits, y)) < 1e-6);
  }
}

TEST_CASE("cross entropy: gradient matches central differences") {
  Rng rng = test_rng(2);
  for (int rep = 0; rep < 120; ++rep) {
    int k = 2 + rng.uniform_int(7);
    std::vector<double> flat(static_cast<size_t>(k));
    for (auto& v : flat) v = rng.normal(0, 1.5);
    int y = rng.uniform_int(k);
    auto f = [&](const std::vector<double>& x) {
      VecX<double> l(k);
      for (int i = 0; i < k; ++i) l[i] = x[static_cast<size_t>(i)];
      return ce_loss<double>(l, y);
    };
    std::vector<double> fd = oracle::fd_gradient(f, flat);
    VecX<double> logits(k);
    for (int i = 0; i < k; ++i) logits[i] = flat[static_cast<size_t>(i)];
    VecX<double> g = ce_grad<double>(logits, y);
    for (int i = 0; i < k; ++i) CHECK(oracle::rel_err(g[i], fd[static_cast<size_t>(i)]) < 1e-4);
  }
}

TEST_CASE("generalized cross entropy: frozen values, oracle battery, errors") {
  VecX<double> p(4);
  p << 0.2, 0.5, 0.2, 0.1;
  CHECK(gce_loss<double>(p, 1, 0.7) == doctest::Approx(0.54918256).epsilon(1e-7));
  VecX<double> sure = VecX<double>::Zero(3);
  sure[0] = 1.0;
  CHECK(gce_loss<double>(sure, 0, 0.7) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(gce_loss<double>(p, 1, 0.0), DataError);
  CHECK_THROWS_AS(gce_loss<double>(p, 1, -0.3), DataError);

  Rng rng = test_rng(3);
  for (int rep = 0; rep < 120; ++rep) {
    int k = 2 + rng.uniform_int(6);
    VecX<double> probs(k);
    double sum = 0;
    for (int i = 0; i < k; ++i) {
      probs[i] = rng.uniform(0.05, 1.0);
      sum += probs[i];
    }
    probs /= sum;
    int y = rng.uniform_int(k);
    double q = rng.uniform(0.1, 1.0);
    CHECK(std::abs(gce_loss<double>(probs, y, q) - oracle::gce(probs, y, q)) < 1e-6);
  }
}

TEST_CASE("generalized cross entropy: q -> 0 limit approaches cross entropy") {
  Rng rng = test_rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    int k = 2 + rng.uniform_int(6);
    VecX<double> probs(k);
    double sum = 0;
    for (int i = 0; i < k; ++i) {
      probs[i] = rng.uniform(0.05, 1.0);
      sum += probs[i];
    }
    probs /= sum;
    int y = rng.uniform_int(k);
    CHECK(std::abs(gce_loss<double>(probs, y, 1e-4) - (-std::log(probs[y]))) < 1e-3);
  }
}

TEST_CASE("generalized cross entropy: logit-space gradient matches central differences") {
  Rng rng = test_rng(5);
  for (int rep = 0; rep < 120; ++rep) {
    int k = 2 + rng.uniform_int(6);
    std::vector<double> flat(static_cast<size_t>(k));
    for (auto& v : flat) v = rng.normal(0, 1.2);
    int y = rng.uniform_int(k);
    double q = rng.uniform(0.2, 1.0);
    auto f = [&](const std::vector<double>& x) {
      VecX<double> l(k);
      for (int i = 0; i < k; ++i) l[i] = x[static_cast<size_t>(i)];
      return gce_from_logits<double>(l, y, q);
    };
    std::vector<double> fd = oracle::fd_gradient(f, flat);
    VecX<double> logits(k), g;
    for (int i = 0; i < k; ++i) logits[i] = flat[static_cast<size_t>(i)];
    gce_from_logits<double>(logits, y, q, &g);
    for (int i = 0; i < k; ++i) CHECK(oracle::rel_err(g[i], fd[static_cast<size_t>(i)]) < 1e-4);
  }
}

TEST_CASE("severity: fixed points, oracle battery, scale invariance, degenerate case") {
  CHECK(bcs_weight<double>(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bcs_weight<double>(3.0, 1.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(bcs_weight<double>(0.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(bcs_weight<double>(0.0, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bcs_weight<double>(1e-9, 5e-9) == doctest::Approx(0.5).epsilon(1e-12));  // below the floor

  Rng rng = test_rng(6);
  for (int rep = 0; rep < 120; ++rep) {
    double a = rng.uniform(1e-4, 5.0), b = rng.uniform(1e-4, 5.0);
    CHECK(std::abs(bcs_weight<double>(a, b) - oracle::bcs(a, b)) < 1e-6);
    double scale = rng.uniform(0.1, 100.0);
    CHECK(std::abs(bcs_weight<double>(scale * a, scale * b) - bcs_weight<double>(a, b)) < 1e-12);
    CHECK(bcs_weight<double>(a, b) >= 0.0);
    CHECK(bcs_weight<double>(a, b) <= 1.0);
  }
}

TEST_CASE("refine: endpoints, midpoint, convex hull, shape errors") {
  Tensor<double> x({2, 3}), xt({2, 3});
  Rng rng = test_rng(7);
  for (long i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform(0, 1);
    xt[i] = rng.uniform(0, 1);
  }
  Tensor<double> r1 = refine(x, xt, 1.0);
  Tensor<double> r0 = refine(x, xt, 0.0);
  CHECK(max_abs_diff(r1, x) == 0.0);
  CHECK(max_abs_diff(r0, xt) == 0.0);
  Tensor<double> mid = refine(x, xt, 0.5);
  for (long i = 0; i < mid.size(); ++i) CHECK(mid[i] == doctest::Approx(0.5 * (x[i] + xt[i])).epsilon(1e-12));
  for (int rep = 0; rep < 50; ++rep) {
    double w = rng.uniform();
    Tensor<double> r = refine(x, xt, w);
    for (long i = 0; i < r.size(); ++i) {
      CHECK(r[i] >= std::min(x[i], xt[i]) - 1e-12);
      CHECK(r[i] <= std::max(x[i], xt[i]) + 1e-12);
    }
  }
  Tensor<double> bad({3, 2});
  CHECK_THROWS_AS(refine(x, bad, 0.5), DataError);
}

TEST_CASE("alignment loss: frozen values and edge cases") {
  // single pair: numerator equals denominator
  MatX<double> z1(1, 3);
  z1 << 1, 0, 0;
  CHECK(align_loss<double>(z1, z1, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  // two orthonormal rows, Z == Z', tau = 1: -log(e / (e + 1))
  MatX<double> z2(2, 2);
  z2 << 1, 0, 0, 1;
  CHECK(align_loss<double>(z2, z2, 1.0) == doctest::Approx(0.31326169).epsilon(1e-7));

  MatX<double> empty(0, 3), mismatched(3, 2);
  CHECK_THROWS_AS(align_loss<double>(empty, empty, 1.0), DataError);
  CHECK_THROWS_AS(align_loss<double>(z2, mismatched, 1.0), DataError);
  CHECK_THROWS_AS(align_loss<double>(z2, z2, 0.0), DataError);
}

TEST_CASE("alignment loss: oracle battery and gradients") {
  Rng rng = test_rng(8);
  for (int rep = 0; rep < 110; ++rep) {
    long n = 2 + rng.uniform_int(4), d = 2 + rng.uniform_int(6);
    double tau = rng.uniform(0.2, 2.0);
    MatX<double> z = oracle::random_rows(rng, n, d, true);
    MatX<double> zp = oracle::random_rows(rng, n, d, true);
    CHECK(std::abs(align_loss<double>(z, zp, tau) - oracle::align(z, zp, tau)) < 1e-6);

    MatX<double> gz, gzp;
    align_loss<double>(z, zp, tau, &gz, &gzp);
    std::vector<double> flat(static_cast<size_t>(2 * n * d));
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d; ++j) {
        flat[static_cast<size_t>(i * d + j)] = z(i, j);
        flat[static_cast<size_t>(n * d + i * d + j)] = zp(i, j);
      }
    auto f = [&](const std::vector<double>& x) {
      MatX<double> a(n, d), b(n, d);
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) {
          a(i, j) = x[static_cast<size_t>(i * d + j)];
          b(i, j) = x[static_cast<size_t>(n * d + i * d + j)];
        }
      return align_loss<double>(a, b, tau);
    };
    std::vector<double> fd = oracle::fd_gradient(f, flat);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d; ++j) {
        CHECK(oracle::rel_err(gz(i, j), fd[static_cast<size_t>(i * d + j)]) < 1e-4);
        CHECK(oracle::rel_err(gzp(i, j), fd[static_cast<size_t>(n * d + i * d + j)]) < 1e-4);
      }
  }
}

TEST_CASE("alignment loss: permutation invariance and monotonicity in the paired similarity") {
  Rng rng = test_rng(9);
  MatX<double> z = oracle::random_rows(rng, 5, 6, true);
  MatX<double> zp = oracle::random_rows(rng, 5, 6, true);
  double base = align_loss<double>(z, zp, 0.5);

  std::vector<int> perm = {3, 0, 4, 1, 2};
  MatX<double> zperm(5, 6), zpperm(5, 6);
  for (int i = 0; i < 5; ++i) {
    zperm.row(i) = z.row(perm[static_cast<size_t>(i)]);
    zpperm.row(i) = zp.row(perm[static_cast<size_t>(i)]);
  }
  CHECK(align_loss<double>(zperm, zpperm, 0.5) == doctest::Approx(base).epsilon(1e-10));

  // raise z_0 . zp_0 while every other similarity stays fixed: loss decreases
  MatX<double> z2(2, 4), zp2(2, 4);
  z2 << 1, 0, 0, 0, 0, 1, 0, 0;
  zp2 << 0.5, 0.5, std::sqrt(0.5), 0, 0.2, 0.7, 0, std::sqrt(1 - 0.04 - 0.49);
  double prev = align_loss<double>(z2, zp2, 1.0);
  for (int step = 1; step <= 4; ++step) {
    MatX<double> bumped = zp2;
    bumped(0, 0) += 0.1 * step;  // direction orthogonal to z_1, aligned with z_0
    double cur = align_loss<double>(z2, bumped, 1.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("regularization loss: frozen values and edge cases") {
  MatX<double> z1(1, 4);
  z1 << 0, 1, 0, 0;
  CHECK(reg_loss<double>(z1, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  MatX<double> z2(2, 2);
  z2 << 1, 0, 0, 1;
  CHECK(reg_loss<double>(z2, 1.0) == doctest::Approx(0.31326169).epsilon(1e-7));

  // duplicated unit rows: -log(1/2) = ln 2, the two-row maximum
  MatX<double> dup(2, 3);
  dup << 1, 0, 0, 1, 0, 0;
  CHECK(reg_loss<double>(dup, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));

  MatX<double> empty(0, 3);
  CHECK_THROWS_AS(reg_loss<double>(empty, 1.0), DataError);
  CHECK_THROWS_AS(reg_loss<double>(z2, -1.0), DataError);
}

TEST_CASE("regularization loss: oracle battery and gradients") {
  Rng rng = test_rng(10);
  for (int rep = 0; rep < 110; ++rep) {
    long n = 2 + rng.uniform_int(4), d = 2 + rng.uniform_int(6);
    double tau = rng.uniform(0.2, 2.0);
    MatX<double> z = oracle::random_rows(rng, n, d, true);
    CHECK(std::abs(reg_loss<double>(z, tau) - oracle::reg(z, tau)) < 1e-6);

    MatX<double> gz;
    reg_loss<double>(z, tau, &gz);
    std::vector<double> flat(static_cast<size_t>(n * d));
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d; ++j) flat[static_cast<size_t>(i * d + j)] = z(i, j);
    auto f = [&](const std::vector<double>& x) {
      MatX<double> a(n, d);
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) a(i, j) = x[static_cast<size_t>(i * d + j)];
      return reg_loss<double>(a, tau);
    };
    std::vector<double> fd = oracle::fd_gradient(f, flat);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d; ++j) CHECK(oracle::rel_err(gz(i, j), fd[static_cast<size_t>(i * d + j)]) < 1e-4);
  }
}

TEST_CASE("regularization loss: permutation invariance and off-diagonal monotonicity") {
  Rng rng = test_rng(11);
  MatX<double> z = oracle::random_rows(rng, 6, 5, true);
  double base = reg_loss<double>(z, 0.5);
  std::vector<int> perm = {5, 2, 0, 4, 1, 3};
  MatX<double> zperm(6, 5);
  for (int i = 0; i < 6; ++i) zperm.row(i) = z.row(perm[static_cast<size_t>(i)]);
  CHECK(reg_loss<double>(zperm, 0.5) == doctest::Approx(base).epsilon(1e-10));

  // push z_1 . z_2 up along a direction orthogonal to the other rows
  MatX<double> z3(3, 4);
  z3 << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0;
  double prev = reg_loss<double>(z3, 1.0);
  for (int step = 1; step <= 4; ++step) {
    MatX<double> bumped = z3;
    bumped(2, 1) = 0.05 * step;  // raises z_1 . z_2 only (to first order)
    double cur = reg_loss<double>(bumped, 1.0);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("generation loss: mean of per-sample cross entropies, hand oracle") {
  Rng rng = test_rng(12);
  MatX<double> logits(2, 3);
  logits << 2.0, -1.0, 0.5, 0.0, 1.0, -2.0;
  std::vector<int> labels = {0, 1};
  VecX<double> r0 = logits.row(0).transpose(), r1 = logits.row(1).transpose();
  double expected = 0.5 * (oracle::ce(r0, 0) + oracle::ce(r1, 1));
  CHECK(gen_loss<double>(logits, labels) == doctest::Approx(expected).epsilon(1e-10));

  // perfect prediction of the original label on the translated image
  MatX<double> peaked = MatX<double>::Zero(4, 5);
  std::vector<int> y(4);
  for (int i = 0; i < 4; ++i) {
    y[static_cast<size_t>(i)] = rng.uniform_int(5);
    peaked(i, y[static_cast<size_t>(i)]) = 60.0;
  }
  CHECK(gen_loss<double>(peaked, y) < 1e-9);

  for (int rep = 0; rep < 100; ++rep) {
    int n = 1 + rng.uniform_int(5), k = 2 + rng.uniform_int(5);
    MatX<double> l(n, k);
    std::vector<int> lab(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) l(i, j) = rng.normal();
      lab[static_cast<size_t>(i)] = rng.uniform_int(k);
    }
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += oracle::ce(l.row(i).transpose(), lab[static_cast<size_t>(i)]);
    CHECK(std::abs(gen_loss<double>(l, lab) - mean / n) < 1e-6);
  }
}

TEST_CASE("weighted refinement loss: endpoints and mixed-weight oracle") {
  MatX<double> logits(3, 4);
  logits << 1, 2, 3, 4, 0, -1, 2, 1, -2, 0, 0, 3;
  std::vector<int> labels = {2, 0, 3};
  std::vector<double> zeros = {0, 0, 0}, ones = {1, 1, 1}, mixed = {0.3, 0.8, 0.1};

  CHECK(ref_loss<double>(logits, labels, zeros) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ref_loss<double>(logits, labels, ones) == doctest::Approx(gen_loss<double>(logits, labels)).epsilon(1e-10));

  double expected = 0;
  for (int i = 0; i < 3; ++i)
    expected += mixed[static_cast<size_t>(i)] * oracle::ce(logits.row(i).transpose(), labels[static_cast<size_t>(i)]);
  CHECK(ref_loss<double>(logits, labels, mixed) == doctest::Approx(expected / 3).epsilon(1e-10));

  std::vector<double> short_w = {0.5};
  CHECK_THROWS_AS(ref_loss<double>(logits, labels, short_w), DataError);
}

TEST_CASE("all losses are nonnegative and finite on random finite inputs") {
  Rng rng = test_rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    long n = 2 + rng.uniform_int(4), d = 2 + rng.uniform_int(5);
    MatX<double> z = oracle::random_rows(rng, n, d, true);
    MatX<double> zp = oracle::random_rows(rng, n, d, true);
    double a = align_loss<double>(z, zp, 0.3);
    double r = reg_loss<double>(z, 0.3);
    CHECK(a >= 0.0);
    CHECK(r >= 0.0);
    CHECK(std::isfinite(a));
    CHECK(std::isfinite(r));
  }
}

TEST_CASE("row normalization: unit norms and gradient") {
  Rng rng = test_rng(14);
  MatX<double> x = oracle::random_rows(rng, 4, 5, false) * 3.0;
  MatX<double> z = l2_normalize_rows(x);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(z.row(i).norm() - 1.0) < 1e-5);

  // chain rule through a scalar probe: sum of normalized entries * weights
  MatX<double> w(4, 5);
  for (long i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  auto f = [&](const std::vector<double>& flat) {
    MatX<double> m(4, 5);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = flat[static_cast<size_t>(i)];
    return (l2_normalize_rows(m).array() * w.array()).sum();
  };
  std::vector<double> flat(static_cast<size_t>(x.size()));
  for (long i = 0; i < x.size(); ++i) flat[static_cast<size_t>(i)] = x.data()[i];
  std::vector<double> fd = oracle::fd_gradient(f, flat);
  MatX<double> g = l2_normalize_rows_backward(x, w);
  for (long i = 0; i < x.size(); ++i) CHECK(oracle::rel_err(g.data()[i], fd[static_cast<size_t>(i)]) < 1e-4);
}
