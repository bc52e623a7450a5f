#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "blade/data/biased_data.hpp"

using namespace blade;
using namespace blade::data;

namespace {

DatasetSpec small_spec(double bcr, uint64_t seed, Split split = Split::train) {
  DatasetSpec s;
  s.kind = DatasetKind::colored_mnist;
  s.bcr = bcr;
  s.n_samples = 2000;
  s.img_size = 16;
  s.seed = seed;
  s.split = split;
  return s;
}

/// chi-square critical value via the Wilson-Hilferty approximation
double chi2_critical(int df, double z) {
  double t = 2.0 / (9.0 * df);
  double v = 1.0 - t + z * std::sqrt(t);
  return df * v * v * v;
}

}  // namespace

TEST_CASE("synthesize: per-class conflicting counts match the requested ratio exactly") {
  for (double bcr : {0.005, 0.01, 0.02, 0.05}) {
    Dataset ds = synthesize(small_spec(bcr, 7));
    auto by_class = ds.class_indices();
    for (int c = 0; c < 10; ++c) {
      int n_c = static_cast<int>(by_class[static_cast<size_t>(c)].size());
      long conflicting = 0;
      for (int i : by_class[static_cast<size_t>(c)])
        if (!ds.aligned[static_cast<size_t>(i)]) ++conflicting;
      CHECK(std::abs(conflicting - std::llround(bcr * n_c)) <= 1);
    }
  }
}

TEST_CASE("synthesize: full-size split realizes the counting contract") {
  DatasetSpec s = small_spec(0.05, 3);
  s.n_samples = 55000;
  s.img_size = 8;  // keep the rendering cheap; counting is what matters here
  Dataset ds = synthesize(s);
  long conflicting = 0;
  for (auto a : ds.aligned)
    if (!a) ++conflicting;
  CHECK(conflicting == 2750);  // round(0.05 * 5500) per class, 10 classes
  CHECK(ds.n() == 55000);
}

TEST_CASE("synthesize: fully biased regime has zero conflicting samples") {
  Dataset ds = synthesize(small_spec(0.0, 11));
  for (auto a : ds.aligned) CHECK(a == 1);
  for (int c : ds.per_class_conflicting) CHECK(c == 0);
}

TEST_CASE("synthesize: deterministic under a fixed seed, different under another") {
  Dataset a = synthesize(small_spec(0.02, 42));
  Dataset b = synthesize(small_spec(0.02, 42));
  Dataset c = synthesize(small_spec(0.02, 43));
  CHECK(a.labels == b.labels);
  CHECK(a.bias == b.bias);
  CHECK(max_abs_diff(a.images, b.images) == 0.0f);  // byte-identical colors and order
  CHECK(max_abs_diff(a.images, c.images) > 0.0f);
}

TEST_CASE("synthesize: image values stay in range and alignment flags are consistent") {
  Dataset ds = synthesize(small_spec(0.05, 5));
  for (long i = 0; i < ds.images.size(); ++i) {
    CHECK(ds.images[i] >= 0.0f);
    CHECK(ds.images[i] <= 1.0f);
  }
  for (int i = 0; i < ds.n(); ++i)
    CHECK((ds.bias[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)]) ==
          (ds.aligned[static_cast<size_t>(i)] == 1));
}

TEST_CASE("synthesize: conflicting samples draw uniformly from the other domains") {
  DatasetSpec s = small_spec(0.5, 19);  // lots of conflicts for statistics
  s.n_samples = 20000;
  s.img_size = 8;
  Dataset ds = synthesize(s);
  std::map<int, long> counts;
  long total = 0;
  for (int i = 0; i < ds.n(); ++i)
    if (!ds.aligned[static_cast<size_t>(i)] && ds.labels[static_cast<size_t>(i)] == 0) {
      ++counts[ds.bias[static_cast<size_t>(i)]];
      ++total;
    }
  CHECK(counts.size() == 9);  // never the correlated domain
  for (auto& [dom, cnt] : counts) {
    CHECK(dom != 0);
    CHECK(std::abs(static_cast<double>(cnt) / total - 1.0 / 9) < 0.05);
  }
}

TEST_CASE("unbiased split: bias independent of task label (chi-square at alpha=0.01)") {
  DatasetSpec s = small_spec(0.01, 23, Split::unbiased_test);
  s.n_samples = 10000;
  s.img_size = 8;
  Dataset ds = synthesize(s);
  long table[10][10] = {};
  long row[10] = {}, col[10] = {};
  for (int i = 0; i < ds.n(); ++i) {
    ++table[ds.labels[static_cast<size_t>(i)]][ds.bias[static_cast<size_t>(i)]];
    ++row[ds.labels[static_cast<size_t>(i)]];
    ++col[ds.bias[static_cast<size_t>(i)]];
  }
  double chi2 = 0;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) {
      double expect = static_cast<double>(row[a]) * col[b] / ds.n();
      chi2 += (table[a][b] - expect) * (table[a][b] - expect) / expect;
    }
  CHECK(chi2 < chi2_critical(81, 2.3263));
}

TEST_CASE("synthesize: invalid specs are rejected") {
  DatasetSpec s = small_spec(0.02, 1);
  s.bcr = -0.1;
  CHECK_THROWS_AS(synthesize(s), DataError);
  s.bcr = 1.5;
  CHECK_THROWS_AS(synthesize(s), DataError);
  s = small_spec(0.02, 1);
  s.n_classes = 1;
  CHECK_THROWS_AS(synthesize(s), DataError);
  s = small_spec(0.02, 1);
  s.n_bias_domains = 1;
  CHECK_THROWS_AS(synthesize(s), DataError);
  s = small_spec(0.02, 1);
  s.n_bias_domains = 7;  // colored_mnist needs one domain per class
  CHECK_THROWS_AS(synthesize(s), DataError);
  CHECK_THROWS_AS(kind_from_name("corrupted_imagenet"), DataError);
}

TEST_CASE("colorize: zero foreground stays zero, support mask is domain-invariant") {
  auto palette = make_palette(10);
  Rng rng(5);
  TensorF zero({1, 1, 16, 16});
  TensorF out = colorize(zero, 3, palette, 0.0, rng);
  for (long i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);

  RenderParams p;
  TensorF digit = render_digit(4, 16, p);
  TensorF a = colorize(digit, 1, palette, 0.0, rng);
  TensorF b = colorize(digit, 6, palette, 0.0, rng);
  bool differ = false;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      bool sup_a = false, sup_b = false;
      for (int c = 0; c < 3; ++c) {
        sup_a |= a.at(0, c, y, x) > 0;
        sup_b |= b.at(0, c, y, x) > 0;
      }
      CHECK(sup_a == sup_b);  // identical nonzero-pixel masks
      for (int c = 0; c < 3; ++c) differ |= a.at(0, c, y, x) != b.at(0, c, y, x);
    }
  CHECK(differ);
}

TEST_CASE("colorize: deterministic with zero jitter, clamped with large jitter") {
  auto palette = make_palette(10);
  RenderParams p;
  TensorF digit = render_digit(7, 16, p);
  Rng r1(9), r2(9);
  TensorF a = colorize(digit, 2, palette, 0.0, r1);
  TensorF b = colorize(digit, 2, palette, 0.0, r2);
  CHECK(max_abs_diff(a, b) == 0.0f);

  Rng r3(13);
  TensorF c = colorize(digit, 2, palette, 10.0, r3);  // far out of gamut, must clamp
  for (long i = 0; i < c.size(); ++i) {
    CHECK(c[i] >= 0.0f);
    CHECK(c[i] <= 1.0f);
  }
  CHECK_THROWS_AS(colorize(digit, 17, palette, 0.0, r3), DataError);
}

TEST_CASE("multi-bias: combination frequencies follow the independent per-attribute ratios") {
  DatasetSpec s;
  s.kind = DatasetKind::multi_colored_mnist;
  s.bcr = 0.10;
  s.bcr2 = 0.20;
  s.n_samples = 20000;
  s.img_size = 8;
  s.seed = 31;
  Dataset ds = make_multibias(s);
  long both = 0, left_only = 0, right_only = 0;
  for (int i = 0; i < ds.n(); ++i) {
    bool lc = !ds.aligned[static_cast<size_t>(i)], rc = !ds.aligned2[static_cast<size_t>(i)];
    both += lc && rc;
    left_only += lc && !rc;
    right_only += !lc && rc;
  }
  // independent subsets: P(both) ~ bcr * bcr2
  CHECK(std::abs(static_cast<double>(both) / ds.n() - 0.02) < 0.006);
  CHECK(std::abs(static_cast<double>(left_only) / ds.n() - 0.08) < 0.01);
  CHECK(std::abs(static_cast<double>(right_only) / ds.n() - 0.18) < 0.015);
}

TEST_CASE("multi-bias: zero ratios yield only fully aligned samples") {
  DatasetSpec s;
  s.kind = DatasetKind::multi_colored_mnist;
  s.bcr = 0.0;
  s.bcr2 = 0.0;
  s.n_samples = 1000;
  s.img_size = 8;
  s.seed = 17;
  Dataset ds = make_multibias(s);
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(ds.aligned[static_cast<size_t>(i)] == 1);
    CHECK(ds.aligned2[static_cast<size_t>(i)] == 1);
  }
}

TEST_CASE("multi-bias: unbiased split shows all four combinations per class") {
  DatasetSpec s;
  s.kind = DatasetKind::multi_colored_mnist;
  s.bcr = 0.01;
  s.bcr2 = 0.05;
  s.n_samples = 8000;
  s.img_size = 8;
  s.seed = 37;
  s.split = Split::unbiased_test;
  Dataset ds = make_multibias(s);
  long combos[10][4] = {};
  for (int i = 0; i < ds.n(); ++i) {
    int g = (ds.aligned[static_cast<size_t>(i)] ? 0 : 2) + (ds.aligned2[static_cast<size_t>(i)] ? 0 : 1);
    ++combos[ds.labels[static_cast<size_t>(i)]][g];
  }
  for (int c = 0; c < 10; ++c)
    for (int g = 0; g < 4; ++g) CHECK(combos[c][g] > 0);
}

TEST_CASE("multi-bias: left and right halves carry the two colors") {
  auto palette = make_palette(10);
  RenderParams p;
  TensorF digit = render_digit(0, 16, p);  // the ellipse spans both halves
  Rng rng(3);
  TensorF img = colorize_left_right(digit, 2, 5, palette, 0.0, rng);
  // every lit pixel on the left half matches palette[2] hue, right half palette[5]
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      float g = digit.at(0, 0, y, x);
      if (g <= 0) continue;
      const auto& col = x < 8 ? palette[2] : palette[5];
      for (int c = 0; c < 3; ++c) CHECK(img.at(0, c, y, x) == doctest::Approx(g * col[static_cast<size_t>(c)]));
    }
}

TEST_CASE("corrupted-style kind synthesizes in range with learnable structure") {
  DatasetSpec s;
  s.kind = DatasetKind::corrupted_cifar10_style;
  s.bcr = 0.05;
  s.n_samples = 500;
  s.img_size = 16;
  s.seed = 21;
  Dataset ds = synthesize(s);
  CHECK(ds.n() == 500);
  for (long i = 0; i < ds.images.size(); ++i) {
    CHECK(ds.images[i] >= 0.0f);
    CHECK(ds.images[i] <= 1.0f);
  }
  // corruption must change the image for at least some domain pairs
  CHECK(max_abs_diff(ds.images, synthesize(s).images) == 0.0f);  // still deterministic
}

TEST_CASE("dataset split files round-trip bit-identically") {
  Dataset ds = synthesize(small_spec(0.02, 77));
  std::string path = std::filesystem::temp_directory_path() / "blade_test_split.bin";
  save_split(ds, path);
  Dataset back = load_split(path);
  CHECK(back.labels == ds.labels);
  CHECK(back.bias == ds.bias);
  CHECK(back.aligned == ds.aligned);
  CHECK(max_abs_diff(back.images, ds.images) == 0.0f);
  CHECK(back.spec.bcr == ds.spec.bcr);
  CHECK(back.per_class_conflicting == ds.per_class_conflicting);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_split(path), DataError);

  nlohmann::json manifest = dataset_manifest(ds);
  CHECK(manifest.at("palette").size() == 10);
  CHECK(manifest.at("per_class_conflicting").size() == 10);
}
