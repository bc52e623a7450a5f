#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/error.hpp"
#include "blade/core/random.hpp"
#include "blade/core/serialize.hpp"
#include "blade/core/tensor.hpp"

// Synthetic biased datasets with exact control of the bias-conflicting ratio:
// digit-classification images whose stroke color is spuriously correlated
// with the class (single color, or independent left/right colors), plus a
// texture-corruption variant over procedural object images.

namespace blade {
namespace data {

enum class DatasetKind { colored_mnist, multi_colored_mnist, corrupted_cifar10_style };
enum class Split { train, unbiased_test };

inline std::string kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::colored_mnist: return "colored_mnist";
    case DatasetKind::multi_colored_mnist: return "multi_colored_mnist";
    case DatasetKind::corrupted_cifar10_style: return "corrupted_cifar10_style";
  }
  return "?";
}

inline DatasetKind kind_from_name(const std::string& s) {
  if (s == "colored_mnist") return DatasetKind::colored_mnist;
  if (s == "multi_colored_mnist") return DatasetKind::multi_colored_mnist;
  if (s == "corrupted_cifar10_style") return DatasetKind::corrupted_cifar10_style;
  throw DataError("unknown dataset kind: " + s);
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::colored_mnist;
  double bcr = 0.01;    // bias-conflicting ratio (primary attribute)
  double bcr2 = 0.0;    // second attribute (multi_colored_mnist only)
  int n_classes = 10;
  int n_bias_domains = 10;
  int n_samples = 10000;
  int img_size = 28;
  double color_jitter = 0.02;
  uint64_t seed = 0;
  Split split = Split::train;

  nlohmann::json to_json() const {
    return {{"kind", kind_name(kind)},         {"bcr", bcr},
            {"bcr2", bcr2},                    {"n_classes", n_classes},
            {"n_bias_domains", n_bias_domains},{"n_samples", n_samples},
            {"img_size", img_size},            {"color_jitter", color_jitter},
            {"seed", seed},                    {"split", split == Split::train ? "train" : "unbiased_test"}};
  }
  static DatasetSpec from_json(const nlohmann::json& j) {
    DatasetSpec s;
    s.kind = kind_from_name(j.at("kind"));
    s.bcr = j.at("bcr");
    s.bcr2 = j.at("bcr2");
    s.n_classes = j.at("n_classes");
    s.n_bias_domains = j.at("n_bias_domains");
    s.n_samples = j.at("n_samples");
    s.img_size = j.at("img_size");
    s.color_jitter = j.at("color_jitter");
    s.seed = j.at("seed");
    s.split = j.at("split") == "train" ? Split::train : Split::unbiased_test;
    return s;
  }
};

/// One sample viewed through the structure-of-arrays dataset below.
struct BiasedSample {
  int index = 0;
  int task_label = 0;
  int bias_label = 0;
  int bias_label2 = -1;
  bool aligned = false;
  bool aligned2 = false;
};

struct Dataset {
  DatasetSpec spec;
  TensorF images;  // N x 3 x H x W, values in [0, 1]
  std::vector<int> labels;
  std::vector<int> bias;
  std::vector<int> bias2;           // empty unless multi-bias
  std::vector<uint8_t> aligned;
  std::vector<uint8_t> aligned2;    // empty unless multi-bias
  std::vector<std::array<float, 3>> palette;
  std::vector<int> per_class_conflicting;

  int n() const { return static_cast<int>(labels.size()); }
  bool multi_bias() const { return !bias2.empty(); }

  BiasedSample sample(int i) const {
    BiasedSample s;
    s.index = i;
    s.task_label = labels[static_cast<size_t>(i)];
    s.bias_label = bias[static_cast<size_t>(i)];
    s.aligned = aligned[static_cast<size_t>(i)] != 0;
    if (multi_bias()) {
      s.bias_label2 = bias2[static_cast<size_t>(i)];
      s.aligned2 = aligned2[static_cast<size_t>(i)] != 0;
    }
    return s;
  }

  TensorF gather(const std::vector<int>& idx) const {
    const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
    const long chw = static_cast<long>(c) * h * w;
    TensorF out({static_cast<int>(idx.size()), c, h, w});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(images.data() + idx[i] * chw, images.data() + (idx[i] + 1) * chw, out.data() + static_cast<long>(i) * chw);
    return out;
  }

  std::vector<std::vector<int>> class_indices() const {
    std::vector<std::vector<int>> by_class(static_cast<size_t>(spec.n_classes));
    for (int i = 0; i < n(); ++i) by_class[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(i);
    return by_class;
  }
};

// ---------------------------------------------------------------------------
// color palette

inline std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  float c = v * s;
  float hp = h * 6.0f;
  float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  float m = v - c;
  return {r + m, g + m, b + m};
}

/// Fixed anchor colors, maximally separated in hue.
inline std::vector<std::array<float, 3>> make_palette(int n_domains) {
  std::vector<std::array<float, 3>> p;
  p.reserve(static_cast<size_t>(n_domains));
  for (int i = 0; i < n_domains; ++i)
    p.push_back(hsv_to_rgb(static_cast<float>(i) / static_cast<float>(n_domains), 1.0f, 1.0f));
  return p;
}

// ---------------------------------------------------------------------------
// digit renderer: parametric strokes, per-sample affine distortion

namespace detail {

struct Pt {
  double x, y;
};

inline void arc(std::vector<Pt>& out, double cx, double cy, double rx, double ry, double a0, double a1, int steps = 40) {
  for (int i = 0; i <= steps; ++i) {
    double a = a0 + (a1 - a0) * i / steps;
    out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

inline void seg(std::vector<Pt>& out, Pt a, Pt b, int steps = 30) {
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    out.push_back({a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t});
  }
}

/// Strokes for digits 0-9 in the unit square (y grows downward).
inline std::vector<std::vector<Pt>> digit_strokes(int d) {
  const double pi = M_PI;
  std::vector<std::vector<Pt>> st;
  auto add = [&] { st.emplace_back(); return &st.back(); };
  switch (d) {
    case 0: {
      auto* s = add();
      arc(*s, 0.5, 0.5, 0.27, 0.38, 0, 2 * pi, 80);
      break;
    }
    case 1: {
      auto* s = add();
      seg(*s, {0.34, 0.26}, {0.56, 0.10});
      seg(*s, {0.56, 0.10}, {0.56, 0.90});
      break;
    }
    case 2: {
      auto* s = add();
      arc(*s, 0.5, 0.32, 0.25, 0.22, -pi, 0.25 * pi, 50);
      seg(*s, {0.5 + 0.25 * std::cos(0.25 * pi), 0.32 + 0.22 * std::sin(0.25 * pi)}, {0.24, 0.88});
      seg(*s, {0.24, 0.88}, {0.78, 0.88});
      break;
    }
    case 3: {
      auto* s = add();
      arc(*s, 0.48, 0.30, 0.24, 0.20, -0.85 * pi, 0.5 * pi, 50);
      arc(*s, 0.48, 0.70, 0.26, 0.22, -0.5 * pi, 0.85 * pi, 50);
      break;
    }
    case 4: {
      auto* s = add();
      seg(*s, {0.66, 0.10}, {0.22, 0.62});
      seg(*s, {0.22, 0.62}, {0.82, 0.62});
      auto* s2 = add();
      seg(*s2, {0.66, 0.10}, {0.66, 0.90});
      break;
    }
    case 5: {
      auto* s = add();
      seg(*s, {0.74, 0.12}, {0.32, 0.12});
      seg(*s, {0.32, 0.12}, {0.30, 0.46});
      arc(*s, 0.48, 0.66, 0.26, 0.24, -0.55 * pi, 0.80 * pi, 55);
      break;
    }
    case 6: {
      auto* s = add();
      seg(*s, {0.64, 0.10}, {0.36, 0.46});
      arc(*s, 0.50, 0.68, 0.22, 0.22, -pi, pi, 60);
      break;
    }
    case 7: {
      auto* s = add();
      seg(*s, {0.22, 0.12}, {0.78, 0.12});
      seg(*s, {0.78, 0.12}, {0.40, 0.90});
      break;
    }
    case 8: {
      auto* s = add();
      arc(*s, 0.5, 0.30, 0.20, 0.18, 0, 2 * pi, 55);
      auto* s2 = add();
      arc(*s2, 0.5, 0.70, 0.24, 0.21, 0, 2 * pi, 55);
      break;
    }
    case 9: {
      auto* s = add();
      arc(*s, 0.5, 0.32, 0.22, 0.20, 0, 2 * pi, 55);
      auto* s2 = add();
      seg(*s2, {0.70, 0.36}, {0.58, 0.90});
      break;
    }
    default:
      throw DataError("digit renderer supports classes 0-9");
  }
  return st;
}

}  // namespace detail

struct RenderParams {
  double rot = 0, scale_x = 1, scale_y = 1, shear = 0, dx = 0, dy = 0;
  double stroke = 0.07;       // radius in unit coords
  double wobble_amp = 0.0, wobble_freq = 0.0, wobble_phase = 0.0;
  double intensity = 1.0;
};

inline RenderParams sample_render_params(Rng& rng) {
  RenderParams p;
  p.rot = rng.uniform(-0.26, 0.26);
  p.scale_x = rng.uniform(0.82, 1.12);
  p.scale_y = rng.uniform(0.82, 1.12);
  p.shear = rng.uniform(-0.18, 0.18);
  p.dx = rng.uniform(-0.06, 0.06);
  p.dy = rng.uniform(-0.06, 0.06);
  p.stroke = rng.uniform(0.050, 0.085);
  p.wobble_amp = rng.uniform(0.0, 0.025);
  p.wobble_freq = rng.uniform(2.0, 7.0);
  p.wobble_phase = rng.uniform(0.0, 2 * M_PI);
  p.intensity = rng.uniform(0.80, 1.0);
  return p;
}

/// Rasterizes one digit class as a grayscale image in [0, 1]
/// (background exactly zero).
inline TensorF render_digit(int digit, int size, const RenderParams& p) {
  TensorF img({1, 1, size, size});
  auto strokes = detail::digit_strokes(digit);
  const double cr = std::cos(p.rot), sr = std::sin(p.rot);
  const double r_out = p.stroke * size;
  const double r_in = 0.45 * r_out;
  for (auto& stroke : strokes) {
    for (size_t i = 0; i < stroke.size(); ++i) {
      double t = static_cast<double>(i) / static_cast<double>(stroke.size());
      double ux = stroke[i].x - 0.5 + p.wobble_amp * std::sin(p.wobble_freq * 2 * M_PI * t + p.wobble_phase);
      double uy = stroke[i].y - 0.5 + p.wobble_amp * std::cos(p.wobble_freq * 2 * M_PI * t + 1.7 * p.wobble_phase);
      ux += p.shear * uy;
      double rx = (cr * ux - sr * uy) * p.scale_x;
      double ry = (sr * ux + cr * uy) * p.scale_y;
      double px = (rx + 0.5 + p.dx) * size;
      double py = (ry + 0.5 + p.dy) * size;
      int x0 = std::max(0, static_cast<int>(px - r_out - 1));
      int x1 = std::min(size - 1, static_cast<int>(px + r_out + 1));
      int y0 = std::max(0, static_cast<int>(py - r_out - 1));
      int y1 = std::min(size - 1, static_cast<int>(py + r_out + 1));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double d = std::hypot(x + 0.5 - px, y + 0.5 - py);
          double v = (r_out - d) / (r_out - r_in);
          if (v <= 0) continue;
          float fv = static_cast<float>(std::min(1.0, v) * p.intensity);
          float& dst = img.at(0, 0, y, x);
          dst = std::max(dst, fv);
        }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// colorize

/// Tints the foreground (nonzero) pixels of a grayscale digit with the
/// domain's anchor color, perturbed by jitter. Out-of-gamut colors clamp.
inline TensorF colorize(const TensorF& gray, int bias_label, const std::vector<std::array<float, 3>>& palette,
                        double jitter, Rng& rng) {
  if (bias_label < 0 || bias_label >= static_cast<int>(palette.size()))
    throw DataError("colorize: bias label out of range");
  const int h = gray.dim(2), w = gray.dim(3);
  std::array<float, 3> col = palette[static_cast<size_t>(bias_label)];
  for (auto& c : col) c = std::clamp(c + static_cast<float>(jitter * rng.normal()), 0.0f, 1.0f);
  TensorF out({1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(0, c, y, x) = gray.at(0, 0, y, x) * col[static_cast<size_t>(c)];
  return out;
}

/// Two-attribute variant: left image half tinted with one domain color,
/// right half with another.
inline TensorF colorize_left_right(const TensorF& gray, int bias_left, int bias_right,
                                   const std::vector<std::array<float, 3>>& palette, double jitter, Rng& rng) {
  const int h = gray.dim(2), w = gray.dim(3);
  auto jitter_col = [&](int dom) {
    std::array<float, 3> col = palette[static_cast<size_t>(dom)];
    for (auto& c : col) c = std::clamp(c + static_cast<float>(jitter * rng.normal()), 0.0f, 1.0f);
    return col;
  };
  std::array<float, 3> cl = jitter_col(bias_left), cr = jitter_col(bias_right);
  TensorF out({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& col = (x < w / 2) ? cl : cr;
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = gray.at(0, 0, y, x) * col[static_cast<size_t>(c)];
    }
  return out;
}

// ---------------------------------------------------------------------------
// corrupted-CIFAR-style stand-in: procedural object images + per-domain
// texture corruptions

namespace detail {

inline TensorF render_object(int cls, int size, Rng& rng) {
  TensorF img({1, 3, size, size});
  // value-noise background
  float base = static_cast<float>(rng.uniform(0.25, 0.55));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      float v = base + static_cast<float>(rng.uniform(-0.06, 0.06));
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = v;
    }
  double cx = 0.5 + rng.uniform(-0.08, 0.08), cy = 0.5 + rng.uniform(-0.08, 0.08);
  double r = rng.uniform(0.22, 0.33);
  double rot = rng.uniform(0, 2 * M_PI);
  float fg = static_cast<float>(rng.uniform(0.75, 1.0));
  auto inside = [&](double ux, double uy) {
    double dx = ux - cx, dy = uy - cy;
    double rx = std::cos(rot) * dx - std::sin(rot) * dy;
    double ry = std::sin(rot) * dx + std::cos(rot) * dy;
    double ax = std::fabs(rx), ay = std::fabs(ry);
    switch (cls) {
      case 0: return rx * rx + ry * ry < r * r;                        // disc
      case 1: return ax < r * 0.8 && ay < r * 0.8;                     // square
      case 2: return ry > -r * 0.7 && ay < r && ax < (r - ry) * 0.6;   // triangle
      case 3: return (ax < r * 0.25 && ay < r) || (ay < r * 0.25 && ax < r);  // cross
      case 4: {
        double rr = std::sqrt(rx * rx + ry * ry);
        return rr < r && rr > r * 0.55;                                // ring
      }
      case 5: return ay < r && ax < r && std::fmod(ry + 10.0, 0.16) < 0.08;   // h-bars
      case 6: return ay < r && ax < r && std::fmod(rx + 10.0, 0.16) < 0.08;   // v-bars
      case 7: return ax + ay < r;                                      // diamond
      case 8: return (ax < r * 0.3 && ay < r) || (ry > r * 0.4 && ry < r && rx > -r * 0.3 && rx < r);  // L
      case 9: {
        double rr = std::hypot(std::fmod(rx + 10.0, 0.22) - 0.11, std::fmod(ry + 10.0, 0.22) - 0.11);
        return ax < r && ay < r && rr < 0.055;                         // dot grid
      }
      default: throw DataError("object renderer supports classes 0-9");
    }
  };
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (inside((x + 0.5) / size, (y + 0.5) / size))
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = fg;
  return img;
}

inline void corrupt(TensorF& img, int domain, Rng& rng) {
  const int size = img.dim(2);
  auto clampit = [&] {
    for (long i = 0; i < img.size(); ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
  };
  switch (domain % 10) {
    case 0:  // gaussian noise
      for (long i = 0; i < img.size(); ++i) img[i] += static_cast<float>(rng.normal(0, 0.10));
      break;
    case 1: {  // box blur
      TensorF src = img;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            float s = 0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                int yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < size && xx >= 0 && xx < size) {
                  s += src.at(0, c, yy, xx);
                  ++cnt;
                }
              }
            img.at(0, c, y, x) = s / static_cast<float>(cnt);
          }
      break;
    }
    case 2:  // contrast up
      for (long i = 0; i < img.size(); ++i) img[i] = 0.5f + 1.9f * (img[i] - 0.5f);
      break;
    case 3:  // contrast down
      for (long i = 0; i < img.size(); ++i) img[i] = 0.5f + 0.45f * (img[i] - 0.5f);
      break;
    case 4:  // brighten
      for (long i = 0; i < img.size(); ++i) img[i] += 0.28f;
      break;
    case 5:  // darken
      for (long i = 0; i < img.size(); ++i) img[i] -= 0.28f;
      break;
    case 6:  // red cast
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          img.at(0, 0, y, x) = std::min(1.0f, img.at(0, 0, y, x) + 0.30f);
          img.at(0, 2, y, x) *= 0.6f;
        }
      break;
    case 7:  // blue cast
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          img.at(0, 2, y, x) = std::min(1.0f, img.at(0, 2, y, x) + 0.30f);
          img.at(0, 1, y, x) *= 0.6f;
        }
      break;
    case 8: {  // pixelate 2x
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; y += 2)
          for (int x = 0; x < size; x += 2) {
            float v = img.at(0, c, y, x);
            for (int dy = 0; dy < 2 && y + dy < size; ++dy)
              for (int dx = 0; dx < 2 && x + dx < size; ++dx) img.at(0, c, y + dy, x + dx) = v;
          }
      break;
    }
    case 9:  // scanline stripes
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
          if (y % 3 == 0)
            for (int x = 0; x < size; ++x) img.at(0, c, y, x) *= 0.45f;
      break;
  }
  clampit();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synthesis

/// Exact per-class conflicting counts: round(bcr * class_size), so the
/// realized ratio matches the request within one sample per class.
inline int conflicting_count(double bcr, int class_size) {
  return static_cast<int>(std::llround(bcr * class_size));
}

namespace detail {

inline void validate(const DatasetSpec& spec) {
  if (spec.bcr < 0.0 || spec.bcr > 1.0) throw DataError("synthesize: bcr must lie in [0, 1]");
  if (spec.bcr2 < 0.0 || spec.bcr2 > 1.0) throw DataError("synthesize: bcr2 must lie in [0, 1]");
  if (spec.n_classes < 2) throw DataError("synthesize: need at least 2 classes");
  if (spec.n_bias_domains < 2) throw DataError("synthesize: need at least 2 bias domains");
  if (spec.n_samples < spec.n_classes) throw DataError("synthesize: dataset smaller than class count");
  if (spec.kind == DatasetKind::colored_mnist && spec.n_bias_domains != spec.n_classes)
    throw DataError("colored_mnist requires one bias domain per class");
}

/// Per-class sample counts (as even as possible) and per-class bias labels.
struct Assignment {
  std::vector<int> labels, bias, bias2;
  std::vector<uint8_t> aligned, aligned2;
  std::vector<int> per_class_conflicting;
};

inline Assignment assign_bias(const DatasetSpec& spec, Rng& rng, bool two_attributes) {
  const int k = spec.n_classes, b = spec.n_bias_domains;
  Assignment out;
  out.per_class_conflicting.assign(static_cast<size_t>(k), 0);
  for (int c = 0; c < k; ++c) {
    int n_c = spec.n_samples / k + (c < spec.n_samples % k ? 1 : 0);
    if (spec.split == Split::train) {
      int n_conf = conflicting_count(spec.bcr, n_c);
      int n_conf2 = conflicting_count(spec.bcr2, n_c);
      out.per_class_conflicting[static_cast<size_t>(c)] = n_conf;
      std::vector<int> order(static_cast<size_t>(n_c));
      for (int i = 0; i < n_c; ++i) order[static_cast<size_t>(i)] = i;
      rng.shuffle(order);
      std::vector<uint8_t> conf(static_cast<size_t>(n_c), 0);
      for (int i = 0; i < n_conf; ++i) conf[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
      std::vector<uint8_t> conf2(static_cast<size_t>(n_c), 0);
      if (two_attributes) {
        rng.shuffle(order);  // independent subset for the second attribute
        for (int i = 0; i < n_conf2; ++i) conf2[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
      }
      for (int i = 0; i < n_c; ++i) {
        out.labels.push_back(c);
        int dom = conf[static_cast<size_t>(i)] ? rng.uniform_int_excluding(b, c) : c;
        out.bias.push_back(dom);
        out.aligned.push_back(dom == c ? 1 : 0);
        if (two_attributes) {
          int dom2 = conf2[static_cast<size_t>(i)] ? rng.uniform_int_excluding(b, c) : c;
          out.bias2.push_back(dom2);
          out.aligned2.push_back(dom2 == c ? 1 : 0);
        }
      }
    } else {
      // unbiased split: bias independent of the class, uniform over domains
      for (int i = 0; i < n_c; ++i) {
        out.labels.push_back(c);
        int dom = rng.uniform_int(b);
        out.bias.push_back(dom);
        out.aligned.push_back(dom == c ? 1 : 0);
        if (two_attributes) {
          int dom2 = rng.uniform_int(b);
          out.bias2.push_back(dom2);
          out.aligned2.push_back(dom2 == c ? 1 : 0);
        }
      }
    }
  }
  return out;
}

}  // namespace detail

inline Dataset synthesize(const DatasetSpec& spec) {
  detail::validate(spec);
  const bool multi = spec.kind == DatasetKind::multi_colored_mnist;
  Rng rng = Rng(spec.seed).derive(spec.split == Split::train ? "train" : "test");
  detail::Assignment asg = detail::assign_bias(spec, rng, multi);

  const int n = static_cast<int>(asg.labels.size());
  Dataset ds;
  ds.spec = spec;
  ds.palette = make_palette(spec.n_bias_domains);
  ds.labels = asg.labels;
  ds.bias = asg.bias;
  ds.bias2 = asg.bias2;
  ds.aligned = asg.aligned;
  ds.aligned2 = asg.aligned2;
  ds.per_class_conflicting = asg.per_class_conflicting;
  ds.images = TensorF({n, 3, spec.img_size, spec.img_size});

  const long chw = 3L * spec.img_size * spec.img_size;
  for (int i = 0; i < n; ++i) {
    TensorF img;
    switch (spec.kind) {
      case DatasetKind::colored_mnist: {
        RenderParams rp = sample_render_params(rng);
        TensorF gray = render_digit(ds.labels[static_cast<size_t>(i)], spec.img_size, rp);
        img = colorize(gray, ds.bias[static_cast<size_t>(i)], ds.palette, spec.color_jitter, rng);
        break;
      }
      case DatasetKind::multi_colored_mnist: {
        RenderParams rp = sample_render_params(rng);
        TensorF gray = render_digit(ds.labels[static_cast<size_t>(i)], spec.img_size, rp);
        img = colorize_left_right(gray, ds.bias[static_cast<size_t>(i)], ds.bias2[static_cast<size_t>(i)],
                                  ds.palette, spec.color_jitter, rng);
        break;
      }
      case DatasetKind::corrupted_cifar10_style: {
        img = detail::render_object(ds.labels[static_cast<size_t>(i)], spec.img_size, rng);
        detail::corrupt(img, ds.bias[static_cast<size_t>(i)], rng);
        break;
      }
    }
    std::copy(img.data(), img.data() + chw, ds.images.data() + static_cast<long>(i) * chw);
  }

  // mix classes within the split
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  Dataset shuffled = ds;
  for (int i = 0; i < n; ++i) {
    int src = perm[static_cast<size_t>(i)];
    shuffled.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
    shuffled.bias[static_cast<size_t>(i)] = ds.bias[static_cast<size_t>(src)];
    shuffled.aligned[static_cast<size_t>(i)] = ds.aligned[static_cast<size_t>(src)];
    if (multi) {
      shuffled.bias2[static_cast<size_t>(i)] = ds.bias2[static_cast<size_t>(src)];
      shuffled.aligned2[static_cast<size_t>(i)] = ds.aligned2[static_cast<size_t>(src)];
    }
    std::copy(ds.images.data() + static_cast<long>(src) * chw, ds.images.data() + static_cast<long>(src + 1) * chw,
              shuffled.images.data() + static_cast<long>(i) * chw);
  }
  return shuffled;
}

/// Two-attribute synthesis; spec.bcr is the left-color BCR, spec.bcr2 the
/// right-color BCR.
inline Dataset make_multibias(DatasetSpec spec) {
  spec.kind = DatasetKind::multi_colored_mnist;
  return synthesize(spec);
}

// ---------------------------------------------------------------------------
// on-disk format: one binary tensor file per split + JSON manifest

inline void save_split(const Dataset& ds, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset split: " + path);
  os.write("BLDDATA1", 8);
  io::write_string(os, ds.spec.to_json().dump());
  io::write_tensor_f(os, ds.images);
  auto write_ints = [&](const std::vector<int>& v) {
    io::write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(int)));
  };
  auto write_flags = [&](const std::vector<uint8_t>& v) {
    io::write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
  };
  write_ints(ds.labels);
  write_ints(ds.bias);
  write_ints(ds.bias2);
  write_flags(ds.aligned);
  write_flags(ds.aligned2);
  if (!os) throw DataError("short write on dataset split: " + path);
}

inline Dataset load_split(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset split: " + path + " (run synth-data first)");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "BLDDATA1") throw DataError("bad dataset magic in " + path);
  Dataset ds;
  ds.spec = DatasetSpec::from_json(nlohmann::json::parse(io::read_string(is)));
  ds.images = io::read_tensor_f(is);
  auto read_ints = [&] {
    std::vector<int> v(io::read_u64(is));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(int)));
    return v;
  };
  auto read_flags = [&] {
    std::vector<uint8_t> v(io::read_u64(is));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size()));
    return v;
  };
  ds.labels = read_ints();
  ds.bias = read_ints();
  ds.bias2 = read_ints();
  ds.aligned = read_flags();
  ds.aligned2 = read_flags();
  ds.palette = make_palette(ds.spec.n_bias_domains);
  if (!is) throw DataError("truncated dataset split: " + path);
  for (size_t c = 0; c < static_cast<size_t>(ds.spec.n_classes); ++c) ds.per_class_conflicting.push_back(0);
  for (int i = 0; i < ds.n(); ++i)
    if (ds.spec.split == Split::train && !ds.aligned[static_cast<size_t>(i)])
      ds.per_class_conflicting[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])]++;
  return ds;
}

inline nlohmann::json dataset_manifest(const Dataset& ds) {
  nlohmann::json pal = nlohmann::json::array();
  for (auto& c : ds.palette) pal.push_back({c[0], c[1], c[2]});
  return {{"spec", ds.spec.to_json()},
          {"seed", ds.spec.seed},
          {"palette", pal},
          {"n_samples", ds.n()},
          {"per_class_conflicting", ds.per_class_conflicting}};
}

}  // namespace data
}  // namespace blade
