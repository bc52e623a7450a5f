#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/image.hpp"
#include "blade/core/random.hpp"
#include "blade/core/serialize.hpp"
#include "blade/core/tensor.hpp"
#include "blade/data/biased_data.hpp"
#include "blade/losses.hpp"
#include "blade/nn/layers.hpp"
#include "blade/nn/optim.hpp"

// Bias translator: a multi-domain image-to-image generator conditioned on a
// learned per-domain style code. The style encoder maps a reference image to
// a bank of per-domain style vectors; the selected vector modulates the
// generator through AdaIN blocks placed before each upsampling layer. The
// discriminator carries an auxiliary domain classifier trained on real
// images, which in a biased training set latches onto the spurious attribute
// and steers the generator toward translating exactly that attribute.

namespace blade {
namespace gan {

constexpr float kAdainVarianceFloor = 1e-5f;

/// Continuous per-domain conditioning code.
template <class S>
struct DomainStyle {
  Tensor<S> vector;  // {d_style}
  int domain_id = 0;
};

// ---------------------------------------------------------------------------
// building blocks

template <class S>
struct ConvINAct {
  nn::Conv2d<S> conv;
  nn::InstanceNorm<S> norm;
  nn::ReLU<S> act;

  struct Ctx {
    typename nn::Conv2d<S>::Ctx c;
    typename nn::InstanceNorm<S>::Ctx n;
    typename nn::ReLU<S>::Ctx r;
  };

  ConvINAct() = default;
  ConvINAct(int in, int out, int k, int stride, int pad) : conv(in, out, k, stride, pad), norm(out) {}

  void init(Rng& rng) { conv.init(rng); }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    Tensor<S> h = conv.forward(x, ctx ? &ctx->c : nullptr);
    h = norm.forward(h, ctx ? &ctx->n : nullptr);
    return act.forward(h, ctx ? &ctx->r : nullptr);
  }
  Tensor<S> backward(const Tensor<S>& gy, Ctx& ctx) {
    Tensor<S> g = act.backward(gy, ctx.r);
    g = norm.backward(g, ctx.n);
    return conv.backward(g, ctx.c);
  }
  void collect(const std::string& p, nn::NamedParams<S>& out) {
    conv.collect(p + ".conv", out);
    norm.collect(p + ".norm", out);
  }
};

template <class S>
struct ResBlock {
  nn::Conv2d<S> c1, c2;
  nn::InstanceNorm<S> n1, n2;
  nn::ReLU<S> act;

  struct Ctx {
    typename nn::Conv2d<S>::Ctx c1, c2;
    typename nn::InstanceNorm<S>::Ctx n1, n2;
    typename nn::ReLU<S>::Ctx r;
  };

  ResBlock() = default;
  explicit ResBlock(int ch) : c1(ch, ch, 3, 1, 1), c2(ch, ch, 3, 1, 1), n1(ch), n2(ch) {}

  void init(Rng& rng) {
    c1.init(rng);
    c2.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    Tensor<S> h = c1.forward(x, ctx ? &ctx->c1 : nullptr);
    h = n1.forward(h, ctx ? &ctx->n1 : nullptr);
    h = act.forward(h, ctx ? &ctx->r : nullptr);
    h = c2.forward(h, ctx ? &ctx->c2 : nullptr);
    h = n2.forward(h, ctx ? &ctx->n2 : nullptr);
    return x + h;
  }
  Tensor<S> backward(const Tensor<S>& gy, Ctx& ctx) {
    Tensor<S> g = n2.backward(gy, ctx.n2);
    g = c2.backward(g, ctx.c2);
    g = act.backward(g, ctx.r);
    g = n1.backward(g, ctx.n1);
    g = c1.backward(g, ctx.c1);
    return gy + g;
  }
  void collect(const std::string& p, nn::NamedParams<S>& out) {
    c1.collect(p + ".c1", out);
    n1.collect(p + ".n1", out);
    c2.collect(p + ".c2", out);
    n2.collect(p + ".n2", out);
  }
};

namespace detail {

template <class S>
void split_gamma_beta(const Tensor<S>& gb, Tensor<S>& gamma, Tensor<S>& beta) {
  const int n = gb.dim(0), c2 = gb.dim(1), c = c2 / 2;
  gamma = Tensor<S>({n, c});
  beta = Tensor<S>({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      gamma[static_cast<long>(i) * c + j] = gb[static_cast<long>(i) * c2 + j];
      beta[static_cast<long>(i) * c + j] = gb[static_cast<long>(i) * c2 + c + j];
    }
}

template <class S>
Tensor<S> join_gamma_beta(const Tensor<S>& ggamma, const Tensor<S>& gbeta) {
  const int n = ggamma.dim(0), c = ggamma.dim(1);
  Tensor<S> gb({n, 2 * c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      gb[static_cast<long>(i) * 2 * c + j] = ggamma[static_cast<long>(i) * c + j];
      gb[static_cast<long>(i) * 2 * c + c + j] = gbeta[static_cast<long>(i) * c + j];
    }
  return gb;
}

}  // namespace detail

/// Conv -> AdaIN -> ReLU -> Conv -> AdaIN (no activation after the second
/// stage). Each stage has its own learned projection from the style code to
/// per-channel (gamma, beta).
template <class S>
struct AdainBlock {
  nn::Conv2d<S> conv1, conv2;
  nn::Linear<S> proj1, proj2;  // d_style -> 2 * channels
  nn::ReLU<S> act;

  struct Ctx {
    typename nn::Conv2d<S>::Ctx c1, c2;
    typename nn::Linear<S>::Ctx p1, p2;
    nn::AdainCtx<S> a1, a2;
    typename nn::ReLU<S>::Ctx r;
  };

  AdainBlock() = default;
  AdainBlock(int ch, int d_style)
      : conv1(ch, ch, 3, 1, 1), conv2(ch, ch, 3, 1, 1), proj1(d_style, 2 * ch), proj2(d_style, 2 * ch), ch_(ch) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    proj1.init(rng, /*relu_gain=*/false);
    proj2.init(rng, /*relu_gain=*/false);
    // start from an identity-like affine: gamma 1, beta 0
    for (int j = 0; j < ch_; ++j) proj1.b.v[j] = S(1);
    for (int j = 0; j < ch_; ++j) proj2.b.v[j] = S(1);
  }

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& style, Ctx* ctx) const {
    Tensor<S> gamma, beta;
    Tensor<S> gb = proj1.forward(style, ctx ? &ctx->p1 : nullptr);
    detail::split_gamma_beta(gb, gamma, beta);
    Tensor<S> h = conv1.forward(x, ctx ? &ctx->c1 : nullptr);
    h = nn::adain_forward(h, gamma, beta, S(kAdainVarianceFloor), ctx ? &ctx->a1 : nullptr);
    h = act.forward(h, ctx ? &ctx->r : nullptr);
    gb = proj2.forward(style, ctx ? &ctx->p2 : nullptr);
    detail::split_gamma_beta(gb, gamma, beta);
    h = conv2.forward(h, ctx ? &ctx->c2 : nullptr);
    return nn::adain_forward(h, gamma, beta, S(kAdainVarianceFloor), ctx ? &ctx->a2 : nullptr);
  }

  /// Returns gx; adds the style gradient into gstyle.
  Tensor<S> backward(const Tensor<S>& gy, Ctx& ctx, Tensor<S>& gstyle) {
    Tensor<S> ggamma, gbeta;
    Tensor<S> g = nn::adain_backward(gy, ctx.a2, ggamma, gbeta);
    add_inplace(gstyle, proj2.backward(detail::join_gamma_beta(ggamma, gbeta), ctx.p2));
    g = conv2.backward(g, ctx.c2);
    g = act.backward(g, ctx.r);
    g = nn::adain_backward(g, ctx.a1, ggamma, gbeta);
    add_inplace(gstyle, proj1.backward(detail::join_gamma_beta(ggamma, gbeta), ctx.p1));
    return conv1.backward(g, ctx.c1);
  }

  void collect(const std::string& p, nn::NamedParams<S>& out) {
    conv1.collect(p + ".conv1", out);
    conv2.collect(p + ".conv2", out);
    proj1.collect(p + ".proj1", out);
    proj2.collect(p + ".proj2", out);
  }

 private:
  int ch_ = 0;
};

// ---------------------------------------------------------------------------
// generator

struct GeneratorConfig {
  int in_channels = 3;
  int base_channels = 16;
  int n_res_blocks = 3;  // 3 for the MNIST-scale profile, 6 otherwise
  int d_style = 64;

  nlohmann::json to_json() const {
    return {{"in_channels", in_channels},
            {"base_channels", base_channels},
            {"n_res_blocks", n_res_blocks},
            {"d_style", d_style}};
  }
  static GeneratorConfig from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.in_channels = j.at("in_channels");
    c.base_channels = j.at("base_channels");
    c.n_res_blocks = j.at("n_res_blocks");
    c.d_style = j.at("d_style");
    return c;
  }
};

template <class S>
class Generator {
 public:
  struct Ctx {
    typename ConvINAct<S>::Ctx stem, down1, down2, up1c, up2c;
    std::vector<typename ResBlock<S>::Ctx> res;
    typename AdainBlock<S>::Ctx ad0, ad1, ad2, ad3;
    typename nn::Conv2d<S>::Ctx rgb;
    typename nn::Tanh01<S>::Ctx tanh;
  };

  Generator() = default;
  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    const int c = cfg.base_channels;
    stem_ = ConvINAct<S>(cfg.in_channels, c, 7, 1, 3);
    down1_ = ConvINAct<S>(c, 2 * c, 4, 2, 1);
    down2_ = ConvINAct<S>(2 * c, 4 * c, 4, 2, 1);
    for (int i = 0; i < cfg.n_res_blocks; ++i) res_.emplace_back(4 * c);
    ad_deep_[0] = AdainBlock<S>(4 * c, cfg.d_style);
    ad_deep_[1] = AdainBlock<S>(4 * c, cfg.d_style);
    up1_ = ConvINAct<S>(4 * c, 2 * c, 3, 1, 1);
    ad_mid_[0] = AdainBlock<S>(2 * c, cfg.d_style);
    ad_mid_[1] = AdainBlock<S>(2 * c, cfg.d_style);
    up2_ = ConvINAct<S>(2 * c, c, 3, 1, 1);
    to_rgb_ = nn::Conv2d<S>(c, cfg.in_channels, 7, 1, 3);
  }

  void init(Rng& rng) {
    stem_.init(rng);
    down1_.init(rng);
    down2_.init(rng);
    for (auto& r : res_) r.init(rng);
    for (auto& a : ad_deep_) a.init(rng);
    for (auto& a : ad_mid_) a.init(rng);
    up1_.init(rng);
    up2_.init(rng);
    to_rgb_.init(rng, /*relu_gain=*/false);
  }

  /// x: {N,C,H,W}; style: {N,d_style}. Output has the shape and range of x.
  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& style, Ctx* ctx) const {
    if (ctx) ctx->res.resize(res_.size());
    Tensor<S> h = stem_.forward(x, ctx ? &ctx->stem : nullptr);
    h = down1_.forward(h, ctx ? &ctx->down1 : nullptr);
    h = down2_.forward(h, ctx ? &ctx->down2 : nullptr);
    for (size_t i = 0; i < res_.size(); ++i) h = res_[i].forward(h, ctx ? &ctx->res[i] : nullptr);
    h = ad_deep_[0].forward(h, style, ctx ? &ctx->ad0 : nullptr);
    h = ad_deep_[1].forward(h, style, ctx ? &ctx->ad1 : nullptr);
    h = up_.forward(h);
    h = up1_.forward(h, ctx ? &ctx->up1c : nullptr);
    h = ad_mid_[0].forward(h, style, ctx ? &ctx->ad2 : nullptr);
    h = ad_mid_[1].forward(h, style, ctx ? &ctx->ad3 : nullptr);
    h = up_.forward(h);
    h = up2_.forward(h, ctx ? &ctx->up2c : nullptr);
    h = to_rgb_.forward(h, ctx ? &ctx->rgb : nullptr);
    return tanh_.forward(h, ctx ? &ctx->tanh : nullptr);
  }

  struct Grads {
    Tensor<S> gx, gstyle;
  };

  Grads backward(const Tensor<S>& gy, Ctx& ctx) {
    Tensor<S> gstyle({ctx.tanh.y.dim(0), cfg_.d_style});
    Tensor<S> g = tanh_.backward(gy, ctx.tanh);
    g = to_rgb_.backward(g, ctx.rgb);
    g = up2_.backward(g, ctx.up2c);
    g = up_.backward(g);
    g = ad_mid_[1].backward(g, ctx.ad3, gstyle);
    g = ad_mid_[0].backward(g, ctx.ad2, gstyle);
    g = up1_.backward(g, ctx.up1c);
    g = up_.backward(g);
    g = ad_deep_[1].backward(g, ctx.ad1, gstyle);
    g = ad_deep_[0].backward(g, ctx.ad0, gstyle);
    for (size_t i = res_.size(); i-- > 0;) g = res_[static_cast<size_t>(i)].backward(g, ctx.res[static_cast<size_t>(i)]);
    g = down2_.backward(g, ctx.down2);
    g = down1_.backward(g, ctx.down1);
    g = stem_.backward(g, ctx.stem);
    return {std::move(g), std::move(gstyle)};
  }

  void collect(const std::string& p, nn::NamedParams<S>& out) {
    stem_.collect(p + ".stem", out);
    down1_.collect(p + ".down1", out);
    down2_.collect(p + ".down2", out);
    for (size_t i = 0; i < res_.size(); ++i) res_[i].collect(p + ".res" + std::to_string(i), out);
    ad_deep_[0].collect(p + ".ad0", out);
    ad_deep_[1].collect(p + ".ad1", out);
    up1_.collect(p + ".up1", out);
    ad_mid_[0].collect(p + ".ad2", out);
    ad_mid_[1].collect(p + ".ad3", out);
    up2_.collect(p + ".up2", out);
    to_rgb_.collect(p + ".to_rgb", out);
  }

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  ConvINAct<S> stem_, down1_, down2_, up1_, up2_;
  std::vector<ResBlock<S>> res_;
  std::array<AdainBlock<S>, 2> ad_deep_, ad_mid_;
  nn::Conv2d<S> to_rgb_;
  nn::Upsample2x<S> up_;
  nn::Tanh01<S> tanh_;
};

// ---------------------------------------------------------------------------
// domain encoder: reference image -> bank of per-domain style vectors

template <class S>
class DomainEncoder {
 public:
  struct Ctx {
    typename ConvINAct<S>::Ctx stem, down1, down2, head;
    std::vector<typename ResBlock<S>::Ctx> res;
    typename nn::GlobalAvgPool<S>::Ctx gap;
    typename nn::Linear<S>::Ctx fc;
  };

  DomainEncoder() = default;
  DomainEncoder(int in_channels, int base_channels, int n_domains, int d_style)
      : n_domains_(n_domains), d_style_(d_style) {
    const int c = base_channels;
    stem_ = ConvINAct<S>(in_channels, c, 7, 1, 3);
    down1_ = ConvINAct<S>(c, 2 * c, 4, 2, 1);
    down2_ = ConvINAct<S>(2 * c, 4 * c, 4, 2, 1);
    for (int i = 0; i < 3; ++i) res_.emplace_back(4 * c);
    head_ = ConvINAct<S>(4 * c, 4 * c, 3, 1, 1);
    fc_ = nn::Linear<S>(4 * c, n_domains * d_style);
  }

  void init(Rng& rng) {
    stem_.init(rng);
    down1_.init(rng);
    down2_.init(rng);
    for (auto& r : res_) r.init(rng);
    head_.init(rng);
    fc_.init(rng, /*relu_gain=*/false);
  }

  /// Returns the style bank {N, n_domains * d_style}.
  Tensor<S> forward(const Tensor<S>& ref, Ctx* ctx) const {
    if (ctx) ctx->res.resize(res_.size());
    Tensor<S> h = stem_.forward(ref, ctx ? &ctx->stem : nullptr);
    h = down1_.forward(h, ctx ? &ctx->down1 : nullptr);
    h = down2_.forward(h, ctx ? &ctx->down2 : nullptr);
    for (size_t i = 0; i < res_.size(); ++i) h = res_[i].forward(h, ctx ? &ctx->res[i] : nullptr);
    h = head_.forward(h, ctx ? &ctx->head : nullptr);
    Tensor<S> pooled = gap_.forward(h, ctx ? &ctx->gap : nullptr);
    return fc_.forward(pooled, ctx ? &ctx->fc : nullptr);
  }

  Tensor<S> backward(const Tensor<S>& gbank, Ctx& ctx) {
    Tensor<S> g = fc_.backward(gbank, ctx.fc);
    g = gap_.backward(g, ctx.gap);
    g = head_.backward(g, ctx.head);
    for (size_t i = res_.size(); i-- > 0;) g = res_[i].backward(g, ctx.res[i]);
    g = down2_.backward(g, ctx.down2);
    g = down1_.backward(g, ctx.down1);
    return stem_.backward(g, ctx.stem);
  }

  /// Indexes the bank with one target domain per row.
  Tensor<S> select(const Tensor<S>& bank, const std::vector<int>& domains) const {
    const int n = bank.dim(0);
    Tensor<S> style({n, d_style_});
    for (int i = 0; i < n; ++i) {
      const S* src = bank.data() + static_cast<long>(i) * n_domains_ * d_style_ +
                     static_cast<long>(domains[static_cast<size_t>(i)]) * d_style_;
      std::copy(src, src + d_style_, style.data() + static_cast<long>(i) * d_style_);
    }
    return style;
  }

  Tensor<S> scatter_style_grad(const Tensor<S>& gstyle, const std::vector<int>& domains) const {
    const int n = gstyle.dim(0);
    Tensor<S> gbank({n, n_domains_ * d_style_});
    for (int i = 0; i < n; ++i) {
      S* dst = gbank.data() + static_cast<long>(i) * n_domains_ * d_style_ +
               static_cast<long>(domains[static_cast<size_t>(i)]) * d_style_;
      const S* src = gstyle.data() + static_cast<long>(i) * d_style_;
      for (int j = 0; j < d_style_; ++j) dst[j] += src[j];
    }
    return gbank;
  }

  DomainStyle<S> style_of(const Tensor<S>& bank, int row, int domain) const {
    DomainStyle<S> s;
    s.domain_id = domain;
    s.vector = Tensor<S>({d_style_});
    const S* src = bank.data() + static_cast<long>(row) * n_domains_ * d_style_ + static_cast<long>(domain) * d_style_;
    std::copy(src, src + d_style_, s.vector.data());
    return s;
  }

  void collect(const std::string& p, nn::NamedParams<S>& out) {
    stem_.collect(p + ".stem", out);
    down1_.collect(p + ".down1", out);
    down2_.collect(p + ".down2", out);
    for (size_t i = 0; i < res_.size(); ++i) res_[i].collect(p + ".res" + std::to_string(i), out);
    head_.collect(p + ".head", out);
    fc_.collect(p + ".fc", out);
  }

  int n_domains() const { return n_domains_; }
  int d_style() const { return d_style_; }

 private:
  int n_domains_ = 0, d_style_ = 0;
  ConvINAct<S> stem_, down1_, down2_, head_;
  std::vector<ResBlock<S>> res_;
  nn::GlobalAvgPool<S> gap_;
  nn::Linear<S> fc_;
};

// ---------------------------------------------------------------------------
// discriminator with auxiliary domain classifier

template <class S>
class Discriminator {
 public:
  struct Ctx {
    std::vector<typename nn::Conv2d<S>::Ctx> convs;
    std::vector<typename nn::LeakyReLU<S>::Ctx> acts;
    typename nn::Conv2d<S>::Ctx adv;
    typename nn::Linear<S>::Ctx cls;
    int hf = 0, wf = 0;
  };

  struct Output {
    Tensor<S> adv;  // {N,1,hf,wf} patch scores
    Tensor<S> cls;  // {N,K} domain logits
  };

  Discriminator() = default;
  Discriminator(int in_channels, int base_channels, int n_blocks, int n_domains, int img_size)
      : n_blocks_(n_blocks), n_domains_(n_domains) {
    int c_in = in_channels;
    int size = img_size;
    for (int i = 0; i < n_blocks; ++i) {
      int c_out = std::min(base_channels << i, base_channels * 8);
      convs_.emplace_back(c_in, c_out, 4, 2, 1);
      acts_.emplace_back(S(0.01));
      c_in = c_out;
      size = (size + 2 - 4) / 2 + 1;
    }
    final_ch_ = c_in;
    final_size_ = size;
    adv_head_ = nn::Conv2d<S>(c_in, 1, 3, 1, 1);
    cls_head_ = nn::Linear<S>(c_in * size * size, n_domains);
  }

  void init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    adv_head_.init(rng, false);
    cls_head_.init(rng, false);
  }

  Output forward(const Tensor<S>& x, Ctx* ctx) const {
    if (ctx) {
      ctx->convs.resize(convs_.size());
      ctx->acts.resize(acts_.size());
    }
    Tensor<S> h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i].forward(h, ctx ? &ctx->convs[i] : nullptr);
      h = acts_[i].forward(h, ctx ? &ctx->acts[i] : nullptr);
    }
    const int n = h.dim(0);
    if (ctx) {
      ctx->hf = h.dim(2);
      ctx->wf = h.dim(3);
    }
    Output out;
    out.adv = adv_head_.forward(h, ctx ? &ctx->adv : nullptr);
    Tensor<S> flat = h.reshaped({n, final_ch_ * final_size_ * final_size_});
    out.cls = cls_head_.forward(flat, ctx ? &ctx->cls : nullptr);
    return out;
  }

  Tensor<S> backward(const Tensor<S>& g_adv, const Tensor<S>& g_cls, Ctx& ctx) {
    Tensor<S> g = adv_head_.backward(g_adv, ctx.adv);
    Tensor<S> g_flat = cls_head_.backward(g_cls, ctx.cls);
    add_inplace(g, g_flat.reshaped({g.dim(0), final_ch_, ctx.hf, ctx.wf}));
    for (size_t i = convs_.size(); i-- > 0;) {
      g = acts_[i].backward(g, ctx.acts[i]);
      g = convs_[i].backward(g, ctx.convs[i]);
    }
    return g;
  }

  void collect(const std::string& p, nn::NamedParams<S>& out) {
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(p + ".conv" + std::to_string(i), out);
    adv_head_.collect(p + ".adv", out);
    cls_head_.collect(p + ".cls", out);
  }

  /// argmax domain predictions of the auxiliary classifier.
  std::vector<int> classify_domains(const Tensor<S>& x) const {
    Output out = forward(x, nullptr);
    const int n = out.cls.dim(0), k = out.cls.dim(1);
    std::vector<int> pred(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (out.cls[static_cast<long>(i) * k + j] > out.cls[static_cast<long>(i) * k + best]) best = j;
      pred[static_cast<size_t>(i)] = best;
    }
    return pred;
  }

  int n_domains() const { return n_domains_; }

 private:
  int n_blocks_ = 0, n_domains_ = 0, final_ch_ = 0, final_size_ = 0;
  std::vector<nn::Conv2d<S>> convs_;
  std::vector<nn::LeakyReLU<S>> acts_;
  nn::Conv2d<S> adv_head_;
  nn::Linear<S> cls_head_;
};

// ---------------------------------------------------------------------------
// trained translator handle (generator + cached per-domain mean styles)

class BiasTranslator {
 public:
  BiasTranslator() = default;
  BiasTranslator(Generator<float> g, TensorF mean_styles, int n_domains)
      : g_(std::move(g)), mean_styles_(std::move(mean_styles)), n_domains_(n_domains) {}

  /// Translate a batch to per-sample target domains using the cached mean
  /// styles. Inference only, deterministic.
  TensorF translate(const TensorF& x, const std::vector<int>& targets) const {
    const int n = x.dim(0);
    TensorF style({n, g_.config().d_style});
    for (int i = 0; i < n; ++i) {
      const float* src = mean_styles_.data() + static_cast<long>(targets[static_cast<size_t>(i)]) * g_.config().d_style;
      std::copy(src, src + g_.config().d_style, style.data() + static_cast<long>(i) * g_.config().d_style);
    }
    return g_.forward(x, style, nullptr);
  }

  TensorF translate_all_to(const TensorF& x, int target) const {
    return translate(x, std::vector<int>(static_cast<size_t>(x.dim(0)), target));
  }

  const Generator<float>& generator() const { return g_; }
  Generator<float>& generator() { return g_; }
  const TensorF& mean_styles() const { return mean_styles_; }
  int n_domains() const { return n_domains_; }

  void save(const std::string& path, nlohmann::json extra_meta = {}) const {
    Checkpoint ck;
    ck.meta = {{"kind", "bias_translator"},
               {"generator", g_.config().to_json()},
               {"n_domains", n_domains_}};
    for (auto& [k, v] : extra_meta.items()) ck.meta[k] = v;
    nn::NamedParams<float> params;
    const_cast<Generator<float>&>(g_).collect("g", params);
    for (auto& [name, p] : params) ck.tensors[name] = p->v;
    ck.tensors["mean_styles"] = mean_styles_;
    ck.save(path);
  }

  static BiasTranslator load(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "bias_translator")
      throw TrainError("checkpoint " + path + " is not a bias translator");
    Generator<float> g(GeneratorConfig::from_json(ck.meta.at("generator")));
    nn::NamedParams<float> params;
    g.collect("g", params);
    for (auto& [name, p] : params) {
      auto it = ck.tensors.find(name);
      if (it == ck.tensors.end()) throw TrainError("checkpoint " + path + " missing tensor " + name);
      if (!(it->second.dims() == p->v.dims())) throw TrainError("checkpoint " + path + " shape mismatch for " + name);
      p->v = it->second;
    }
    return BiasTranslator(std::move(g), ck.tensors.at("mean_styles"), ck.meta.at("n_domains"));
  }

 private:
  Generator<float> g_;
  TensorF mean_styles_;  // {n_domains, d_style}
  int n_domains_ = 0;
};

}  // namespace gan
}  // namespace blade
