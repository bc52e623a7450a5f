#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/random.hpp"
#include "blade/core/serialize.hpp"
#include "blade/core/tensor.hpp"
#include "blade/nn/layers.hpp"

// Classifier M = (E, fc): a feature extractor plus a linear head. The
// MNIST-scale profile uses a 3-layer MLP; the CIFAR-style profile a compact
// convnet. The head and extractor expose separate backward entry points so a
// caller can merge gradient contributions arriving at the feature level
// (classification path and feature-space losses) before one extractor pass.

namespace blade {
namespace train {

enum class Arch { mlp, conv };

inline std::string arch_name(Arch a) { return a == Arch::mlp ? "mlp" : "conv"; }
inline Arch arch_from_name(const std::string& s) {
  if (s == "mlp") return Arch::mlp;
  if (s == "conv") return Arch::conv;
  throw ConfigError("unknown classifier arch: " + s);
}

template <class S>
class Classifier {
 public:
  struct Ctx {
    // mlp
    typename nn::Linear<S>::Ctx l1, l2, l3;
    typename nn::ReLU<S>::Ctx r1, r2, r3;
    // conv
    typename nn::Conv2d<S>::Ctx c1, c2, c3, c4;
    typename nn::ReLU<S>::Ctx cr1, cr2, cr3, cr4;
    typename nn::GlobalAvgPool<S>::Ctx gap;
    // head
    typename nn::Linear<S>::Ctx fc;
    std::vector<int> in_dims;
  };

  Classifier() = default;
  Classifier(Arch arch, std::vector<int> input_chw, int n_classes, int hidden = 100)
      : arch_(arch), input_chw_(std::move(input_chw)), k_(n_classes), hidden_(hidden) {
    if (arch_ == Arch::mlp) {
      int in = input_chw_[0] * input_chw_[1] * input_chw_[2];
      l1_ = nn::Linear<S>(in, hidden_);
      l2_ = nn::Linear<S>(hidden_, hidden_);
      l3_ = nn::Linear<S>(hidden_, hidden_);
      d_ = hidden_;
    } else {
      c1_ = nn::Conv2d<S>(input_chw_[0], 24, 3, 1, 1);
      c2_ = nn::Conv2d<S>(24, 48, 4, 2, 1);
      c3_ = nn::Conv2d<S>(48, 96, 4, 2, 1);
      c4_ = nn::Conv2d<S>(96, 96, 3, 1, 1);
      d_ = 96;
    }
    fc_ = nn::Linear<S>(d_, k_);
  }

  void init(Rng& rng) {
    if (arch_ == Arch::mlp) {
      l1_.init(rng);
      l2_.init(rng);
      l3_.init(rng);
    } else {
      c1_.init(rng);
      c2_.init(rng);
      c3_.init(rng);
      c4_.init(rng);
    }
    fc_.init(rng, /*relu_gain=*/false);
  }

  Tensor<S> features(const Tensor<S>& x, Ctx* ctx) const {
    if (ctx) ctx->in_dims = x.dims();
    if (arch_ == Arch::mlp) {
      Tensor<S> h = x.rank() == 2 ? x : x.reshaped({x.dim(0), static_cast<int>(x.size() / x.dim(0))});
      h = l1_.forward(h, ctx ? &ctx->l1 : nullptr);
      h = act_.forward(h, ctx ? &ctx->r1 : nullptr);
      h = l2_.forward(h, ctx ? &ctx->l2 : nullptr);
      h = act_.forward(h, ctx ? &ctx->r2 : nullptr);
      h = l3_.forward(h, ctx ? &ctx->l3 : nullptr);
      return act_.forward(h, ctx ? &ctx->r3 : nullptr);
    }
    Tensor<S> h = c1_.forward(x, ctx ? &ctx->c1 : nullptr);
    h = act_.forward(h, ctx ? &ctx->cr1 : nullptr);
    h = c2_.forward(h, ctx ? &ctx->c2 : nullptr);
    h = act_.forward(h, ctx ? &ctx->cr2 : nullptr);
    h = c3_.forward(h, ctx ? &ctx->c3 : nullptr);
    h = act_.forward(h, ctx ? &ctx->cr3 : nullptr);
    h = c4_.forward(h, ctx ? &ctx->c4 : nullptr);
    h = act_.forward(h, ctx ? &ctx->cr4 : nullptr);
    return gap_.forward(h, ctx ? &ctx->gap : nullptr);
  }

  Tensor<S> head(const Tensor<S>& feat, Ctx* ctx) const { return fc_.forward(feat, ctx ? &ctx->fc : nullptr); }

  Tensor<S> logits(const Tensor<S>& x) const { return head(features(x, nullptr), nullptr); }

  /// Gradient of the head w.r.t. its feature input (accumulates fc grads).
  Tensor<S> backward_head(const Tensor<S>& g_logits, Ctx& ctx) { return fc_.backward(g_logits, ctx.fc); }

  void backward_features(const Tensor<S>& g_feat, Ctx& ctx) {
    if (arch_ == Arch::mlp) {
      Tensor<S> g = act_.backward(g_feat, ctx.r3);
      g = l3_.backward(g, ctx.l3);
      g = act_.backward(g, ctx.r2);
      g = l2_.backward(g, ctx.l2);
      g = act_.backward(g, ctx.r1);
      l1_.backward(g, ctx.l1);
      return;
    }
    Tensor<S> g = gap_.backward(g_feat, ctx.gap);
    g = act_.backward(g, ctx.cr4);
    g = c4_.backward(g, ctx.c4);
    g = act_.backward(g, ctx.cr3);
    g = c3_.backward(g, ctx.c3);
    g = act_.backward(g, ctx.cr2);
    g = c2_.backward(g, ctx.c2);
    g = act_.backward(g, ctx.cr1);
    c1_.backward(g, ctx.c1);
  }

  void collect(const std::string& p, nn::NamedParams<S>& out) {
    if (arch_ == Arch::mlp) {
      l1_.collect(p + ".l1", out);
      l2_.collect(p + ".l2", out);
      l3_.collect(p + ".l3", out);
    } else {
      c1_.collect(p + ".c1", out);
      c2_.collect(p + ".c2", out);
      c3_.collect(p + ".c3", out);
      c4_.collect(p + ".c4", out);
    }
    fc_.collect(p + ".fc", out);
  }

  int n_classes() const { return k_; }
  int feature_dim() const { return d_; }
  Arch arch() const { return arch_; }
  const std::vector<int>& input_chw() const { return input_chw_; }

  nlohmann::json meta() const {
    return {{"arch", arch_name(arch_)}, {"input_chw", input_chw_}, {"n_classes", k_}, {"hidden", hidden_}};
  }

  static Classifier from_meta(const nlohmann::json& j) {
    return Classifier(arch_from_name(j.at("arch")), j.at("input_chw").template get<std::vector<int>>(),
                      j.at("n_classes"), j.at("hidden"));
  }

 private:
  Arch arch_ = Arch::mlp;
  std::vector<int> input_chw_;
  int k_ = 0, hidden_ = 0, d_ = 0;
  nn::Linear<S> l1_, l2_, l3_, fc_;
  nn::Conv2d<S> c1_, c2_, c3_, c4_;
  nn::ReLU<S> act_;
  nn::GlobalAvgPool<S> gap_;
};

/// Snapshot / restore of parameter values (for best-epoch checkpointing).
template <class S>
std::map<std::string, Tensor<S>> snapshot_params(Classifier<S>& model) {
  nn::NamedParams<S> ps;
  model.collect("m", ps);
  std::map<std::string, Tensor<S>> out;
  for (auto& [name, p] : ps) out[name] = p->v;
  return out;
}

template <class S>
void restore_params(Classifier<S>& model, const std::map<std::string, Tensor<S>>& snap) {
  nn::NamedParams<S> ps;
  model.collect("m", ps);
  for (auto& [name, p] : ps) p->v = snap.at(name);
}

inline void save_classifier(Classifier<float>& model, const std::string& path, nlohmann::json extra = {}) {
  Checkpoint ck;
  ck.meta = {{"kind", "classifier"}, {"model", model.meta()}};
  for (auto& [k, v] : extra.items()) ck.meta[k] = v;
  nn::NamedParams<float> ps;
  model.collect("m", ps);
  for (auto& [name, p] : ps) ck.tensors[name] = p->v;
  ck.save(path);
}

inline Classifier<float> load_classifier(const std::string& path, nlohmann::json* meta_out = nullptr) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "classifier") throw TrainError(path + " is not a classifier checkpoint");
  Classifier<float> model = Classifier<float>::from_meta(ck.meta.at("model"));
  nn::NamedParams<float> ps;
  model.collect("m", ps);
  for (auto& [name, p] : ps) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw TrainError(path + " missing tensor " + name);
    p->v = it->second;
  }
  if (meta_out) *meta_out = ck.meta;
  return model;
}

}  // namespace train
}  // namespace blade
