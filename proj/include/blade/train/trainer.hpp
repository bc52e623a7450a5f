#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/random.hpp"
#include "blade/core/serialize.hpp"
#include "blade/data/biased_data.hpp"
#include "blade/eval/metrics.hpp"
#include "blade/gan/translator.hpp"
#include "blade/losses.hpp"
#include "blade/nn/optim.hpp"
#include "blade/train/classifier.hpp"

// Dual-model debiasing loop: every step builds a batch bundle (originals,
// bias-translated counterparts, a common-bias batch, severities and refined
// images), updates the de-biased model on the four-term objective, and
// updates the bias-sensitive model on generalized cross entropy over the
// original images. The two models share nothing; severities are computed in
// inference mode so no gradient crosses between them.

namespace blade {
namespace train {

struct Toggles {
  bool refinement = true;
  bool align = true;
  bool reg = true;
};

enum class RefineMode { adaptive, random_mixup, original };
enum class Method { blade, vanilla };

inline std::string refine_mode_name(RefineMode m) {
  switch (m) {
    case RefineMode::adaptive: return "adaptive";
    case RefineMode::random_mixup: return "random_mixup";
    case RefineMode::original: return "original";
  }
  return "?";
}
inline RefineMode refine_mode_from_name(const std::string& s) {
  if (s == "adaptive") return RefineMode::adaptive;
  if (s == "random_mixup") return RefineMode::random_mixup;
  if (s == "original") return RefineMode::original;
  throw ConfigError("unknown refine mode: " + s);
}

struct RunConfig {
  Method method = Method::blade;
  Arch arch = Arch::mlp;
  int hidden = 100;
  int epochs = 150;       // Colored-MNIST profile; 350 for the CIFAR-style profile
  int batch_size = 256;   // MNIST-family default; 128 for CIFAR-style
  double lr = 1e-3;
  double lr_floor_frac = 0.1;  // cosine decay floor
  double tau = 0.1;
  double gce_q = 0.7;
  Toggles toggles;
  RefineMode refine_mode = RefineMode::adaptive;
  double grad_clip = 5.0;
  bool translation_cache = true;
  double bcs_ema = 0.0;  // 0 = instantaneous losses in the severity
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"method", method == Method::blade ? "blade" : "vanilla"},
            {"arch", arch_name(arch)},
            {"hidden", hidden},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"lr_floor_frac", lr_floor_frac},
            {"tau", tau},
            {"gce_q", gce_q},
            {"use_refinement", toggles.refinement},
            {"use_align", toggles.align},
            {"use_reg", toggles.reg},
            {"refine_mode", refine_mode_name(refine_mode)},
            {"grad_clip", grad_clip},
            {"translation_cache", translation_cache},
            {"bcs_ema", bcs_ema},
            {"seed", seed}};
  }
  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    c.method = j.at("method") == "blade" ? Method::blade : Method::vanilla;
    c.arch = arch_from_name(j.at("arch"));
    c.hidden = j.at("hidden");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.lr = j.at("lr");
    c.lr_floor_frac = j.at("lr_floor_frac");
    c.tau = j.at("tau");
    c.gce_q = j.at("gce_q");
    c.toggles.refinement = j.at("use_refinement");
    c.toggles.align = j.at("use_align");
    c.toggles.reg = j.at("use_reg");
    c.refine_mode = refine_mode_from_name(j.at("refine_mode"));
    c.grad_clip = j.at("grad_clip");
    c.translation_cache = j.at("translation_cache");
    c.bcs_ema = j.at("bcs_ema");
    c.seed = j.at("seed");
    return c;
  }
};

/// All materials of one training step.
struct BatchBundle {
  std::vector<int> indices;
  TensorF images;
  std::vector<int> labels;
  std::vector<int> translate_targets;  // y'_i != y_i elementwise
  TensorF translated;                  // G(I, y')
  int common_bias_label = 0;           // one sampled domain per batch
  TensorF common_bias;                 // G(I, y_SB)
  std::vector<float> severity;         // omega per sample, gradient-blocked
  TensorF refined;                     // omega I + (1 - omega) I'
};

struct StepLog {
  double l_gen = 0, l_ref = 0, l_align = 0, l_reg = 0, l_total = 0;
  double additivity_gap = 0;
  double l_bias = 0;
};

struct MetricsRecord {
  int epoch = 0;
  double lr = 0;
  double val_unbiased = 0, val_worst = 0;
  std::vector<eval::GroupStat> val_groups;
  double mean_l_gen = 0, mean_l_ref = 0, mean_l_align = 0, mean_l_reg = 0, mean_l_total = 0, mean_l_bias = 0;
  double omega_mean = 0;
  std::array<long, 10> omega_hist = {};
  double mb_aligned_acc = 0, mb_conflicting_acc = 0;
  double max_additivity_gap = 0;

  nlohmann::json to_json() const {
    nlohmann::json groups = nlohmann::json::array();
    for (auto& g : val_groups) groups.push_back({{"name", g.name}, {"accuracy", g.accuracy}, {"count", g.count}});
    return {{"epoch", epoch},
            {"lr", lr},
            {"val_unbiased", val_unbiased},
            {"val_worst", val_worst},
            {"val_groups", groups},
            {"l_gen", mean_l_gen},
            {"l_ref", mean_l_ref},
            {"l_align", mean_l_align},
            {"l_reg", mean_l_reg},
            {"l_total", mean_l_total},
            {"l_bias", mean_l_bias},
            {"omega_mean", omega_mean},
            {"omega_hist", omega_hist},
            {"mb_aligned_acc", mb_aligned_acc},
            {"mb_conflicting_acc", mb_conflicting_acc},
            {"max_additivity_gap", max_additivity_gap}};
  }
};

/// Precomputed translations of every training image to every domain. The
/// generator is frozen and deterministic at this point, so the cache is an
/// exact stand-in for calling it per batch.
struct TranslationCache {
  int n = 0, k = 0;
  long chw = 0;
  std::vector<float> store;

  static TranslationCache build(const data::Dataset& ds, const gan::BiasTranslator& tr, int batch = 512) {
    TranslationCache c;
    c.n = ds.n();
    c.k = tr.n_domains();
    c.chw = 3L * ds.images.dim(2) * ds.images.dim(3);
    c.store.resize(static_cast<size_t>(c.n) * c.k * c.chw);
    for (int t = 0; t < c.k; ++t) {
      for (int start = 0; start < c.n; start += batch) {
        int stop = std::min(c.n, start + batch);
        std::vector<int> idx;
        for (int i = start; i < stop; ++i) idx.push_back(i);
        TensorF out = tr.translate_all_to(ds.gather(idx), t);
        for (int i = 0; i < stop - start; ++i)
          std::copy(out.data() + static_cast<long>(i) * c.chw, out.data() + static_cast<long>(i + 1) * c.chw,
                    c.store.data() + (static_cast<size_t>(start + i) * c.k + t) * c.chw);
      }
    }
    return c;
  }

  void copy_into(int sample, int target, float* dst) const {
    const float* src = store.data() + (static_cast<size_t>(sample) * k + target) * chw;
    std::copy(src, src + chw, dst);
  }
};

struct TrainResult {
  double best_val = 0;
  int best_epoch = -1;
  double final_val = 0;
  std::vector<MetricsRecord> history;
  std::map<std::string, TensorF> best_state;
  nlohmann::json summary;
};

class BladeTrainer {
 public:
  BladeTrainer(const data::Dataset& train_set, const data::Dataset& val_set, RunConfig cfg,
               const gan::BiasTranslator* translator, const TranslationCache* shared_cache = nullptr)
      : train_(train_set),
        val_(val_set),
        cfg_(cfg),
        translator_(translator),
        cache_(shared_cache),
        rng_(Rng(cfg.seed).derive("trainer")) {
    k_ = train_.spec.n_classes;
    if (k_ < 2) throw TrainError("trainer: need at least 2 classes to sample translation targets");
    if (cfg_.method == Method::blade && translator_ == nullptr)
      throw TrainError("trainer: no generator available; train-gan must run before train-blade");
    if (translator_ && translator_->n_domains() != k_)
      throw TrainError("trainer: generator domain count does not match the dataset");
    std::vector<int> chw = {train_.images.dim(1), train_.images.dim(2), train_.images.dim(3)};
    model_d_ = Classifier<float>(cfg_.arch, chw, k_, cfg_.hidden);
    model_b_ = Classifier<float>(cfg_.arch, chw, k_, cfg_.hidden);
    Rng r_d = rng_.derive("init_md"), r_b = rng_.derive("init_mb");
    model_d_.init(r_d);
    model_b_.init(r_b);
    nn::NamedParams<float> pd, pb;
    model_d_.collect("md", pd);
    model_b_.collect("mb", pb);
    opt_d_ = nn::Adam<float>(pd);
    opt_b_ = nn::Adam<float>(pb);
    if (cfg_.method == Method::blade && cfg_.translation_cache && cache_ == nullptr) {
      owned_cache_ = TranslationCache::build(train_, *translator_);
      cache_ = &owned_cache_;
    }
    if (cfg_.bcs_ema > 0) {
      ema_b_.assign(static_cast<size_t>(train_.n()), -1.0);
      ema_d_.assign(static_cast<size_t>(train_.n()), -1.0);
    }
  }

  Classifier<float>& model_d() { return model_d_; }
  Classifier<float>& model_b() { return model_b_; }
  const RunConfig& config() const { return cfg_; }

  TensorF lookup_translation(const std::vector<int>& idx, const std::vector<int>& targets) const {
    const long chw = 3L * train_.images.dim(2) * train_.images.dim(3);
    if (cache_) {
      TensorF out({static_cast<int>(idx.size()), 3, train_.images.dim(2), train_.images.dim(3)});
      for (size_t i = 0; i < idx.size(); ++i)
        cache_->copy_into(idx[i], targets[i], out.data() + static_cast<long>(i) * chw);
      return out;
    }
    return translator_->translate(train_.gather(idx), targets);
  }

  /// Severities from the current models, in inference mode on originals.
  std::vector<float> severities(const TensorF& images, const std::vector<int>& labels,
                                const std::vector<int>& idx) {
    TensorF lb = model_b_.logits(images);
    TensorF ld = model_d_.logits(images);
    const int n = images.dim(0);
    std::vector<float> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      VecX<float> rb = ConstMatMap<float>(lb.data() + static_cast<long>(i) * k_, 1, k_).row(0).transpose();
      VecX<float> rd = ConstMatMap<float>(ld.data() + static_cast<long>(i) * k_, 1, k_).row(0).transpose();
      double loss_b = ce_loss<float>(rb, labels[static_cast<size_t>(i)]);
      double loss_d = ce_loss<float>(rd, labels[static_cast<size_t>(i)]);
      if (cfg_.bcs_ema > 0) {
        double a = cfg_.bcs_ema;
        size_t s = static_cast<size_t>(idx[static_cast<size_t>(i)]);
        ema_b_[s] = ema_b_[s] < 0 ? loss_b : a * ema_b_[s] + (1 - a) * loss_b;
        ema_d_[s] = ema_d_[s] < 0 ? loss_d : a * ema_d_[s] + (1 - a) * loss_d;
        loss_b = ema_b_[s];
        loss_d = ema_d_[s];
      }
      w[static_cast<size_t>(i)] = bcs_weight<float>(static_cast<float>(loss_b), static_cast<float>(loss_d));
    }
    return w;
  }

  BatchBundle build_batch(const std::vector<int>& idx) {
    BatchBundle b;
    b.indices = idx;
    b.images = train_.gather(idx);
    for (int i : idx) b.labels.push_back(train_.labels[static_cast<size_t>(i)]);
    const int n = static_cast<int>(idx.size());
    b.translate_targets.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      b.translate_targets[static_cast<size_t>(i)] = rng_.uniform_int_excluding(k_, b.labels[static_cast<size_t>(i)]);
    b.translated = lookup_translation(idx, b.translate_targets);
    b.common_bias_label = rng_.uniform_int(k_);
    b.common_bias = lookup_translation(idx, std::vector<int>(static_cast<size_t>(n), b.common_bias_label));
    b.severity = severities(b.images, b.labels, idx);

    const long chw = b.images.size() / n;
    b.refined = TensorF(b.images.dims());
    for (int i = 0; i < n; ++i) {
      float w = 1.0f;
      switch (cfg_.refine_mode) {
        case RefineMode::adaptive: w = b.severity[static_cast<size_t>(i)]; break;
        case RefineMode::random_mixup: w = static_cast<float>(rng_.uniform()); break;
        case RefineMode::original: w = 1.0f; break;
      }
      refine_into(b.images.data() + static_cast<long>(i) * chw, b.translated.data() + static_cast<long>(i) * chw, w,
                  b.refined.data() + static_cast<long>(i) * chw, chw);
    }
    return b;
  }

  StepLog step_debias(const BatchBundle& b, double lr) {
    const int n = static_cast<int>(b.labels.size());
    const int d = model_d_.feature_dim();
    opt_d_.zero_grad();
    StepLog log;

    typename Classifier<float>::Ctx p_trans;
    TensorF feat_t = model_d_.features(b.translated, &p_trans);
    TensorF logits_t = model_d_.head(feat_t, &p_trans);
    MatX<float> g_logits_t;
    log.l_gen = gen_loss<float>(MatX<float>(logits_t.as_matrix(n, k_)), b.labels, &g_logits_t);

    typename Classifier<float>::Ctx p_ref;
    MatX<float> g_logits_r;
    if (cfg_.toggles.refinement) {
      TensorF feat_r = model_d_.features(b.refined, &p_ref);
      TensorF logits_r = model_d_.head(feat_r, &p_ref);
      log.l_ref = ref_loss<float>(MatX<float>(logits_r.as_matrix(n, k_)), b.labels, b.severity, &g_logits_r);
    }

    typename Classifier<float>::Ctx p_orig;
    TensorF dfeat_o, dfeat_t_align;
    if (cfg_.toggles.align) {
      TensorF feat_o = model_d_.features(b.images, &p_orig);
      MatX<float> raw_o = ConstMatMap<float>(feat_o.data(), n, d);
      MatX<float> raw_t = ConstMatMap<float>(feat_t.data(), n, d);
      MatX<float> zo = l2_normalize_rows(raw_o);
      MatX<float> zt = l2_normalize_rows(raw_t);
      MatX<float> dzo, dzt;
      log.l_align = align_loss<float>(zo, zt, static_cast<float>(cfg_.tau), &dzo, &dzt);
      MatX<float> go = l2_normalize_rows_backward(raw_o, dzo);
      MatX<float> gt = l2_normalize_rows_backward(raw_t, dzt);
      dfeat_o = TensorF({n, d});
      dfeat_t_align = TensorF({n, d});
      MatMap<float>(dfeat_o.data(), n, d) = go;
      MatMap<float>(dfeat_t_align.data(), n, d) = gt;
    }

    typename Classifier<float>::Ctx p_sb;
    TensorF dfeat_sb;
    if (cfg_.toggles.reg) {
      TensorF feat_sb = model_d_.features(b.common_bias, &p_sb);
      MatX<float> raw = ConstMatMap<float>(feat_sb.data(), n, d);
      MatX<float> zsb = l2_normalize_rows(raw);
      MatX<float> dz;
      log.l_reg = reg_loss<float>(zsb, static_cast<float>(cfg_.tau), &dz);
      MatX<float> g = l2_normalize_rows_backward(raw, dz);
      dfeat_sb = TensorF({n, d});
      MatMap<float>(dfeat_sb.data(), n, d) = g;
    }

    log.l_total = log.l_gen + log.l_ref + log.l_align + log.l_reg;
    log.additivity_gap = std::abs(log.l_total - (log.l_gen + log.l_ref + log.l_align + log.l_reg));
    if (!std::isfinite(log.l_total)) {
      dump_diagnostic(log);
      throw TrainError("debias step produced a non-finite loss");
    }

    // backward: merge the classification and alignment gradients arriving at
    // the translated-batch features, then one extractor pass per batch
    TensorF g_lt({n, k_});
    MatMap<float>(g_lt.data(), n, k_) = g_logits_t;
    TensorF gfeat_t = model_d_.backward_head(g_lt, p_trans);
    if (cfg_.toggles.align) add_inplace(gfeat_t, dfeat_t_align);
    model_d_.backward_features(gfeat_t, p_trans);
    if (cfg_.toggles.refinement) {
      TensorF g_lr({n, k_});
      MatMap<float>(g_lr.data(), n, k_) = g_logits_r;
      TensorF gfeat_r = model_d_.backward_head(g_lr, p_ref);
      model_d_.backward_features(gfeat_r, p_ref);
    }
    if (cfg_.toggles.align) model_d_.backward_features(dfeat_o, p_orig);
    if (cfg_.toggles.reg) model_d_.backward_features(dfeat_sb, p_sb);

    opt_d_.clip_global_norm(cfg_.grad_clip);
    opt_d_.step(lr);
    return log;
  }

  /// Plain empirical-risk step on original images (the vanilla baseline).
  StepLog step_vanilla(const TensorF& images, const std::vector<int>& labels, double lr) {
    const int n = static_cast<int>(labels.size());
    opt_d_.zero_grad();
    typename Classifier<float>::Ctx ctx;
    TensorF feat = model_d_.features(images, &ctx);
    TensorF logits = model_d_.head(feat, &ctx);
    MatX<float> g;
    StepLog log;
    log.l_gen = gen_loss<float>(MatX<float>(logits.as_matrix(n, k_)), labels, &g);
    log.l_total = log.l_gen;
    if (!std::isfinite(log.l_total)) {
      dump_diagnostic(log);
      throw TrainError("vanilla step produced a non-finite loss");
    }
    TensorF gt({n, k_});
    MatMap<float>(gt.data(), n, k_) = g;
    model_d_.backward_features(model_d_.backward_head(gt, ctx), ctx);
    opt_d_.clip_global_norm(cfg_.grad_clip);
    opt_d_.step(lr);
    return log;
  }

  /// Generalized-cross-entropy step for the bias-sensitive model, on
  /// original images only.
  double step_bias(const TensorF& images, const std::vector<int>& labels, double lr) {
    const int n = static_cast<int>(labels.size());
    opt_b_.zero_grad();
    typename Classifier<float>::Ctx ctx;
    TensorF feat = model_b_.features(images, &ctx);
    TensorF logits = model_b_.head(feat, &ctx);
    double loss = 0;
    TensorF g({n, k_});
    for (int i = 0; i < n; ++i) {
      VecX<float> row = ConstMatMap<float>(logits.data() + static_cast<long>(i) * k_, 1, k_).row(0).transpose();
      VecX<float> grow;
      loss += gce_from_logits<float>(row, labels[static_cast<size_t>(i)], static_cast<float>(cfg_.gce_q), &grow);
      for (int j = 0; j < k_; ++j) g[static_cast<long>(i) * k_ + j] = grow[j] / static_cast<float>(n);
    }
    loss /= n;
    if (!std::isfinite(loss)) {
      StepLog log;
      log.l_bias = loss;
      dump_diagnostic(log);
      throw TrainError("bias-model step produced a non-finite loss");
    }
    model_b_.backward_features(model_b_.backward_head(g, ctx), ctx);
    opt_b_.clip_global_norm(cfg_.grad_clip);
    opt_b_.step(lr);
    return loss;
  }

  TrainResult run(const std::string& out_dir = "") {
    std::ofstream metrics_file;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      metrics_file.open(out_dir + "/metrics.jsonl");
    }
    out_dir_ = out_dir;

    // fixed train subsample for the bias-model mechanism probe
    std::vector<int> probe_idx;
    for (int i = 0; i < train_.n(); i += std::max(1, train_.n() / 2000)) probe_idx.push_back(i);
    data::Dataset probe_set = subset(train_, probe_idx);

    TrainResult result;
    std::vector<int> order(static_cast<size_t>(train_.n()));
    for (int i = 0; i < train_.n(); ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const double lr = nn::cosine_lr(cfg_.lr, epoch, cfg_.epochs, cfg_.lr_floor_frac);
      rng_.shuffle(order);
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      long steps = 0;
      double omega_sum = 0;
      long omega_n = 0;
      for (int start = 0; start < train_.n(); start += cfg_.batch_size) {
        int stop = std::min(train_.n(), start + cfg_.batch_size);
        std::vector<int> idx(order.begin() + start, order.begin() + stop);
        StepLog log;
        if (cfg_.method == Method::vanilla) {
          TensorF images = train_.gather(idx);
          std::vector<int> labels;
          for (int i : idx) labels.push_back(train_.labels[static_cast<size_t>(i)]);
          log = step_vanilla(images, labels, lr);
        } else {
          BatchBundle bundle = build_batch(idx);
          log = step_debias(bundle, lr);
          log.l_bias = step_bias(bundle.images, bundle.labels, lr);
          for (float w : bundle.severity) {
            omega_sum += w;
            ++omega_n;
            int bin = std::min(9, static_cast<int>(w * 10.0f));
            rec.omega_hist[static_cast<size_t>(bin)]++;
          }
        }
        rec.mean_l_gen += log.l_gen;
        rec.mean_l_ref += log.l_ref;
        rec.mean_l_align += log.l_align;
        rec.mean_l_reg += log.l_reg;
        rec.mean_l_total += log.l_total;
        rec.mean_l_bias += log.l_bias;
        rec.max_additivity_gap = std::max(rec.max_additivity_gap, log.additivity_gap);
        ++steps;
      }
      rec.mean_l_gen /= steps;
      rec.mean_l_ref /= steps;
      rec.mean_l_align /= steps;
      rec.mean_l_reg /= steps;
      rec.mean_l_total /= steps;
      rec.mean_l_bias /= steps;
      rec.omega_mean = omega_n ? omega_sum / omega_n : 0.0;

      rec.val_unbiased = eval::eval_unbiased(model_d_, val_);
      eval::GroupReport gr = eval::eval_groups(model_d_, val_);
      rec.val_worst = gr.worst;
      rec.val_groups = gr.groups;
      if (cfg_.method == Method::blade) {
        eval::AlignmentAccuracy aa = eval::eval_alignment_accuracy(model_b_, probe_set);
        rec.mb_aligned_acc = aa.aligned;
        rec.mb_conflicting_acc = aa.conflicting;
      }

      if (rec.val_unbiased > result.best_val) {
        result.best_val = rec.val_unbiased;
        result.best_epoch = epoch;
        result.best_state = snapshot_params(model_d_);
      }
      result.history.push_back(rec);
      if (metrics_file.is_open()) {
        metrics_file << rec.to_json().dump() << "\n";
        metrics_file.flush();
      }
    }

    result.final_val = result.history.empty() ? 0.0 : result.history.back().val_unbiased;
    double max_gap = 0;
    for (auto& r : result.history) max_gap = std::max(max_gap, r.max_additivity_gap);
    result.summary = {{"config", cfg_.to_json()},
                      {"best_epoch", result.best_epoch},
                      {"best_val_unbiased", result.best_val},
                      {"final_val_unbiased", result.final_val},
                      {"max_additivity_gap", max_gap},
                      {"epochs_run", static_cast<int>(result.history.size())}};

    if (!out_dir.empty()) {
      save_classifier(model_d_, out_dir + "/final.ckpt", {{"run_config", cfg_.to_json()}});
      if (!result.best_state.empty()) {
        auto current = snapshot_params(model_d_);
        restore_params(model_d_, result.best_state);
        save_classifier(model_d_, out_dir + "/best.ckpt",
                        {{"run_config", cfg_.to_json()}, {"best_epoch", result.best_epoch}});
        restore_params(model_d_, current);
      }
      if (cfg_.method == Method::blade)
        save_classifier(model_b_, out_dir + "/mb_final.ckpt", {{"run_config", cfg_.to_json()}});
      write_json_file(out_dir + "/summary.json", result.summary);
    }
    return result;
  }

  static data::Dataset subset(const data::Dataset& ds, const std::vector<int>& idx) {
    data::Dataset out;
    out.spec = ds.spec;
    out.spec.n_samples = static_cast<int>(idx.size());
    out.palette = ds.palette;
    out.images = ds.gather(idx);
    for (int i : idx) {
      out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
      out.bias.push_back(ds.bias[static_cast<size_t>(i)]);
      out.aligned.push_back(ds.aligned[static_cast<size_t>(i)]);
      if (ds.multi_bias()) {
        out.bias2.push_back(ds.bias2[static_cast<size_t>(i)]);
        out.aligned2.push_back(ds.aligned2[static_cast<size_t>(i)]);
      }
    }
    out.per_class_conflicting.assign(static_cast<size_t>(ds.spec.n_classes), 0);
    return out;
  }

 private:
  void dump_diagnostic(const StepLog& log) const {
    if (out_dir_.empty()) return;
    write_json_file(out_dir_ + "/divergence.json",
                    {{"l_gen", log.l_gen},
                     {"l_ref", log.l_ref},
                     {"l_align", log.l_align},
                     {"l_reg", log.l_reg},
                     {"l_bias", log.l_bias},
                     {"config", cfg_.to_json()}});
  }

  data::Dataset train_, val_;
  RunConfig cfg_;
  const gan::BiasTranslator* translator_ = nullptr;
  const TranslationCache* cache_ = nullptr;
  TranslationCache owned_cache_;
  Rng rng_;
  int k_ = 0;
  Classifier<float> model_d_, model_b_;
  nn::Adam<float> opt_d_, opt_b_;
  std::vector<double> ema_b_, ema_d_;
  std::string out_dir_;
};

}  // namespace train
}  // namespace blade
