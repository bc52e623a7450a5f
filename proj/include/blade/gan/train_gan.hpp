#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/core/image.hpp"
#include "blade/core/random.hpp"
#include "blade/core/serialize.hpp"
#include "blade/data/biased_data.hpp"
#include "blade/gan/translator.hpp"
#include "blade/losses.hpp"
#include "blade/nn/optim.hpp"

namespace blade {
namespace gan {

struct GanConfig {
  int img_size = 16;
  int n_domains = 10;
  int base_channels = 16;
  int n_res_blocks = 3;   // MNIST-scale profile; 6 for the CIFAR-style profile
  int disc_blocks = 4;    // 4 MNIST-scale, 5 CIFAR-scale
  int d_style = 64;
  int iters = 3000;
  int batch_size = 16;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_cls = 1.0;
  double lambda_rec = 500.0;  // Colored-MNIST profile value
  int n_critic = 1;
  int log_every = 50;
  int sample_every = 1000;
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"img_size", img_size},     {"n_domains", n_domains},   {"base_channels", base_channels},
            {"n_res_blocks", n_res_blocks}, {"disc_blocks", disc_blocks}, {"d_style", d_style},
            {"iters", iters},           {"batch_size", batch_size}, {"lr_g", lr_g},
            {"lr_d", lr_d},             {"beta1", beta1},           {"beta2", beta2},
            {"lambda_cls", lambda_cls}, {"lambda_rec", lambda_rec}, {"n_critic", n_critic},
            {"log_every", log_every},   {"sample_every", sample_every}, {"seed", seed}};
  }
};

struct GanLogRecord {
  int iter = 0;
  double d_adv = 0, d_cls = 0, g_adv = 0, g_cls = 0, g_rec = 0;
};

struct GanArtifacts {
  BiasTranslator translator;
  Discriminator<float> discriminator;
  DomainEncoder<float> encoder;
  std::vector<GanLogRecord> curves;
};

namespace detail {

inline void check_finite(double v, const char* name, int iter, const std::string& out_dir) {
  if (std::isfinite(v)) return;
  if (!out_dir.empty())
    write_json_file(out_dir + "/gan_divergence.json", {{"iter", iter}, {"loss", name}});
  throw TrainError(std::string("GAN training diverged: ") + name + " is not finite at iter " +
                   std::to_string(iter));
}

}  // namespace detail

/// Per-domain mean style vectors over reference images from the training set.
inline TensorF compute_mean_styles(const DomainEncoder<float>& enc, const data::Dataset& ds, int per_class,
                                   Rng& rng) {
  const int k = enc.n_domains(), d = enc.d_style();
  TensorF mean({k, d});
  auto by_class = ds.class_indices();
  for (int c = 0; c < k; ++c) {
    auto& idx = by_class[static_cast<size_t>(c)];
    if (idx.empty()) throw TrainError("no reference images for domain " + std::to_string(c));
    std::vector<int> take;
    for (int i = 0; i < per_class; ++i) take.push_back(idx[static_cast<size_t>(rng.uniform_int(static_cast<int>(idx.size())))]);
    TensorF refs = ds.gather(take);
    TensorF bank = enc.forward(refs, nullptr);
    std::vector<int> doms(take.size(), c);
    TensorF styles = enc.select(bank, doms);
    for (int j = 0; j < d; ++j) {
      float s = 0;
      for (size_t i = 0; i < take.size(); ++i) s += styles[static_cast<long>(i) * d + j];
      mean[static_cast<long>(c) * d + j] = s / static_cast<float>(take.size());
    }
  }
  return mean;
}

/// Adversarial training of the bias translator on a biased training split.
/// Task labels double as domain labels; no bias annotations are consumed.
/// The adversarial objective is least-squares on patch scores.
inline GanArtifacts train_gan(const data::Dataset& train, const GanConfig& cfg, const std::string& out_dir = "") {
  if (train.spec.split != data::Split::train)
    throw TrainError("train_gan expects the biased training split");
  if (cfg.img_size % 4 != 0 && cfg.img_size % 4 != 2)
    throw TrainError("train_gan: image size must survive two stride-2 halvings");

  Rng rng = Rng(cfg.seed).derive("gan");
  GeneratorConfig gcfg;
  gcfg.base_channels = cfg.base_channels;
  gcfg.n_res_blocks = cfg.n_res_blocks;
  gcfg.d_style = cfg.d_style;

  Generator<float> gen(gcfg);
  DomainEncoder<float> enc(3, cfg.base_channels, cfg.n_domains, cfg.d_style);
  Discriminator<float> disc(3, cfg.base_channels, cfg.disc_blocks, cfg.n_domains, cfg.img_size);
  {
    Rng init_rng = rng.derive("init");
    gen.init(init_rng);
    enc.init(init_rng);
    disc.init(init_rng);
  }

  nn::NamedParams<float> gparams, dparams;
  gen.collect("g", gparams);
  enc.collect("e", gparams);
  disc.collect("d", dparams);
  nn::Adam<float> opt_g(gparams, cfg.beta1, cfg.beta2);
  nn::Adam<float> opt_d(dparams, cfg.beta1, cfg.beta2);

  auto by_class = train.class_indices();
  for (int c = 0; c < cfg.n_domains; ++c)
    if (by_class[static_cast<size_t>(c)].empty())
      throw TrainError("train_gan: class " + std::to_string(c) + " has no samples");

  const int nb = cfg.batch_size;
  std::vector<GanLogRecord> curves;
  std::ofstream curve_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    curve_file.open(out_dir + "/gan_curves.jsonl");
  }

  // fixed probe images for the periodic sample grid
  std::vector<int> probe_idx;
  for (int c = 0; c < std::min(cfg.n_domains, 6); ++c)
    probe_idx.push_back(by_class[static_cast<size_t>(c)][0]);

  double running[5] = {0, 0, 0, 0, 0};
  int running_n = 0;

  for (int iter = 1; iter <= cfg.iters; ++iter) {
    // batch of real images with their (task = domain) labels
    std::vector<int> idx(static_cast<size_t>(nb));
    for (auto& i : idx) i = rng.uniform_int(train.n());
    TensorF x = train.gather(idx);
    std::vector<int> y_dom(static_cast<size_t>(nb));
    for (int i = 0; i < nb; ++i) y_dom[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];

    // target domains and matching reference images
    std::vector<int> y_t(static_cast<size_t>(nb)), ref_idx(static_cast<size_t>(nb));
    for (int i = 0; i < nb; ++i) {
      int t = rng.uniform_int(cfg.n_domains);
      y_t[static_cast<size_t>(i)] = t;
      auto& pool = by_class[static_cast<size_t>(t)];
      ref_idx[static_cast<size_t>(i)] = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
    }
    TensorF refs = train.gather(ref_idx);

    // ---- discriminator step -------------------------------------------
    opt_d.zero_grad();
    TensorF fake_detached;
    {
      TensorF bank = enc.forward(refs, nullptr);
      TensorF z_t = enc.select(bank, y_t);
      fake_detached = gen.forward(x, z_t, nullptr);
    }
    double d_adv = 0, d_cls = 0;
    {
      typename Discriminator<float>::Ctx dr;
      auto out_r = disc.forward(x, &dr);
      const long numel = out_r.adv.size();
      TensorF g_adv(out_r.adv.dims());
      for (long i = 0; i < numel; ++i) {
        float v = out_r.adv[i] - 1.0f;
        d_adv += 0.5 * v * v / static_cast<double>(numel);
        g_adv[i] = v / static_cast<float>(numel);
      }
      MatX<float> g_cls;
      d_cls = gen_loss<float>(out_r.cls.as_matrix(nb, cfg.n_domains), y_dom, &g_cls);
      TensorF g_cls_t({nb, cfg.n_domains});
      MatMap<float>(g_cls_t.data(), nb, cfg.n_domains) = g_cls * static_cast<float>(cfg.lambda_cls);
      disc.backward(g_adv, g_cls_t, dr);

      typename Discriminator<float>::Ctx df;
      auto out_f = disc.forward(fake_detached, &df);
      TensorF g_advf(out_f.adv.dims());
      for (long i = 0; i < out_f.adv.size(); ++i) {
        d_adv += 0.5 * out_f.adv[i] * out_f.adv[i] / static_cast<double>(out_f.adv.size());
        g_advf[i] = out_f.adv[i] / static_cast<float>(out_f.adv.size());
      }
      TensorF g_cls_zero({nb, cfg.n_domains});
      disc.backward(g_advf, g_cls_zero, df);
      opt_d.step(cfg.lr_d);
    }

    // ---- generator + encoder step --------------------------------------
    double g_adv_l = 0, g_cls_l = 0, g_rec_l = 0;
    if (iter % cfg.n_critic == 0) {
      opt_g.zero_grad();
      typename DomainEncoder<float>::Ctx e1;
      TensorF bank_t = enc.forward(refs, &e1);
      TensorF z_t = enc.select(bank_t, y_t);
      typename Generator<float>::Ctx g1;
      TensorF fake = gen.forward(x, z_t, &g1);

      typename Discriminator<float>::Ctx d1;
      auto out_f = disc.forward(fake, &d1);
      const long numel = out_f.adv.size();
      TensorF g_adv(out_f.adv.dims());
      for (long i = 0; i < numel; ++i) {
        float v = out_f.adv[i] - 1.0f;
        g_adv_l += 0.5 * v * v / static_cast<double>(numel);
        g_adv[i] = v / static_cast<float>(numel);
      }
      MatX<float> g_cls;
      g_cls_l = gen_loss<float>(out_f.cls.as_matrix(nb, cfg.n_domains), y_t, &g_cls);
      TensorF g_cls_t({nb, cfg.n_domains});
      MatMap<float>(g_cls_t.data(), nb, cfg.n_domains) = g_cls * static_cast<float>(cfg.lambda_cls);
      TensorF g_fake = disc.backward(g_adv, g_cls_t, d1);  // D grads are scratch here; zeroed on its own step

      // cycle reconstruction back to the original domain, styled by the
      // input batch itself
      typename DomainEncoder<float>::Ctx e2;
      TensorF bank_o = enc.forward(x, &e2);
      TensorF z_o = enc.select(bank_o, y_dom);
      typename Generator<float>::Ctx g2;
      TensorF rec = gen.forward(fake, z_o, &g2);
      TensorF g_rec(rec.dims());
      for (long i = 0; i < rec.size(); ++i) {
        float d = rec[i] - x[i];
        g_rec_l += std::abs(d) / static_cast<double>(rec.size());
        g_rec[i] = static_cast<float>(cfg.lambda_rec) * (d > 0 ? 1.0f : (d < 0 ? -1.0f : 0.0f)) /
                   static_cast<float>(rec.size());
      }
      auto gr2 = gen.backward(g_rec, g2);
      enc.backward(enc.scatter_style_grad(gr2.gstyle, y_dom), e2);
      add_inplace(g_fake, gr2.gx);
      auto gr1 = gen.backward(g_fake, g1);
      enc.backward(enc.scatter_style_grad(gr1.gstyle, y_t), e1);
      opt_g.step(cfg.lr_g);
    }

    running[0] += d_adv;
    running[1] += d_cls;
    running[2] += g_adv_l;
    running[3] += g_cls_l;
    running[4] += g_rec_l;
    ++running_n;

    if (iter % cfg.log_every == 0 || iter == cfg.iters) {
      GanLogRecord rec;
      rec.iter = iter;
      rec.d_adv = running[0] / running_n;
      rec.d_cls = running[1] / running_n;
      rec.g_adv = running[2] / running_n;
      rec.g_cls = running[3] / running_n;
      rec.g_rec = running[4] / running_n;
      detail::check_finite(rec.d_adv + rec.d_cls, "d_loss", iter, out_dir);
      detail::check_finite(rec.g_adv + rec.g_cls + rec.g_rec, "g_loss", iter, out_dir);
      curves.push_back(rec);
      if (curve_file.is_open()) {
        nlohmann::json j = {{"iter", rec.iter}, {"d_adv", rec.d_adv}, {"d_cls", rec.d_cls},
                            {"g_adv", rec.g_adv}, {"g_cls", rec.g_cls}, {"g_rec", rec.g_rec}};
        curve_file << j.dump() << "\n";
        curve_file.flush();
      }
      std::fill(running, running + 5, 0.0);
      running_n = 0;
    }

    if (!out_dir.empty() && (iter % cfg.sample_every == 0 || iter == cfg.iters)) {
      // grid: probe originals followed by their translations to each domain
      TensorF probes = train.gather(probe_idx);
      Rng style_rng = rng.derive("grid");
      TensorF ms = compute_mean_styles(enc, train, 8, style_rng);
      int np = probes.dim(0);
      std::vector<TensorF> rows;
      TensorF grid({np * (cfg.n_domains + 1), 3, cfg.img_size, cfg.img_size});
      long chw = 3L * cfg.img_size * cfg.img_size;
      for (int i = 0; i < np; ++i) {
        std::copy(probes.data() + i * chw, probes.data() + (i + 1) * chw,
                  grid.data() + static_cast<long>(i) * (cfg.n_domains + 1) * chw);
        for (int t = 0; t < cfg.n_domains; ++t) {
          TensorF one({1, 3, cfg.img_size, cfg.img_size});
          std::copy(probes.data() + i * chw, probes.data() + (i + 1) * chw, one.data());
          TensorF style({1, cfg.d_style});
          std::copy(ms.data() + static_cast<long>(t) * cfg.d_style, ms.data() + static_cast<long>(t + 1) * cfg.d_style,
                    style.data());
          TensorF tr = gen.forward(one, style, nullptr);
          std::copy(tr.data(), tr.data() + chw,
                    grid.data() + (static_cast<long>(i) * (cfg.n_domains + 1) + 1 + t) * chw);
        }
      }
      std::ostringstream name;
      name << out_dir << "/samples/iter_" << iter << ".png";
      save_image_grid(name.str(), grid, cfg.n_domains + 1);
    }
  }

  Rng style_rng = rng.derive("mean_styles");
  TensorF mean_styles = compute_mean_styles(enc, train, std::min(128, train.n() / cfg.n_domains), style_rng);
  GanArtifacts art{BiasTranslator(std::move(gen), std::move(mean_styles), cfg.n_domains), std::move(disc),
                   std::move(enc), std::move(curves)};

  if (!out_dir.empty()) {
    art.translator.save(out_dir + "/generator.ckpt", {{"gan_config", cfg.to_json()}});
    Checkpoint dck;
    dck.meta = {{"kind", "discriminator"}, {"gan_config", cfg.to_json()}};
    nn::NamedParams<float> dp;
    art.discriminator.collect("d", dp);
    for (auto& [name, p] : dp) dck.tensors[name] = p->v;
    dck.save(out_dir + "/discriminator.ckpt");
    Checkpoint eck;
    eck.meta = {{"kind", "domain_encoder"}, {"gan_config", cfg.to_json()}};
    nn::NamedParams<float> ep;
    art.encoder.collect("e", ep);
    for (auto& [name, p] : ep) eck.tensors[name] = p->v;
    eck.save(out_dir + "/encoder.ckpt");
    write_json_file(out_dir + "/gan_manifest.json",
                    {{"config", cfg.to_json()},
                     {"generator", art.translator.generator().config().to_json()},
                     {"final_losses",
                      curves.empty() ? nlohmann::json{} :
                      nlohmann::json{{"d_adv", curves.back().d_adv}, {"d_cls", curves.back().d_cls},
                                     {"g_adv", curves.back().g_adv}, {"g_cls", curves.back().g_cls},
                                     {"g_rec", curves.back().g_rec}}}});
  }
  return art;
}

/// Loads the discriminator saved by train_gan (used by evaluation checks).
inline Discriminator<float> load_discriminator(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "discriminator") throw TrainError(path + " is not a discriminator checkpoint");
  auto j = ck.meta.at("gan_config");
  Discriminator<float> d(3, j.at("base_channels"), j.at("disc_blocks"), j.at("n_domains"), j.at("img_size"));
  nn::NamedParams<float> dp;
  d.collect("d", dp);
  for (auto& [name, p] : dp) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw TrainError(path + " missing tensor " + name);
    p->v = it->second;
  }
  return d;
}

}  // namespace gan
}  // namespace blade
