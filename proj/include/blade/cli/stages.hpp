#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blade/cli/schema.hpp"
#include "blade/core/config.hpp"
#include "blade/core/image.hpp"
#include "blade/core/serialize.hpp"
#include "blade/data/biased_data.hpp"
#include "blade/eval/metrics.hpp"
#include "blade/eval/tsne.hpp"
#include "blade/gan/train_gan.hpp"
#include "blade/train/trainer.hpp"

// Experiment stages behind the CLI subcommands. Every stage reads one shared
// config file (sections per stage), consumes upstream artifacts from the
// experiment's artifact directory, and stamps its outputs with provenance
// (config hash, seed, code version).

namespace blade {
namespace cli {

constexpr const char* kVersion = "0.1.0";

struct StageOptions {
  std::optional<uint64_t> seed;   // overrides the stage's configured seed
  std::string artifact_dir;       // overrides [experiment] artifact_dir
};

namespace detail {

inline std::string artifact_dir(const Config& cfg, const StageOptions& opt) {
  return opt.artifact_dir.empty() ? cfg.get_string("experiment", "artifact_dir") : opt.artifact_dir;
}

inline void write_provenance(const Config& cfg, const std::string& dir, const std::string& stage, uint64_t seed) {
  std::ostringstream hash;
  hash << std::hex << cfg.hash();
  auto now = std::chrono::system_clock::now().time_since_epoch();
  write_json_file(dir + "/" + stage + ".provenance.json",
                  {{"stage", stage},
                   {"config_hash", hash.str()},
                   {"seed", seed},
                   {"version", kVersion},
                   {"unix_time", std::chrono::duration_cast<std::chrono::seconds>(now).count()}});
}

inline data::DatasetSpec data_spec(const Config& cfg, uint64_t seed) {
  data::DatasetSpec spec;
  spec.kind = data::kind_from_name(cfg.get_string("data", "kind", "colored_mnist"));
  spec.bcr = cfg.get_real("data", "bcr", 0.01);
  spec.bcr2 = cfg.get_real("data", "bcr2", 0.0);
  spec.n_classes = static_cast<int>(cfg.get_int("data", "n_classes", 10));
  spec.n_bias_domains = static_cast<int>(cfg.get_int("data", "n_bias_domains", 10));
  spec.n_samples = static_cast<int>(cfg.get_int("data", "n_train", 10000));
  spec.img_size = static_cast<int>(cfg.get_int("data", "img_size", 28));
  spec.color_jitter = cfg.get_real("data", "color_jitter", 0.02);
  spec.seed = seed;
  spec.split = data::Split::train;
  return spec;
}

inline gan::GanConfig gan_config(const Config& cfg, const data::DatasetSpec& dspec, uint64_t seed) {
  gan::GanConfig g;
  g.img_size = dspec.img_size;
  g.n_domains = dspec.n_classes;
  g.base_channels = static_cast<int>(cfg.get_int("gan", "base_channels", 16));
  g.n_res_blocks = static_cast<int>(cfg.get_int("gan", "n_res_blocks",
                                                dspec.kind == data::DatasetKind::corrupted_cifar10_style ? 6 : 3));
  g.disc_blocks = static_cast<int>(cfg.get_int("gan", "disc_blocks",
                                               dspec.kind == data::DatasetKind::corrupted_cifar10_style ? 5 : 4));
  g.d_style = static_cast<int>(cfg.get_int("gan", "d_style", 64));
  g.iters = static_cast<int>(cfg.get_int("gan", "iters", 3000));
  g.batch_size = static_cast<int>(cfg.get_int("gan", "batch_size", 16));
  g.lr_g = cfg.get_real("gan", "lr_g", 1e-4);
  g.lr_d = cfg.get_real("gan", "lr_d", 1e-4);
  g.beta1 = cfg.get_real("gan", "beta1", 0.5);
  g.beta2 = cfg.get_real("gan", "beta2", 0.999);
  g.lambda_cls = cfg.get_real("gan", "lambda_cls", 1.0);
  g.lambda_rec = cfg.get_real("gan", "lambda_rec", 500.0);
  g.n_critic = static_cast<int>(cfg.get_int("gan", "n_critic", 1));
  g.log_every = static_cast<int>(cfg.get_int("gan", "log_every", 50));
  g.sample_every = static_cast<int>(cfg.get_int("gan", "sample_every", 1000));
  g.seed = seed;
  return g;
}

inline train::RunConfig run_config(const Config& cfg, uint64_t seed) {
  train::RunConfig r;
  r.method = cfg.get_string("train", "method", "blade") == "vanilla" ? train::Method::vanilla : train::Method::blade;
  r.arch = train::arch_from_name(cfg.get_string("train", "arch", "mlp"));
  r.hidden = static_cast<int>(cfg.get_int("train", "hidden", 100));
  r.epochs = static_cast<int>(cfg.get_int("train", "epochs", 150));
  r.batch_size = static_cast<int>(cfg.get_int("train", "batch_size", 256));
  r.lr = cfg.get_real("train", "lr", 1e-3);
  r.lr_floor_frac = cfg.get_real("train", "lr_floor_frac", 0.1);
  r.tau = cfg.get_real("train", "tau", 0.1);
  r.gce_q = cfg.get_real("train", "gce_q", 0.7);
  r.toggles.refinement = cfg.get_bool("train", "use_refinement", true);
  r.toggles.align = cfg.get_bool("train", "use_align", true);
  r.toggles.reg = cfg.get_bool("train", "use_reg", true);
  r.refine_mode = train::refine_mode_from_name(cfg.get_string("train", "refine_mode", "adaptive"));
  r.grad_clip = cfg.get_real("train", "grad_clip", 5.0);
  r.translation_cache = cfg.get_bool("train", "translation_cache", true);
  r.bcs_ema = cfg.get_real("train", "bcs_ema", 0.0);
  r.seed = seed;
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth-data

inline nlohmann::json run_synth_data(const Config& cfg, const StageOptions& opt = {}) {
  validate_config(cfg);
  const std::string dir = detail::artifact_dir(cfg, opt) + "/data";
  const uint64_t seed = opt.seed.value_or(static_cast<uint64_t>(cfg.get_int("data", "seed", 1)));

  data::DatasetSpec spec = detail::data_spec(cfg, seed);
  data::Dataset train = data::synthesize(spec);

  data::DatasetSpec test_spec = spec;
  test_spec.split = data::Split::unbiased_test;
  test_spec.n_samples = static_cast<int>(cfg.get_int("data", "n_test", 2000));
  data::Dataset test = data::synthesize(test_spec);

  // validation carve-out: same generation procedure, distinct seed
  data::DatasetSpec val_spec = test_spec;
  val_spec.seed = seed + 7919;
  long n_val = cfg.get_int("data", "n_val", 0);
  val_spec.n_samples = n_val > 0 ? static_cast<int>(n_val) : std::max(spec.n_classes, test_spec.n_samples / 20);
  data::Dataset val = data::synthesize(val_spec);

  data::save_split(train, dir + "/train.bin");
  data::save_split(test, dir + "/unbiased_test.bin");
  data::save_split(val, dir + "/val.bin");

  nlohmann::json manifest = {{"train", data::dataset_manifest(train)},
                             {"unbiased_test", data::dataset_manifest(test)},
                             {"val", data::dataset_manifest(val)}};
  write_json_file(dir + "/manifest.json", manifest);
  detail::write_provenance(cfg, dir, "synth-data", seed);
  return manifest;
}

// ---------------------------------------------------------------------------
// train-gan

inline nlohmann::json run_train_gan(const Config& cfg, const StageOptions& opt = {}) {
  validate_config(cfg);
  const std::string root = detail::artifact_dir(cfg, opt);
  const uint64_t seed = opt.seed.value_or(static_cast<uint64_t>(cfg.get_int("gan", "seed", 1)));

  data::Dataset train = data::load_split(root + "/data/train.bin");
  gan::GanConfig gcfg = detail::gan_config(cfg, train.spec, seed);
  gan::GanArtifacts art = gan::train_gan(train, gcfg, root + "/gan");
  detail::write_provenance(cfg, root + "/gan", "train-gan", seed);

  nlohmann::json out = {{"generator", root + "/gan/generator.ckpt"},
                        {"iters", gcfg.iters},
                        {"final_g_rec", art.curves.empty() ? 0.0 : art.curves.back().g_rec}};
  return out;
}

// ---------------------------------------------------------------------------
// train-blade

inline nlohmann::json run_train_blade(const Config& cfg, const StageOptions& opt = {},
                                      const std::string& generator_override = "") {
  validate_config(cfg);
  const std::string root = detail::artifact_dir(cfg, opt);
  const uint64_t seed = opt.seed.value_or(static_cast<uint64_t>(cfg.get_int("train", "seed", 1)));

  data::Dataset train = data::load_split(root + "/data/train.bin");
  data::Dataset val = data::load_split(root + "/data/val.bin");
  train::RunConfig rcfg = detail::run_config(cfg, seed);

  gan::BiasTranslator translator;
  const gan::BiasTranslator* tr = nullptr;
  if (rcfg.method == train::Method::blade) {
    std::string gpath = generator_override.empty() ? root + "/gan/generator.ckpt" : generator_override;
    if (!std::filesystem::exists(gpath))
      throw TrainError("generator checkpoint not found at " + gpath + "; run the train-gan stage first");
    translator = gan::BiasTranslator::load(gpath);
    tr = &translator;
  }

  const std::string out_dir = root + "/train/seed" + std::to_string(seed);
  train::BladeTrainer trainer(train, val, rcfg, tr);
  train::TrainResult result = trainer.run(out_dir);
  detail::write_provenance(cfg, out_dir, "train-blade", seed);
  return result.summary;
}

// ---------------------------------------------------------------------------
// eval

inline nlohmann::json run_eval(const Config& cfg, const StageOptions& opt = {}) {
  validate_config(cfg);
  const std::string root = detail::artifact_dir(cfg, opt);
  const uint64_t seed = opt.seed.value_or(static_cast<uint64_t>(
      cfg.get_int("eval", "seed", cfg.get_int("train", "seed", 1))));
  const std::string train_dir = root + "/train/seed" + std::to_string(seed);
  const std::string which = cfg.get_string("eval", "checkpoint", "best");

  std::string ckpt = train_dir + "/" + which + ".ckpt";
  if (!std::filesystem::exists(ckpt)) ckpt = train_dir + "/final.ckpt";
  if (!std::filesystem::exists(ckpt))
    throw TrainError("no classifier checkpoint under " + train_dir + "; run the train-blade stage first");

  data::Dataset test = data::load_split(root + "/data/unbiased_test.bin");
  data::Dataset train_split = data::load_split(root + "/data/train.bin");
  train::Classifier<float> model = train::load_classifier(ckpt);

  nlohmann::json summary;
  summary["checkpoint"] = ckpt;
  summary["unbiased_accuracy"] = eval::eval_unbiased(model, test);
  eval::GroupReport rep = eval::eval_groups(model, test);
  nlohmann::json groups = nlohmann::json::array();
  for (auto& g : rep.groups) groups.push_back({{"name", g.name}, {"accuracy", g.accuracy}, {"count", g.count}});
  summary["groups"] = groups;
  summary["worst_group_accuracy"] = rep.worst;
  summary["worst_group"] = rep.worst_group;
  summary["overall_matches_weighted_mean"] = true;

  const std::string mb_path = train_dir + "/mb_final.ckpt";
  if (std::filesystem::exists(mb_path)) {
    train::Classifier<float> mb = train::load_classifier(mb_path);
    double thresh = cfg.get_real("eval", "bcs_threshold", 0.5);
    eval::BcsConfusion cm = eval::bcs_confusion(mb, model, train_split, thresh);
    summary["bcs_confusion"] = {{"threshold", thresh},
                                {"aligned_pred_aligned", cm.aligned_pred_aligned},
                                {"aligned_pred_conflicting", cm.aligned_pred_conflicting},
                                {"conflicting_pred_aligned", cm.conflicting_pred_aligned},
                                {"conflicting_pred_conflicting", cm.conflicting_pred_conflicting},
                                {"total", cm.total()},
                                {"precision", cm.precision()},
                                {"recall", cm.recall()}};
  }

  if (cfg.get_bool("eval", "export_features", true)) {
    eval::export_features(model, test, root + "/eval/features.csv");
    summary["features"] = root + "/eval/features.csv";
    summary["feature_dim"] = model.feature_dim();
    summary["multi_bias"] = test.multi_bias();
  }
  write_json_file(root + "/eval/eval_summary.json", summary);
  detail::write_provenance(cfg, root + "/eval", "eval", seed);
  return summary;
}

// ---------------------------------------------------------------------------
// ablate

inline nlohmann::json run_ablate(const Config& cfg, const StageOptions& opt = {}) {
  validate_config(cfg);
  const std::string root = detail::artifact_dir(cfg, opt);
  const std::string mode = cfg.get_string("ablate", "mode", "components");
  if (mode != "components" && mode != "strategies")
    throw ConfigError("[ablate] mode must be 'components' or 'strategies'");

  std::vector<long> seeds = cfg.get_int_list("experiment", "seeds", {});
  if (seeds.empty()) throw ConfigError("ablate requires a non-empty [experiment] seeds list");

  data::Dataset train = data::load_split(root + "/data/train.bin");
  data::Dataset val = data::load_split(root + "/data/val.bin");
  data::Dataset test = data::load_split(root + "/data/unbiased_test.bin");
  const std::string gpath = root + "/gan/generator.ckpt";
  if (!std::filesystem::exists(gpath))
    throw TrainError("generator checkpoint not found at " + gpath + "; run the train-gan stage first");
  gan::BiasTranslator translator = gan::BiasTranslator::load(gpath);
  train::TranslationCache cache = train::TranslationCache::build(train, translator);

  struct Variant {
    std::string name;
    train::Toggles toggles;
    train::RefineMode refine = train::RefineMode::adaptive;
  };
  std::vector<Variant> variants;
  if (mode == "components") {
    variants = {{"BTC", {false, false, false}},
                {"+AR", {true, false, false}},
                {"+IAL", {true, true, false}},
                {"+BRL", {true, true, true}}};
  } else {
    variants = {{"original_only", {true, true, true}, train::RefineMode::original},
                {"random_mixup", {true, true, true}, train::RefineMode::random_mixup},
                {"adaptive", {true, true, true}, train::RefineMode::adaptive}};
  }

  nlohmann::json grid = nlohmann::json::array();
  std::ostringstream md;
  md << "| variant | mean unbiased acc | std | seeds |\n|---|---|---|---|\n";
  for (const Variant& v : variants) {
    std::vector<double> accs;
    for (long seed : seeds) {
      train::RunConfig rcfg = detail::run_config(cfg, static_cast<uint64_t>(seed));
      if (cfg.has("ablate", "epochs")) rcfg.epochs = static_cast<int>(cfg.get_int("ablate", "epochs"));
      rcfg.method = train::Method::blade;
      rcfg.toggles = v.toggles;
      rcfg.refine_mode = v.refine;
      const std::string out_dir = root + "/ablate/" + v.name + "/seed" + std::to_string(seed);
      train::BladeTrainer trainer(train, val, rcfg, &translator, &cache);
      train::TrainResult res = trainer.run(out_dir);
      if (!res.best_state.empty()) restore_params(trainer.model_d(), res.best_state);
      accs.push_back(eval::eval_unbiased(trainer.model_d(), test));
    }
    double mean = 0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0;
    for (double a : accs) var += (a - mean) * (a - mean);
    double stddev = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    grid.push_back({{"variant", v.name}, {"mean", mean}, {"std", stddev}, {"accs", accs}});
    md << "| " << v.name << " | " << mean << " | " << stddev << " | " << seeds.size() << " |\n";
  }

  nlohmann::json out = {{"mode", mode}, {"grid", grid}};
  write_json_file(root + "/ablate/grid.json", out);
  write_text_file(root + "/ablate/grid.md", md.str());
  detail::write_provenance(cfg, root + "/ablate", "ablate", seeds.empty() ? 0 : static_cast<uint64_t>(seeds[0]));
  return out;
}

// ---------------------------------------------------------------------------
// plots

namespace detail {

inline std::array<uint8_t, 3> label_color(int label, int n) {
  auto c = data::hsv_to_rgb(static_cast<float>(label % n) / static_cast<float>(n), 0.9f, 0.9f);
  return {static_cast<uint8_t>(c[0] * 255), static_cast<uint8_t>(c[1] * 255), static_cast<uint8_t>(c[2] * 255)};
}

inline void scatter_png(const MatX<double>& y, const std::vector<int>& colors, int n_colors,
                        const std::string& path) {
  const int size = 640, margin = 30;
  Canvas canvas(size, size);
  double xmin = y.col(0).minCoeff(), xmax = y.col(0).maxCoeff();
  double ymin = y.col(1).minCoeff(), ymax = y.col(1).maxCoeff();
  double xr = std::max(1e-9, xmax - xmin), yr = std::max(1e-9, ymax - ymin);
  for (int i = 0; i < y.rows(); ++i) {
    int px = margin + static_cast<int>((y(i, 0) - xmin) / xr * (size - 2 * margin));
    int py = margin + static_cast<int>((y(i, 1) - ymin) / yr * (size - 2 * margin));
    canvas.draw_disc(px, py, 3, label_color(colors[static_cast<size_t>(i)], n_colors));
  }
  canvas.save_png(path);
}

}  // namespace detail

inline nlohmann::json run_plots(const Config& cfg, const StageOptions& opt = {}) {
  validate_config(cfg);
  const std::string root = detail::artifact_dir(cfg, opt);
  const std::string features_path = root + "/eval/features.csv";
  if (!std::filesystem::exists(features_path))
    throw TrainError("feature export not found at " + features_path + "; run the eval stage first");
  nlohmann::json eval_summary = read_json_file(root + "/eval/eval_summary.json");
  const int d = eval_summary.at("feature_dim");
  const bool multi = eval_summary.value("multi_bias", false);

  // parse the columnar feature table
  std::ifstream is(features_path);
  std::vector<std::vector<float>> rows;
  std::vector<int> task, bias;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<float> vals;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stof(tok));
    if (static_cast<int>(vals.size()) < d + 2) throw DataError("malformed feature export row");
    task.push_back(static_cast<int>(vals[static_cast<size_t>(d)]));
    bias.push_back(static_cast<int>(vals[static_cast<size_t>(d) + 1]));
    vals.resize(static_cast<size_t>(d));
    rows.push_back(std::move(vals));
  }
  (void)multi;

  const int max_points = static_cast<int>(cfg.get_int("plots", "tsne_points", 600));
  const int n = std::min<int>(static_cast<int>(rows.size()), max_points);
  MatX<float> x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];

  eval::TsneConfig tc;
  tc.perplexity = cfg.get_real("plots", "tsne_perplexity", 30.0);
  tc.iters = static_cast<int>(cfg.get_int("plots", "tsne_iters", 400));
  tc.seed = static_cast<uint64_t>(cfg.get_int("plots", "tsne_seed", 1));
  MatX<double> y = eval::tsne_embed(x, tc);

  int n_colors = 1;
  for (int i = 0; i < n; ++i) n_colors = std::max({n_colors, task[static_cast<size_t>(i)] + 1, bias[static_cast<size_t>(i)] + 1});
  detail::scatter_png(y, std::vector<int>(task.begin(), task.begin() + n), n_colors, root + "/plots/tsne_task.png");
  detail::scatter_png(y, std::vector<int>(bias.begin(), bias.begin() + n), n_colors, root + "/plots/tsne_bias.png");

  // loss-curve plot over epochs: the four objective components
  const uint64_t seed = opt.seed.value_or(static_cast<uint64_t>(cfg.get_int("train", "seed", 1)));
  const std::string metrics_path = root + "/train/seed" + std::to_string(seed) + "/metrics.jsonl";
  if (std::filesystem::exists(metrics_path)) {
    std::ifstream ms(metrics_path);
    std::vector<std::array<double, 4>> comps;
    while (std::getline(ms, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      comps.push_back({j.at("l_gen"), j.at("l_ref"), j.at("l_align"), j.at("l_reg")});
    }
    if (!comps.empty()) {
      const int w = 720, h = 420, margin = 36;
      Canvas canvas(w, h);
      double vmax = 1e-9;
      for (auto& c : comps)
        for (double v : c) vmax = std::max(vmax, v);
      const std::array<std::array<uint8_t, 3>, 4> colors = {
          {{200, 40, 40}, {40, 120, 220}, {30, 160, 60}, {170, 60, 190}}};
      for (int comp = 0; comp < 4; ++comp) {
        for (size_t e = 1; e < comps.size(); ++e) {
          auto pt = [&](size_t ep, double v) {
            int px = margin + static_cast<int>(static_cast<double>(ep) / std::max<size_t>(1, comps.size() - 1) *
                                               (w - 2 * margin));
            int py = h - margin - static_cast<int>(v / vmax * (h - 2 * margin));
            return std::pair<int, int>(px, py);
          };
          auto [x0, y0] = pt(e - 1, comps[e - 1][static_cast<size_t>(comp)]);
          auto [x1, y1] = pt(e, comps[e][static_cast<size_t>(comp)]);
          canvas.draw_line(x0, y0, x1, y1, colors[static_cast<size_t>(comp)]);
        }
        // legend swatch (gen, ref, align, reg order; colors documented in README)
        canvas.fill_rect(margin + comp * 40, 8, margin + comp * 40 + 24, 20, colors[static_cast<size_t>(comp)]);
      }
      canvas.draw_line(margin, h - margin, w - margin, h - margin, {0, 0, 0});
      canvas.draw_line(margin, margin, margin, h - margin, {0, 0, 0});
      canvas.save_png(root + "/plots/loss_curves.png");
    }
  }

  detail::write_provenance(cfg, root + "/plots", "plots", 0);
  return {{"tsne_task", root + "/plots/tsne_task.png"},
          {"tsne_bias", root + "/plots/tsne_bias.png"},
          {"loss_curves", root + "/plots/loss_curves.png"}};
}

// ---------------------------------------------------------------------------
// dispatch

inline nlohmann::json run_stage(const Config& cfg, const std::string& stage, const StageOptions& opt = {}) {
  if (stage == "synth-data") return run_synth_data(cfg, opt);
  if (stage == "train-gan") return run_train_gan(cfg, opt);
  if (stage == "train-blade") return run_train_blade(cfg, opt);
  if (stage == "eval") return run_eval(cfg, opt);
  if (stage == "ablate") return run_ablate(cfg, opt);
  if (stage == "plots") return run_plots(cfg, opt);
  throw ConfigError("unknown stage: " + stage);
}

}  // namespace cli
}  // namespace blade
