#pragma once

#include <map>
#include <set>
#include <string>

#include "blade/core/config.hpp"
#include "blade/core/error.hpp"

// The config schema: one table naming every legal section and key with its
// type. Validation rejects unknown sections and keys outright so a typo in a
// loss toggle cannot silently train the wrong configuration.

namespace blade {
namespace cli {

enum class KeyType { integer, real, boolean, text, int_list };

inline const std::map<std::string, std::map<std::string, KeyType>>& config_schema() {
  static const std::map<std::string, std::map<std::string, KeyType>> schema = {
      {"experiment",
       {{"id", KeyType::text}, {"artifact_dir", KeyType::text}, {"seeds", KeyType::int_list}}},
      {"data",
       {{"kind", KeyType::text},
        {"bcr", KeyType::real},
        {"bcr2", KeyType::real},
        {"n_classes", KeyType::integer},
        {"n_bias_domains", KeyType::integer},
        {"n_train", KeyType::integer},
        {"n_test", KeyType::integer},
        {"n_val", KeyType::integer},
        {"img_size", KeyType::integer},
        {"color_jitter", KeyType::real},
        {"seed", KeyType::integer}}},
      {"gan",
       {{"base_channels", KeyType::integer},
        {"n_res_blocks", KeyType::integer},
        {"disc_blocks", KeyType::integer},
        {"d_style", KeyType::integer},
        {"iters", KeyType::integer},
        {"batch_size", KeyType::integer},
        {"lr_g", KeyType::real},
        {"lr_d", KeyType::real},
        {"beta1", KeyType::real},
        {"beta2", KeyType::real},
        {"lambda_cls", KeyType::real},
        {"lambda_rec", KeyType::real},
        {"n_critic", KeyType::integer},
        {"log_every", KeyType::integer},
        {"sample_every", KeyType::integer},
        {"seed", KeyType::integer}}},
      {"train",
       {{"method", KeyType::text},
        {"arch", KeyType::text},
        {"hidden", KeyType::integer},
        {"epochs", KeyType::integer},
        {"batch_size", KeyType::integer},
        {"lr", KeyType::real},
        {"lr_floor_frac", KeyType::real},
        {"tau", KeyType::real},
        {"gce_q", KeyType::real},
        {"use_refinement", KeyType::boolean},
        {"use_align", KeyType::boolean},
        {"use_reg", KeyType::boolean},
        {"refine_mode", KeyType::text},
        {"grad_clip", KeyType::real},
        {"translation_cache", KeyType::boolean},
        {"bcs_ema", KeyType::real},
        {"seed", KeyType::integer}}},
      {"eval",
       {{"checkpoint", KeyType::text},
        {"bcs_threshold", KeyType::real},
        {"export_features", KeyType::boolean},
        {"seed", KeyType::integer}}},
      {"ablate", {{"mode", KeyType::text}, {"epochs", KeyType::integer}}},
      {"plots",
       {{"tsne_points", KeyType::integer},
        {"tsne_perplexity", KeyType::real},
        {"tsne_iters", KeyType::integer},
        {"tsne_seed", KeyType::integer}}},
  };
  return schema;
}

/// Rejects unknown sections/keys and type-checks every value.
inline void validate_config(const Config& cfg) {
  const auto& schema = config_schema();
  for (const std::string& sec : cfg.section_names()) {
    auto sit = schema.find(sec);
    if (sit == schema.end()) throw ConfigError("unknown config section [" + sec + "]");
    for (auto& [key, value] : cfg.section(sec)) {
      auto kit = sit->second.find(key);
      if (kit == sit->second.end()) throw ConfigError("unknown config key [" + sec + "] " + key);
      switch (kit->second) {
        case KeyType::integer: cfg.get_int(sec, key); break;
        case KeyType::real: cfg.get_real(sec, key); break;
        case KeyType::boolean: cfg.get_bool(sec, key); break;
        case KeyType::int_list: cfg.get_int_list(sec, key); break;
        case KeyType::text: break;
      }
    }
  }
  if (!cfg.has("experiment", "artifact_dir"))
    throw ConfigError("config must set [experiment] artifact_dir");
}

}  // namespace cli
}  // namespace blade
