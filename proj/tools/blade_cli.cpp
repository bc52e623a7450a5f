#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blade/cli/stages.hpp"

// blade: experiment driver for the generative debiasing pipeline.
// Stages: synth-data -> train-gan -> train-blade -> eval (-> ablate, plots).

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config file")->required();
  sub->add_option("--seed", args.seed, "override the stage seed");
  sub->add_option("--out", args.out_dir, "override [experiment] artifact_dir");
}

int run(const std::string& stage, const CommonArgs& args) {
  blade::Config cfg = blade::Config::load(args.config_path);
  blade::cli::StageOptions opt;
  if (args.seed >= 0) opt.seed = static_cast<uint64_t>(args.seed);
  opt.artifact_dir = args.out_dir;
  nlohmann::json result = blade::cli::run_stage(cfg, stage, opt);
  std::cout << result.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blade: generative debiasing experiments on synthetic biased datasets"};
  app.require_subcommand(1);

  const char* stages[] = {"synth-data", "train-gan", "train-blade", "eval", "ablate", "plots"};
  const char* descriptions[] = {
      "synthesize the biased train split and unbiased test/val splits",
      "train the bias-translation generator on the biased split",
      "train the de-biased classifier (and bias-sensitive auxiliary)",
      "evaluate a trained classifier: unbiased/group accuracy, severity confusion, feature export",
      "run the component or refinement-strategy ablation grid over seeds",
      "regenerate embedding and loss-curve plots from persisted artifacts"};

  CommonArgs args[6];
  for (int i = 0; i < 6; ++i) add_common(app.add_subcommand(stages[i], descriptions[i]), args[i]);

  CLI11_PARSE(app, argc, argv);

  std::string chosen = app.get_subcommands().at(0)->get_name();
  int idx = 0;
  for (int i = 0; i < 6; ++i)
    if (chosen == stages[i]) idx = i;

  try {
    return run(chosen, args[idx]);
  } catch (const blade::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const blade::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const blade::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
