#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dappo/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Damage-aware locomotion toolkit: train, diagnose, adapt"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string robot = "quad";
  std::int64_t seed = -1;
  app.add_option("--config", config_path, "experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--robot", robot, "robot morphology")->check(CLI::IsMember({"quad", "hex"}));
  app.add_option("--seed", seed, "single-seed override");

  const char* subcommands[] = {"train-expert", "collect",       "train-diagnose",
                               "train-dappo",  "train-unaware", "evaluate",
                               "deploy-demo"};
  const char* descriptions[] = {
      "PPO expert on the healthy robot (stage I only)",
      "paired-rollout diagnosis dataset via the expert policy",
      "self-diagnose classifier + timesteps/rollouts/method accuracy grid",
      "damage-aware PPO over the stage I-IV curriculum",
      "damage-randomized PPO without the damage encoding",
      "per-class DA-PPO vs PPO-Unaware report, confusion matrix, SVG plots",
      "control-loop demo with one injected damage event"};
  for (std::size_t i = 0; i < std::size(subcommands); ++i)
    app.add_subcommand(subcommands[i], descriptions[i]);

  CLI11_PARSE(app, argc, argv);

  try {
    dappo::harness::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = dappo::harness::load_config(config_path);
      if (app.count("--robot") && robot != cfg.robot) {
        std::cerr << "error: --robot conflicts with the config file (config says '"
                  << cfg.robot << "')\n";
        return 2;
      }
    } else {
      cfg = dappo::harness::default_config(robot);
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};

    return dappo::harness::run_command(app.get_subcommands().front()->get_name(), cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
