#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dappo/control.hpp"
#include "dappo/diagnosis.hpp"
#include "dappo/ppo.hpp"
#include "dappo/sim.hpp"
#include "dappo/types.hpp"

namespace dappo::harness {

/// Deploy-demo scenario: a damage event injected mid-run, watched by the
/// reward-collapse trigger.
struct DeployConfig {
  int episodes = 100;
  int damage_event_episode = 30;
  int injected_class = 9;
  int probe_timesteps = 30;
  int baseline_episodes = 10;
  bool oracle_classifier = false;
};

/// Accuracy grid emitted by train-diagnose (timesteps x rollouts x method).
struct GridConfig {
  bool enabled = true;
  std::vector<int> timesteps = {10, 30, 50};
  std::vector<int> rollouts = {50};
};

struct ExperimentConfig {
  std::string robot = "quad";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  sim::RobotSpec spec;
  sim::RewardConfig reward;
  ppo::PpoConfig ppo;
  std::vector<ppo::StageSchedule> curriculum;
  int expert_iterations = 60;
  diag::CollectionConfig collection;
  diag::ClassifierConfig classifier;
  GridConfig grid;
  Real trigger_fraction = 0.5;
  int eval_episodes_per_class = 10;
  int eval_probes_per_class = 3;
  std::uint64_t eval_seed = 7777;
  DeployConfig deploy;
  std::string out_dir = "out";
};

ExperimentConfig default_config(const std::string& robot);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Starts from default_config(json.robot) and overrides the present keys.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON dump; embedded in every output file.
std::string config_hash(const ExperimentConfig& cfg);

// ---- checkpoint files --------------------------------------------------

void save_policy_checkpoint(const std::filesystem::path& path,
                            const ppo::GaussianPolicy& policy, const ppo::ValueNet& value,
                            bool damage_aware, std::uint64_t seed, const std::string& hash,
                            const nn::AdamState* policy_optimizer = nullptr,
                            const nn::AdamState* value_optimizer = nullptr);
ppo::GaussianPolicy load_policy_checkpoint(const std::filesystem::path& path,
                                           ppo::ValueNet* value = nullptr,
                                           bool* damage_aware = nullptr);

void save_classifier_checkpoint(const std::filesystem::path& path,
                                const diag::ClassifierModel& model, Real validation_accuracy,
                                std::uint64_t seed, const std::string& hash);
diag::ClassifierModel load_classifier_checkpoint(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<ppo::IterationMetrics>& metrics,
                       std::uint64_t seed, const std::string& hash);

/// Trajectory dump: header step, q..., obs..., action..., reward, done.
void write_trajectory_csv(const std::filesystem::path& path, const sim::RobotSpec& spec,
                          const std::vector<Vector>& states_q,
                          const std::vector<Vector>& observations,
                          const std::vector<Vector>& actions, const std::vector<Real>& rewards,
                          const std::vector<bool>& dones, std::uint64_t seed,
                          const std::string& hash);

// ---- evaluation --------------------------------------------------------

struct EvaluationReport {
  int n_classes = 0;
  std::vector<Real> dappo_mean_forward;    // per class, averaged over seeds and episodes
  std::vector<Real> unaware_mean_forward;
  Real dappo_overall = 0;
  Real unaware_overall = 0;
  Real improvement_percent = 0;  // (dappo - unaware) / |unaware| * 100
  Real win_rate = 0;             // per-class wins; exact ties count 0.5
};

/// Paired per-class evaluation with deterministic mean actions; both policy
/// sets see identical episode seeds.
EvaluationReport evaluate_policies(const ExperimentConfig& cfg,
                                   const std::vector<ppo::GaussianPolicy>& dappo_policies,
                                   const std::vector<ppo::GaussianPolicy>& unaware_policies);

// ---- deploy demo -------------------------------------------------------

struct DeployEvent {
  int episode = 0;
  Real reward = 0;
  bool triggered = false;
  bool probe_executed = false;
  bool truncated_probe = false;
  int diagnosed_class = 0;
  std::vector<std::pair<int, Real>> posterior_top3;
};

struct DeployResult {
  Real healthy_baseline = 0;
  int probes_executed = 0;
  std::vector<DeployEvent> events;
};

DeployResult deploy_run(const ExperimentConfig& cfg, const ppo::GaussianPolicy& policy,
                        const ppo::GaussianPolicy& expert, const control::Diagnoser& diagnoser);

/// Oracle-labeled evaluation of the same episode schedule deploy_run uses;
/// per-episode rewards for the bit-identity check on the control loop.
std::vector<Real> oracle_labelled_rewards(const ExperimentConfig& cfg,
                                          const ppo::GaussianPolicy& policy);

// ---- subcommands -------------------------------------------------------

void cmd_train_expert(const ExperimentConfig& cfg);
void cmd_collect(const ExperimentConfig& cfg);
void cmd_train_diagnose(const ExperimentConfig& cfg);
void cmd_train_dappo(const ExperimentConfig& cfg);
void cmd_train_unaware(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_deploy_demo(const ExperimentConfig& cfg);

/// Dispatch by subcommand name; returns a process exit code.
int run_command(const std::string& command, const ExperimentConfig& cfg);

// Artifact paths under cfg.out_dir.
std::filesystem::path expert_path(const ExperimentConfig& cfg, std::uint64_t seed);
std::filesystem::path dataset_path(const ExperimentConfig& cfg, std::uint64_t seed);
std::filesystem::path classifier_path(const ExperimentConfig& cfg, std::uint64_t seed);
std::filesystem::path policy_path(const ExperimentConfig& cfg, const std::string& kind,
                                  std::uint64_t seed);

}  // namespace dappo::harness
