#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dappo/policy.hpp"
#include "dappo/sim.hpp"
#include "dappo/types.hpp"

namespace dappo::ppo {

struct GaeConfig {
  Real gamma = 0.995;
  Real lambda = 0.98;
};

/// Recursive generalized advantage estimation over one contiguous segment.
/// bootstrap_value stands in for V(s_T) when the segment was truncated.
void compute_gae(const Vector& rewards, const Vector& values,
                 const std::vector<std::uint8_t>& dones, Real bootstrap_value,
                 const GaeConfig& config, Vector& advantages, Vector& returns);

struct PpoConfig {
  Real clip_epsilon = 0.2;
  Real kl_target = 0.01;
  Real beta_init = 1.0;
  Real beta_min = 1e-3;
  Real beta_max = 1e3;
  int epochs_per_batch = 10;
  int minibatch_size = 256;
  int batch_timesteps = 2048;
  Real learning_rate_init = 3e-4;
  Real learning_rate_min = 1e-5;
  Real learning_rate_max = 1e-2;
  Real value_learning_rate = 3e-4;
  std::vector<int> hidden_sizes = {100, 200, 100};
  int workers = 2;
  GaeConfig gae;
};

enum class CurriculumStage { kI, kII, kIII, kIV };

std::string stage_name(CurriculumStage stage);
CurriculumStage stage_from_name(const std::string& name);

struct CurriculumMix {
  Real healthy = 1.0;
  Real single_damage = 0.0;
  Real multi_damage = 0.0;
};

/// Stage sampling mixes: I all healthy; II 60/40 healthy/single; III
/// 40/30/30; IV uniform over every class (expressed as the category mix
/// that a uniform class draw induces).
CurriculumMix stage_mix(CurriculumStage stage, int n_limbs, int n_types);

/// Samples a damage-class id: category by stage mix, uniform within.
int sample_damage_class(CurriculumStage stage, int n_limbs, int n_types, Rng& rng);

struct StageSchedule {
  CurriculumStage stage = CurriculumStage::kI;
  int iterations = 0;
};

/// Default curriculum: 50/50/50/100 iterations for stages I-IV.
std::vector<StageSchedule> default_curriculum();

/// Flat on-policy batch. Entries are grouped into contiguous worker
/// segments; each segment gets its own GAE bootstrap value.
struct RolloutBatch {
  Matrix observations;  // input_dim x N (damage encoding appended when aware)
  Matrix actions;       // action_dim x N
  Vector log_probs;
  Vector rewards;
  Vector values;
  Vector advantages;
  Vector returns;
  std::vector<std::uint8_t> dones;
  std::vector<int> segment_ends;  // exclusive end index per worker segment
  Vector bootstrap_values;        // per segment

  std::vector<Real> episode_rewards;   // completed episodes only
  std::vector<Real> episode_forward;   // cumulative delta-x per completed episode
  std::vector<int> episode_classes;    // damage class per started episode

  int size() const { return static_cast<int>(rewards.size()); }
};

/// Collects exactly batch_timesteps steps across damage-randomized episodes.
/// In damage-aware mode the true class encoding is appended to every
/// observation (training-time oracle labels).
RolloutBatch collect_rollouts(const GaussianPolicy& policy, const ValueNet& value,
                              const sim::RobotSpec& spec, const sim::RewardConfig& reward,
                              CurriculumStage stage, int batch_timesteps, std::uint64_t seed,
                              bool damage_aware, int workers);

/// Likelihood ratio r = exp(log pi_new(a|s) - log pi_old(a|s)).
Real policy_ratio(const GaussianPolicy& policy, const GaussianPolicy& old_policy,
                  const Vector& obs, const Vector& action);

/// Per-sample clipped surrogate min(r*A, clip(r, 1-eps, 1+eps)*A).
Real clipped_surrogate(Real ratio, Real advantage, Real clip_epsilon);

struct SurrogateStats {
  Real mean_kl = 0;
  Real clip_fraction = 0;
};

/// Policy part of the PPO objective on a minibatch:
///   -mean(clipped surrogate) + beta * mean KL(old || new).
/// Accumulates parameter gradients when accumulate_grads is set.
Real policy_loss(GaussianPolicy& policy, const GaussianPolicy& old_policy,
                 const Matrix& obs, const Matrix& actions, const Vector& old_log_probs,
                 const Vector& advantages, Real beta, Real clip_epsilon,
                 SurrogateStats* stats, bool accumulate_grads);

/// 0.5 * mean (V(s) - return)^2 with optional gradient accumulation.
Real value_loss(ValueNet& value, const Matrix& obs, const Vector& returns,
                bool accumulate_grads);

/// Combined diagnostic loss over a minibatch (policy surrogate + KL penalty
/// + value term); throws on non-finite results.
Real ppo_loss(GaussianPolicy& policy, const GaussianPolicy& old_policy, ValueNet& value,
              const Matrix& obs, const Matrix& actions, const Vector& old_log_probs,
              const Vector& advantages, const Vector& returns, Real beta,
              const PpoConfig& config, SurrogateStats* stats);

/// beta doubles when KL > 1.5x target, halves when < target/1.5, clamped to
/// [1e-3, 1e3].
Real adapt_kl(Real beta, Real observed_kl, Real target);

/// Normalizes in place to mean 0 / std 1 (no-op when all entries equal).
void normalize_advantages(Vector& advantages);

struct IterationMetrics {
  int iteration = 0;
  CurriculumStage stage = CurriculumStage::kI;
  Real mean_episode_reward = 0;
  Real mean_forward_reward = 0;
  Real mean_kl = 0;
  Real clip_fraction = 0;
  Real beta = 0;
  Real learning_rate = 0;
};

struct TrainResult {
  GaussianPolicy policy;
  ValueNet value;
  nn::AdamState policy_optimizer;
  nn::AdamState value_optimizer;
  std::vector<IterationMetrics> metrics;
  bool aborted = false;
};

/// Full PPO training over a staged curriculum. Deterministic per seed.
TrainResult train(const PpoConfig& config, const sim::RobotSpec& spec,
                  const sim::RewardConfig& reward,
                  const std::vector<StageSchedule>& curriculum, std::uint64_t seed,
                  bool damage_aware);

}  // namespace dappo::ppo
