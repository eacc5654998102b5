#include "dappo/control.hpp"

#include <limits>

#include "dappo/damage.hpp"

namespace dappo::control {

Diagnoser classifier_diagnoser(const diag::ClassifierModel& model) {
  return [&model](const Matrix& probe, Vector* posterior) {
    return diag::diagnose(model, probe, posterior);
  };
}

EpisodeResult run_episode(AgentState& agent, const ppo::GaussianPolicy& policy,
                          sim::Env& live_env, std::uint64_t seed) {
  const sim::RobotSpec& spec = live_env.spec();
  const int obs_dim = spec.observation_dim();
  const int enc_dim = 2 * spec.n_legs;
  if (policy.obs_dim() != obs_dim + enc_dim)
    throw ConfigurationError("run_episode: policy input must be observation + damage encoding");

  Vector input(obs_dim + enc_dim);
  input.tail(enc_dim) = damage::encode(
      damage::class_from_id(agent.diagnosed_class, spec.n_legs, 2), spec.n_legs);

  EpisodeResult result;
  live_env.reset(seed);
  while (!live_env.done()) {
    input.head(obs_dim) = live_env.observation();
    const sim::StepResult step = live_env.step(policy.mean(input));
    result.reward += step.info.reward;
    ++result.steps;
  }
  result.forward_reward = live_env.state().cumulative_x;

  const Real threshold = agent.trigger_fraction * agent.healthy_baseline;
  const bool was_collapsed = agent.last_episode_reward < threshold;
  agent.last_episode_reward = result.reward;
  if (result.reward < threshold && !was_collapsed) {
    agent.diagnosis_pending = true;
    result.triggered = true;
  }
  return result;
}

ProbeOutcome maybe_diagnose(AgentState& agent, const Diagnoser& diagnoser,
                            const ppo::GaussianPolicy& expert, const sim::RobotSpec& spec,
                            const sim::RewardConfig& reward, sim::Env& live_env,
                            int n_timesteps, diag::Method method, std::uint64_t seed) {
  ProbeOutcome outcome;
  if (!agent.diagnosis_pending) return outcome;

  const diag::DiagnosisSample probe =
      diag::run_probe(spec, reward, live_env, expert, n_timesteps, seed, method);
  outcome.executed = true;
  outcome.truncated = probe.truncated;
  outcome.diagnosed_class = diagnoser(probe.series, &outcome.posterior);

  agent.diagnosed_class = outcome.diagnosed_class;
  agent.diagnosis_count += 1;
  agent.diagnosis_pending = false;
  return outcome;
}

Real calibrate_baseline(const ppo::GaussianPolicy& policy, const sim::RobotSpec& spec,
                        const sim::RewardConfig& reward, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw InvalidInputError("calibrate_baseline: episodes must be >= 1");
  sim::Env env(spec, damage::class_from_id(0, spec.n_legs, 2), reward);
  AgentState scratch;
  scratch.trigger_fraction = 0.5;
  scratch.healthy_baseline = -std::numeric_limits<Real>::infinity();  // no trigger while calibrating
  Real total = 0;
  for (int e = 0; e < episodes; ++e)
    total += run_episode(scratch, policy, env, derive_seed(seed, static_cast<std::uint64_t>(e)))
                 .reward;
  return total / static_cast<Real>(episodes);
}

}  // namespace dappo::control
