#pragma once

#include <cstdint>
#include <functional>
#include <limits>

#include "dappo/diagnosis.hpp"
#include "dappo/policy.hpp"
#include "dappo/sim.hpp"
#include "dappo/types.hpp"

namespace dappo::control {

/// Deployment-time agent state: the currently diagnosed class, the healthy
/// reward baseline, and the reward-collapse trigger bookkeeping. The trigger
/// fires on the crossing below trigger_fraction * baseline, not on the
/// level, so a persistent collapse costs exactly one probe.
struct AgentState {
  int diagnosed_class = 0;
  Real healthy_baseline = 0;
  Real trigger_fraction = 0.5;
  Real last_episode_reward = std::numeric_limits<Real>::infinity();
  int diagnosis_count = 0;
  bool diagnosis_pending = false;
};

/// Maps a probe matrix to a class id; the production implementation wraps
/// the trained classifier, tests may substitute an oracle.
using Diagnoser = std::function<int(const Matrix& probe, Vector* posterior)>;

Diagnoser classifier_diagnoser(const diag::ClassifierModel& model);

struct EpisodeResult {
  Real reward = 0;
  Real forward_reward = 0;
  int steps = 0;
  bool triggered = false;
};

/// Runs one episode on the live environment, driving the policy with the
/// observation augmented by encode(diagnosed class). Sets the diagnosis flag
/// when the episode reward falls below trigger_fraction * healthy baseline.
EpisodeResult run_episode(AgentState& agent, const ppo::GaussianPolicy& policy,
                          sim::Env& live_env, std::uint64_t seed);

struct ProbeOutcome {
  bool executed = false;
  bool truncated = false;
  int diagnosed_class = 0;
  Vector posterior;
};

/// When the diagnosis flag is set, runs exactly one probe trial (the paired
/// rollout of the diagnosis module) and updates the diagnosed class.
ProbeOutcome maybe_diagnose(AgentState& agent, const Diagnoser& diagnoser,
                            const ppo::GaussianPolicy& expert, const sim::RobotSpec& spec,
                            const sim::RewardConfig& reward, sim::Env& live_env,
                            int n_timesteps, diag::Method method, std::uint64_t seed);

/// Mean episode reward of the policy on the healthy robot with the healthy
/// encoding, over the given number of seeded episodes.
Real calibrate_baseline(const ppo::GaussianPolicy& policy, const sim::RobotSpec& spec,
                        const sim::RewardConfig& reward, int episodes, std::uint64_t seed);

}  // namespace dappo::control
