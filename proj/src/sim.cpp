#include "dappo/sim.hpp"

#include <algorithm>
#include <cmath>

namespace dappo::sim {

RobotSpec RobotSpec::quad() {
  RobotSpec spec;
  spec.n_legs = 4;
  spec.joints_per_leg = 2;
  spec.segment_lengths = Matrix(4, 2);
  spec.segment_lengths << 0.4, 0.8, 0.4, 0.8, 0.4, 0.8, 0.4, 0.8;
  spec.joint_range = 30.0 * std::numbers::pi / 180.0;
  spec.neutral_height = 1.0;
  return spec;
}

RobotSpec RobotSpec::hex() {
  RobotSpec spec;
  spec.n_legs = 6;
  spec.joints_per_leg = 3;
  spec.segment_lengths = Matrix(6, 3);
  for (int leg = 0; leg < 6; ++leg) {
    spec.segment_lengths(leg, 0) = 0.06;
    spec.segment_lengths(leg, 1) = 0.06;
    spec.segment_lengths(leg, 2) = 0.07;
  }
  spec.joint_range = 45.0 * std::numbers::pi / 180.0;
  spec.neutral_height = 0.2;
  return spec;
}

RewardConfig RewardConfig::quad() {
  RewardConfig rc;
  rc.w0 = 0.5;
  rc.w1 = 0.5;
  rc.survival_value = 1.0;
  rc.torque_term = false;
  return rc;
}

RewardConfig RewardConfig::hex() {
  RewardConfig rc;
  rc.w0 = 0.03;
  rc.w1 = 0.0005;
  rc.w2 = 0.05;
  rc.survival_value = 0.1;
  rc.torque_term = true;
  return rc;
}

Morphology apply_damage(const RobotSpec& spec, const damage::DamageClass& cls) {
  damage::validate(cls, spec.n_legs, spec.joints_per_leg);
  Morphology morph;
  morph.joint_range = Matrix::Constant(spec.n_legs, spec.joints_per_leg, spec.joint_range);
  morph.segment_lengths = spec.segment_lengths;
  morph.touch_sensor_dead.assign(static_cast<std::size_t>(spec.n_legs), 0);
  for (const auto& a : cls.assignments) {
    switch (a.type) {
      case damage::DamageType::kJammedJoint:
        morph.joint_range(a.limb, a.joint) = kJammedRangeRad;
        break;
      case damage::DamageType::kMissingToe:
        morph.segment_lengths(a.limb, spec.joints_per_leg - 1) = kMissingToeLength;
        if (spec.n_legs == 6) morph.touch_sensor_dead[static_cast<std::size_t>(a.limb)] = 1;
        break;
    }
  }
  return morph;
}

Real reward_from_info(const RewardConfig& rc, const StepInfo& info) {
  Real reward = info.delta_x + info.survival - rc.w0 * static_cast<Real>(info.contact_count);
  if (rc.torque_term) {
    const Real tau_term = rc.w1 * info.slew_effort.norm();
    const Real phi_term = rc.w2 * info.target_angles.norm();
    reward -= tau_term * tau_term + phi_term * phi_term;
  } else {
    const Real phi_term = rc.w1 * info.target_angles.norm();
    reward -= phi_term * phi_term;
  }
  return reward;
}

void forward_kinematics(const Vector& q, const Morphology& morph, int n_legs,
                        int joints_per_leg, Vector& tip_x, Vector& reach) {
  tip_x.resize(n_legs);
  reach.resize(n_legs);
  for (int leg = 0; leg < n_legs; ++leg) {
    Real theta = 0, x = 0, z = 0;
    for (int j = 0; j < joints_per_leg; ++j) {
      theta += q(leg * joints_per_leg + j);
      const Real len = morph.segment_lengths(leg, j);
      x += len * std::sin(theta);
      z += len * std::cos(theta);
    }
    tip_x(leg) = x;
    reach(leg) = z;
  }
}

namespace {

Vector make_observation(const RobotSpec& spec, const Morphology& morph, const EnvState& state,
                        const std::vector<char>& contact) {
  const int J = spec.joint_count();
  Vector obs(spec.observation_dim());
  obs.head(J) = state.q;
  obs.segment(J, J) = (state.q - state.prev_q) / spec.dt;
  obs(2 * J) = state.height;
  obs(2 * J + 1) = state.velocity;
  obs(2 * J + 2) = (state.height - state.prev_height) / spec.dt;
  for (int leg = 0; leg < spec.n_legs; ++leg) {
    const bool dead = morph.touch_sensor_dead[static_cast<std::size_t>(leg)] != 0;
    obs(2 * J + 3 + leg) = (!dead && contact[static_cast<std::size_t>(leg)]) ? 1.0 : 0.0;
  }
  return obs;
}

std::vector<char> contact_flags(const Vector& reach, Real height, int n_legs) {
  std::vector<char> contact(static_cast<std::size_t>(n_legs));
  for (int leg = 0; leg < n_legs; ++leg)
    contact[static_cast<std::size_t>(leg)] = (height - reach(leg) <= kContactTolerance) ? 1 : 0;
  return contact;
}

}  // namespace

std::pair<EnvState, Vector> reset(const RobotSpec& spec, const damage::DamageClass& cls,
                                  std::uint64_t seed) {
  const Morphology morph = apply_damage(spec, cls);
  const int J = spec.joint_count();
  Rng rng(seed);
  EnvState state;
  state.q.resize(J);
  for (int j = 0; j < J; ++j) {
    const Real range = morph.range_of_joint(j, spec.joints_per_leg);
    state.q(j) = std::clamp(rng.uniform(-0.05, 0.05), -range, range);
  }
  state.prev_q = state.q;
  state.height = spec.neutral_height;
  state.prev_height = spec.neutral_height;
  state.velocity = 0;
  Vector reach;
  forward_kinematics(state.q, morph, spec.n_legs, spec.joints_per_leg, state.prev_tip_x, reach);
  const auto contact = contact_flags(reach, state.height, spec.n_legs);
  return {state, make_observation(spec, morph, state, contact)};
}

StepResult step(EnvState& state, const Vector& action, const RobotSpec& spec,
                const Morphology& morph, const RewardConfig& rc) {
  const int J = spec.joint_count();
  if (action.size() != J) throw InvalidInputError("step: action length must equal joint count");
  if (!action.allFinite()) throw InvalidInputError("step: action contains NaN or Inf");
  if (state.terminated) throw InvalidInputError("step: episode already terminated");

  StepInfo info;
  info.target_angles.resize(J);
  info.slew_effort.resize(J);

  const Vector q_old = state.q;
  const Real max_slew = spec.slew_rate * spec.dt;
  for (int j = 0; j < J; ++j) {
    const Real range = morph.range_of_joint(j, spec.joints_per_leg);
    const Real a = std::clamp(action(j), -1.0, 1.0);
    const Real target = a * range;
    const Real delta = std::clamp(target - state.q(j), -max_slew, max_slew);
    state.q(j) = std::clamp(state.q(j) + delta, -range, range);
    info.target_angles(j) = target;
    info.slew_effort(j) = (state.q(j) - q_old(j)) / spec.dt;
  }

  Vector tip_x, reach;
  forward_kinematics(state.q, morph, spec.n_legs, spec.joints_per_leg, tip_x, reach);
  const auto contact = contact_flags(reach, state.height, spec.n_legs);

  int stance = 0;
  Real push = 0, stance_reach = 0;
  for (int leg = 0; leg < spec.n_legs; ++leg) {
    if (!contact[static_cast<std::size_t>(leg)]) continue;
    ++stance;
    push -= (tip_x(leg) - state.prev_tip_x(leg)) / spec.dt;
    stance_reach += reach(leg);
  }

  state.prev_height = state.height;
  const Real alpha = spec.velocity_blend;
  if (stance > 0) {
    state.velocity = alpha * state.velocity + (1.0 - alpha) * push / static_cast<Real>(stance);
    state.height = stance_reach / static_cast<Real>(stance);
  } else {
    state.velocity = alpha * state.velocity;
    state.height -= 0.5 * spec.dt;
  }

  info.delta_x = state.velocity * spec.dt;
  info.contact_count = stance;
  state.cumulative_x += info.delta_x;
  state.prev_tip_x = tip_x;
  state.prev_q = q_old;
  state.step_count += 1;

  const bool fell = state.height < spec.fall_height_fraction * spec.neutral_height;
  const bool jumped = state.height > spec.jump_height_fraction * spec.neutral_height;
  const bool timeout = state.step_count >= spec.max_steps;
  state.terminated = fell || jumped || timeout;
  info.survival = (fell || jumped) ? 0.0 : rc.survival_value;
  info.reward = reward_from_info(rc, info);

  return {make_observation(spec, morph, state, contact), info};
}

Env::Env(RobotSpec spec, damage::DamageClass cls, RewardConfig rc)
    : spec_(std::move(spec)), damage_(std::move(cls)), reward_(rc),
      morph_(apply_damage(spec_, damage_)) {}

const Vector& Env::reset(std::uint64_t seed) {
  auto [state, obs] = sim::reset(spec_, damage_, seed);
  state_ = std::move(state);
  observation_ = std::move(obs);
  return observation_;
}

StepResult Env::step(const Vector& action) {
  StepResult result = sim::step(state_, action, spec_, morph_, reward_);
  observation_ = result.observation;
  return result;
}

}  // namespace dappo::sim
