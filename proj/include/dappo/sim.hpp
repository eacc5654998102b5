#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dappo/damage.hpp"
#include "dappo/types.hpp"

namespace dappo::sim {

/// Morphology and episode constants for one robot. Factories carry the
/// project defaults; everything is plain data so experiments can override.
struct RobotSpec {
  int n_legs = 4;
  int joints_per_leg = 2;
  Matrix segment_lengths;  // n_legs x joints_per_leg, meters
  Real joint_range = 0;    // symmetric bound, radians
  Real neutral_height = 0;
  Real slew_rate = 4.0;        // rad/s
  Real dt = 0.05;              // s
  Real velocity_blend = 0.8;   // alpha in (0,1)
  Real fall_height_fraction = 0.3;
  Real jump_height_fraction = 1.7;
  int max_steps = 1000;

  int joint_count() const { return n_legs * joints_per_leg; }
  /// Joint angles + joint velocities + height + forward/vertical velocity
  /// + one contact flag per leg.
  int observation_dim() const { return 2 * joint_count() + 3 + n_legs; }

  static RobotSpec quad();
  static RobotSpec hex();
};

/// Reward weights for the per-step reward
///   R = dx + s - w0*C - (w1*|tau|)^2 - (w2*|phi|)^2
/// The quadruped variant has no torque term and its w1 multiplies |phi|.
struct RewardConfig {
  Real w0 = 0;
  Real w1 = 0;
  Real w2 = 0;
  Real survival_value = 0;
  bool torque_term = false;

  static RewardConfig quad();  // w0=0.5, w1=0.5 on phi, survival 1.0
  static RewardConfig hex();   // w0=0.03, w1=0.0005 on tau, w2=0.05 on phi, survival 0.1
};

/// Damage-adjusted per-joint ranges, per-leg segment lengths, and the set of
/// legs whose touch sensor is forced silent.
struct Morphology {
  Matrix joint_range;      // n_legs x joints_per_leg, symmetric bound
  Matrix segment_lengths;  // n_legs x joints_per_leg
  std::vector<char> touch_sensor_dead;  // per leg

  Real range_of_joint(int flat_joint, int joints_per_leg) const {
    return joint_range(flat_joint / joints_per_leg, flat_joint % joints_per_leg);
  }
};

Morphology apply_damage(const RobotSpec& spec, const damage::DamageClass& cls);

/// Jammed joints collapse to +-0.1 degrees.
inline constexpr Real kJammedRangeRad = 0.1 * std::numbers::pi / 180.0;
/// A missing toe leaves a 0.01 m stub as the terminal segment.
inline constexpr Real kMissingToeLength = 0.01;
/// A leg is in stance when its tip is at or below the ground plane.
inline constexpr Real kContactTolerance = 1e-6;

struct EnvState {
  Vector q;            // joint angles, leg-major
  Vector prev_q;       // angles before the last step (for velocity features)
  Vector prev_tip_x;   // per-leg tip x at the previous step
  Real height = 0;
  Real prev_height = 0;
  Real velocity = 0;   // blended forward velocity
  int step_count = 0;
  Real cumulative_x = 0;
  bool terminated = false;
};

struct StepInfo {
  Real delta_x = 0;
  Real survival = 0;
  int contact_count = 0;
  Vector slew_effort;    // per-joint applied slew per unit time, rad/s
  Vector target_angles;  // scaled targets phi, rad
  Real reward = 0;
};

/// Reward recomputed from StepInfo fields; step() uses exactly this.
Real reward_from_info(const RewardConfig& rc, const StepInfo& info);

/// Per-leg planar forward kinematics, cumulative angles measured from the
/// vertical: tip_x = sum L_i sin(Theta_i), reach = sum L_i cos(Theta_i).
void forward_kinematics(const Vector& q, const Morphology& morph, int n_legs,
                        int joints_per_leg, Vector& tip_x, Vector& reach);

std::pair<EnvState, Vector> reset(const RobotSpec& spec, const damage::DamageClass& cls,
                                  std::uint64_t seed);

struct StepResult {
  Vector observation;
  StepInfo info;
};

StepResult step(EnvState& state, const Vector& action, const RobotSpec& spec,
                const Morphology& morph, const RewardConfig& rc);

/// Convenience wrapper owning spec, damage, and state for rollout loops.
class Env {
 public:
  Env(RobotSpec spec, damage::DamageClass cls, RewardConfig rc);

  const Vector& reset(std::uint64_t seed);
  StepResult step(const Vector& action);

  bool done() const { return state_.terminated; }
  const EnvState& state() const { return state_; }
  const RobotSpec& spec() const { return spec_; }
  const RewardConfig& reward_config() const { return reward_; }
  const damage::DamageClass& damage_class() const { return damage_; }
  const Morphology& morphology() const { return morph_; }
  const Vector& observation() const { return observation_; }

 private:
  RobotSpec spec_;
  damage::DamageClass damage_;
  RewardConfig reward_;
  Morphology morph_;
  EnvState state_;
  Vector observation_;
};

}  // namespace dappo::sim
