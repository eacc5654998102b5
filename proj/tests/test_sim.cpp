#include <doctest.h>

#include <cmath>

#include "dappo/sim.hpp"

using namespace dappo;
using sim::Env;
using sim::RobotSpec;
using sim::RewardConfig;

namespace {

damage::DamageClass cls(int id, int n_legs) { return damage::class_from_id(id, n_legs, 2); }

/// Diagonal-pair gait: stance pair sweeps the hip back with a straight knee
/// while the other pair swings forward with a bent knee.
Vector scripted_gait_action(const RobotSpec& spec, int t, Real hip_amp, Real knee_amp,
                            int period) {
  Vector action = Vector::Zero(spec.joint_count());
  const Real phase = 2.0 * std::numbers::pi * t / period;
  for (int leg = 0; leg < spec.n_legs; ++leg) {
    const Real offset = (leg == 0 || leg == 3) ? 0.0 : std::numbers::pi;
    const Real hip = hip_amp * std::sin(phase + offset);
    const Real knee = knee_amp * std::max(0.0, std::cos(phase + offset));
    action(leg * spec.joints_per_leg) = hip / spec.joint_range;
    action(leg * spec.joints_per_leg + 1) = knee / spec.joint_range;
  }
  return action;
}

}  // namespace

TEST_CASE("reset is bit-identical per (spec, damage, seed)") {
  const RobotSpec spec = RobotSpec::quad();
  auto [s1, o1] = sim::reset(spec, cls(3, 4), 99);
  auto [s2, o2] = sim::reset(spec, cls(3, 4), 99);
  CHECK((o1 - o2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1.q - s2.q).cwiseAbs().maxCoeff() == 0.0);
  auto [s3, o3] = sim::reset(spec, cls(3, 4), 100);
  CHECK((o1 - o3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("observation layout and reset contact flags") {
  const RobotSpec quad = RobotSpec::quad();
  CHECK(quad.observation_dim() == 23);
  const RobotSpec hex = RobotSpec::hex();
  CHECK(hex.observation_dim() == 45);

  // quad legs reach below the neutral body height, so every flag is set
  auto [state, obs] = sim::reset(quad, cls(0, 4), 7);
  for (int leg = 0; leg < 4; ++leg) CHECK(obs(2 * 8 + 3 + leg) == 1.0);
  CHECK(obs.segment(8, 8).isZero());  // joint velocities start at zero
  CHECK(obs(16) == quad.neutral_height);
}

TEST_CASE("apply_damage adjusts ranges, segments, and hex touch sensors") {
  const RobotSpec quad = RobotSpec::quad();
  const sim::Morphology healthy = sim::apply_damage(quad, cls(0, 4));
  CHECK(healthy.joint_range.minCoeff() == quad.joint_range);
  CHECK((healthy.segment_lengths - quad.segment_lengths).cwiseAbs().maxCoeff() == 0.0);

  // quad missing toe on leg 1 -> [0.4, 0.01]
  damage::DamageClass toe1;
  toe1.assignments = {{1, damage::DamageType::kMissingToe, 0}};
  toe1.class_id = damage::id_from_class(toe1, 4, 2);
  const sim::Morphology m = sim::apply_damage(quad, toe1);
  CHECK(m.segment_lengths(1, 0) == 0.4);
  CHECK(m.segment_lengths(1, 1) == 0.01);
  CHECK(m.touch_sensor_dead[1] == 0);  // touch masking is hex-only

  const RobotSpec hex = RobotSpec::hex();
  damage::DamageClass jam;
  jam.assignments = {{2, damage::DamageType::kJammedJoint, 0}};
  jam.class_id = damage::id_from_class(jam, 6, 2);
  const sim::Morphology mh = sim::apply_damage(hex, jam);
  CHECK(mh.joint_range(2, 0) == doctest::Approx(0.1 * std::numbers::pi / 180.0).epsilon(1e-15));

  damage::DamageClass hex_toe;
  hex_toe.assignments = {{0, damage::DamageType::kMissingToe, 0}};
  hex_toe.class_id = damage::id_from_class(hex_toe, 6, 2);
  CHECK(sim::apply_damage(hex, hex_toe).touch_sensor_dead[0] == 1);

  damage::DamageClass doubled;
  doubled.assignments = {{1, damage::DamageType::kJammedJoint, 0},
                         {1, damage::DamageType::kMissingToe, 0}};
  CHECK_THROWS_AS(sim::apply_damage(quad, doubled), InvalidInputError);

  damage::DamageClass out_of_range;
  out_of_range.assignments = {{7, damage::DamageType::kJammedJoint, 0}};
  CHECK_THROWS_AS(sim::apply_damage(quad, out_of_range), InvalidInputError);
}

TEST_CASE("step validates actions") {
  Env env(RobotSpec::quad(), cls(0, 4), RewardConfig::quad());
  env.reset(1);
  CHECK_THROWS_AS(env.step(Vector::Zero(7)), InvalidInputError);
  Vector bad = Vector::Zero(8);
  bad(3) = std::nan("");
  CHECK_THROWS_AS(env.step(bad), InvalidInputError);
}

TEST_CASE("zero action from the neutral pose stays nearly still") {
  Env env(RobotSpec::quad(), cls(0, 4), RewardConfig::quad());
  env.reset(5);
  const sim::StepResult r = env.step(Vector::Zero(8));
  CHECK(std::abs(r.info.delta_x) < 0.02);
  CHECK(r.info.target_angles.isZero());
  // no motion penalty term: reward is exactly dx + s - w0*C
  CHECK(r.info.reward ==
        r.info.delta_x + r.info.survival - 0.5 * static_cast<Real>(r.info.contact_count));
}

TEST_CASE("quad reward hand case") {
  sim::StepInfo info;
  info.delta_x = 0.1;
  info.survival = 1.0;
  info.contact_count = 2;
  info.target_angles = Vector::Zero(8);
  info.slew_effort = Vector::Zero(8);
  CHECK(sim::reward_from_info(RewardConfig::quad(), info) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("reward decomposition identity holds along trajectories") {
  for (const bool hex : {false, true}) {
    const RobotSpec spec = hex ? RobotSpec::hex() : RobotSpec::quad();
    const RewardConfig rc = hex ? RewardConfig::hex() : RewardConfig::quad();
    Env env(spec, cls(2, spec.n_legs), rc);
    env.reset(11);
    Rng rng(12);
    for (int t = 0; t < 50 && !env.done(); ++t) {
      Vector action(spec.joint_count());
      for (int j = 0; j < spec.joint_count(); ++j) action(j) = rng.uniform(-1.0, 1.0);
      const sim::StepResult r = env.step(action);
      CHECK(r.info.reward == sim::reward_from_info(rc, r.info));
    }
  }
}

TEST_CASE("trajectories are deterministic and angles stay within ranges") {
  const RobotSpec spec = RobotSpec::quad();
  Env a(spec, cls(5, 4), RewardConfig::quad());
  Env b(spec, cls(5, 4), RewardConfig::quad());
  a.reset(31);
  b.reset(31);
  Rng rng(32);
  const sim::Morphology morph = sim::apply_damage(spec, cls(5, 4));
  for (int t = 0; t < 100 && !a.done(); ++t) {
    Vector action(8);
    for (int j = 0; j < 8; ++j) action(j) = rng.uniform(-1.0, 1.0);
    const sim::StepResult ra = a.step(action);
    const sim::StepResult rb = b.step(action);
    CHECK((ra.observation - rb.observation).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ra.info.reward == rb.info.reward);
    for (int j = 0; j < 8; ++j)
      CHECK(std::abs(a.state().q(j)) <= morph.range_of_joint(j, 2) + 1e-15);
  }
}

TEST_CASE("scripted alternating gait walks the healthy quad forward") {
  const RobotSpec spec = RobotSpec::quad();
  Env env(spec, cls(0, 4), RewardConfig::quad());
  env.reset(1);
  for (int t = 0; t < 200 && !env.done(); ++t)
    env.step(scripted_gait_action(spec, t, 0.35, 0.5, 20));
  CHECK(env.state().cumulative_x > 0.0);
}

TEST_CASE("total jam collapses propulsion under arbitrary actions") {
  RobotSpec spec = RobotSpec::quad();
  spec.joint_range = sim::kJammedRangeRad;  // every joint at +-0.1 degrees
  for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Env env(spec, cls(0, 4), RewardConfig::quad());
    env.reset(seed);
    Rng rng(seed + 100);
    for (int t = 0; t < 100 && !env.done(); ++t) {
      Vector action(8);
      for (int j = 0; j < 8; ++j) action(j) = rng.uniform(-1.0, 1.0);
      env.step(action);
    }
    CHECK(std::abs(env.state().cumulative_x) < 0.01);
  }
}

TEST_CASE("hex missing-toe touch sensor reads zero for the whole episode") {
  const RobotSpec spec = RobotSpec::hex();
  damage::DamageClass toe0;
  toe0.assignments = {{0, damage::DamageType::kMissingToe, 0}};
  toe0.class_id = damage::id_from_class(toe0, 6, 2);
  Env env(spec, toe0, RewardConfig::hex());
  const Vector& obs0 = env.reset(3);
  const int flag0 = 2 * spec.joint_count() + 3;
  CHECK(obs0(flag0) == 0.0);
  Rng rng(4);
  for (int t = 0; t < 200 && !env.done(); ++t) {
    Vector action(spec.joint_count());
    for (int j = 0; j < spec.joint_count(); ++j) action(j) = rng.uniform(-1.0, 1.0);
    CHECK(env.step(action).observation(flag0) == 0.0);
  }
}

TEST_CASE("episodes terminate at max_steps with survival intact") {
  RobotSpec spec = RobotSpec::quad();
  spec.max_steps = 25;
  Env env(spec, cls(0, 4), RewardConfig::quad());
  env.reset(8);
  sim::StepResult last;
  int steps = 0;
  while (!env.done()) {
    last = env.step(Vector::Zero(8));
    ++steps;
  }
  CHECK(steps == 25);
  CHECK(last.info.survival == 1.0);  // timeout is not a fall
  CHECK_THROWS_AS(env.step(Vector::Zero(8)), InvalidInputError);
}
