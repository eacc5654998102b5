#include "dappo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace dappo::ppo {

void compute_gae(const Vector& rewards, const Vector& values,
                 const std::vector<std::uint8_t>& dones, Real bootstrap_value,
                 const GaeConfig& config, Vector& advantages, Vector& returns) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw InvalidInputError("compute_gae: array length mismatch");
  advantages.resize(n);
  returns.resize(n);
  Real gae = 0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const Real not_done = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const Real next_value = (t == n - 1) ? bootstrap_value : values(t + 1);
    const Real delta = rewards(t) + config.gamma * next_value * not_done - values(t);
    gae = delta + config.gamma * config.lambda * not_done * gae;
    advantages(t) = gae;
  }
  returns = advantages + values;
}

std::string stage_name(CurriculumStage stage) {
  switch (stage) {
    case CurriculumStage::kI: return "I";
    case CurriculumStage::kII: return "II";
    case CurriculumStage::kIII: return "III";
    case CurriculumStage::kIV: return "IV";
  }
  throw ConfigurationError("unknown curriculum stage");
}

CurriculumStage stage_from_name(const std::string& name) {
  if (name == "I") return CurriculumStage::kI;
  if (name == "II") return CurriculumStage::kII;
  if (name == "III") return CurriculumStage::kIII;
  if (name == "IV") return CurriculumStage::kIV;
  throw ConfigurationError("unknown curriculum stage '" + name + "'");
}

CurriculumMix stage_mix(CurriculumStage stage, int n_limbs, int n_types) {
  switch (stage) {
    case CurriculumStage::kI: return {1.0, 0.0, 0.0};
    case CurriculumStage::kII: return {0.6, 0.4, 0.0};
    case CurriculumStage::kIII: return {0.4, 0.3, 0.3};
    case CurriculumStage::kIV: {
      const Real total = static_cast<Real>(damage::count_classes(n_limbs, n_types));
      const Real singles = static_cast<Real>(n_limbs * n_types);
      return {1.0 / total, singles / total, (total - 1.0 - singles) / total};
    }
  }
  throw ConfigurationError("unknown curriculum stage");
}

int sample_damage_class(CurriculumStage stage, int n_limbs, int n_types, Rng& rng) {
  const CurriculumMix mix = stage_mix(stage, n_limbs, n_types);
  const int singles = n_limbs * n_types;
  const int total = static_cast<int>(damage::count_classes(n_limbs, n_types));
  const Real u = rng.uniform();
  if (u < mix.healthy) return 0;
  if (u < mix.healthy + mix.single_damage) return 1 + rng.uniform_int(singles);
  return 1 + singles + rng.uniform_int(total - 1 - singles);
}

std::vector<StageSchedule> default_curriculum() {
  return {{CurriculumStage::kI, 50},
          {CurriculumStage::kII, 50},
          {CurriculumStage::kIII, 50},
          {CurriculumStage::kIV, 100}};
}

namespace {

struct WorkerChunk {
  Matrix observations;
  Matrix actions;
  Vector log_probs;
  Vector rewards;
  Vector values;
  std::vector<std::uint8_t> dones;
  Real bootstrap_value = 0;
  std::vector<Real> episode_rewards;
  std::vector<Real> episode_forward;
  std::vector<int> episode_classes;
};

WorkerChunk collect_chunk(const GaussianPolicy& policy, const ValueNet& value,
                          const sim::RobotSpec& spec, const sim::RewardConfig& reward,
                          CurriculumStage stage, int steps, std::uint64_t seed,
                          bool damage_aware) {
  const int obs_dim = spec.observation_dim();
  const int enc_dim = damage_aware ? 2 * spec.n_legs : 0;
  const int input_dim = obs_dim + enc_dim;
  const int action_dim = spec.joint_count();

  WorkerChunk chunk;
  chunk.observations.resize(input_dim, steps);
  chunk.actions.resize(action_dim, steps);
  chunk.log_probs.resize(steps);
  chunk.rewards.resize(steps);
  chunk.values.resize(steps);
  chunk.dones.resize(static_cast<std::size_t>(steps));

  Rng rng(seed);
  Vector input(input_dim);

  int class_id = sample_damage_class(stage, spec.n_legs, 2, rng);
  sim::Env env(spec, damage::class_from_id(class_id, spec.n_legs, 2), reward);
  env.reset(rng.next_u64());
  chunk.episode_classes.push_back(class_id);
  Real episode_reward = 0;
  if (damage_aware)
    input.tail(enc_dim) = damage::encode(env.damage_class(), spec.n_legs);

  for (int t = 0; t < steps; ++t) {
    input.head(obs_dim) = env.observation();
    Real log_prob = 0;
    const Vector action = policy.sample(input, rng, &log_prob);
    chunk.observations.col(t) = input;
    chunk.actions.col(t) = action;
    chunk.log_probs(t) = log_prob;
    chunk.values(t) = value.value(input);

    const sim::StepResult result = env.step(action);
    chunk.rewards(t) = result.info.reward;
    episode_reward += result.info.reward;
    const bool done = env.done();
    chunk.dones[static_cast<std::size_t>(t)] = done ? 1 : 0;

    if (done) {
      chunk.episode_rewards.push_back(episode_reward);
      chunk.episode_forward.push_back(env.state().cumulative_x);
      episode_reward = 0;
      class_id = sample_damage_class(stage, spec.n_legs, 2, rng);
      env = sim::Env(spec, damage::class_from_id(class_id, spec.n_legs, 2), reward);
      env.reset(rng.next_u64());
      chunk.episode_classes.push_back(class_id);
      if (damage_aware)
        input.tail(enc_dim) = damage::encode(env.damage_class(), spec.n_legs);
    }
  }

  if (chunk.dones.back()) {
    chunk.bootstrap_value = 0;
  } else {
    input.head(obs_dim) = env.observation();
    chunk.bootstrap_value = value.value(input);
  }
  if (chunk.episode_rewards.empty()) {
    // nothing completed inside the chunk; report the running partial episode
    chunk.episode_rewards.push_back(episode_reward);
    chunk.episode_forward.push_back(env.state().cumulative_x);
  }
  return chunk;
}

}  // namespace

RolloutBatch collect_rollouts(const GaussianPolicy& policy, const ValueNet& value,
                              const sim::RobotSpec& spec, const sim::RewardConfig& reward,
                              CurriculumStage stage, int batch_timesteps, std::uint64_t seed,
                              bool damage_aware, int workers) {
  if (batch_timesteps <= 0) throw InvalidInputError("collect_rollouts: batch_timesteps must be positive");
  workers = std::max(1, std::min(workers, batch_timesteps));

  std::vector<int> chunk_sizes(static_cast<std::size_t>(workers));
  const int base = batch_timesteps / workers;
  const int extra = batch_timesteps % workers;
  for (int w = 0; w < workers; ++w)
    chunk_sizes[static_cast<std::size_t>(w)] = base + (w < extra ? 1 : 0);

  std::vector<WorkerChunk> chunks(static_cast<std::size_t>(workers));
  {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        chunks[static_cast<std::size_t>(w)] =
            collect_chunk(policy, value, spec, reward, stage,
                          chunk_sizes[static_cast<std::size_t>(w)],
                          derive_seed(seed, static_cast<std::uint64_t>(w)), damage_aware);
      });
    }
    for (auto& t : pool) t.join();
  }

  const int input_dim = spec.observation_dim() + (damage_aware ? 2 * spec.n_legs : 0);
  RolloutBatch batch;
  batch.observations.resize(input_dim, batch_timesteps);
  batch.actions.resize(spec.joint_count(), batch_timesteps);
  batch.log_probs.resize(batch_timesteps);
  batch.rewards.resize(batch_timesteps);
  batch.values.resize(batch_timesteps);
  batch.dones.resize(static_cast<std::size_t>(batch_timesteps));
  batch.bootstrap_values.resize(workers);

  int offset = 0;
  for (int w = 0; w < workers; ++w) {
    const WorkerChunk& chunk = chunks[static_cast<std::size_t>(w)];
    const int n = static_cast<int>(chunk.rewards.size());
    batch.observations.middleCols(offset, n) = chunk.observations;
    batch.actions.middleCols(offset, n) = chunk.actions;
    batch.log_probs.segment(offset, n) = chunk.log_probs;
    batch.rewards.segment(offset, n) = chunk.rewards;
    batch.values.segment(offset, n) = chunk.values;
    std::copy(chunk.dones.begin(), chunk.dones.end(),
              batch.dones.begin() + offset);
    offset += n;
    batch.segment_ends.push_back(offset);
    batch.bootstrap_values(w) = chunk.bootstrap_value;
    batch.episode_rewards.insert(batch.episode_rewards.end(), chunk.episode_rewards.begin(),
                                 chunk.episode_rewards.end());
    batch.episode_forward.insert(batch.episode_forward.end(), chunk.episode_forward.begin(),
                                 chunk.episode_forward.end());
    batch.episode_classes.insert(batch.episode_classes.end(), chunk.episode_classes.begin(),
                                 chunk.episode_classes.end());
  }
  return batch;
}

Real policy_ratio(const GaussianPolicy& policy, const GaussianPolicy& old_policy,
                  const Vector& obs, const Vector& action) {
  return std::exp(policy.log_prob(obs, action) - old_policy.log_prob(obs, action));
}

Real clipped_surrogate(Real ratio, Real advantage, Real clip_epsilon) {
  const Real clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

Real policy_loss(GaussianPolicy& policy, const GaussianPolicy& old_policy,
                 const Matrix& obs, const Matrix& actions, const Vector& old_log_probs,
                 const Vector& advantages, Real beta, Real clip_epsilon,
                 SurrogateStats* stats, bool accumulate_grads) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw InvalidInputError("policy_loss: empty minibatch");
  const Eigen::Index J = actions.rows();
  const Real inv_n = 1.0 / static_cast<Real>(n);

  const Matrix mean_new = accumulate_grads ? policy.forward_mean(obs) : policy.mean(obs);
  const Matrix mean_old = old_policy.mean(obs);
  const Vector var_new = (2.0 * policy.log_std.array()).exp();
  const Vector var_old = (2.0 * old_policy.log_std.array()).exp();

  Matrix grad_mean = Matrix::Zero(J, n);
  Vector grad_log_std = Vector::Zero(J);

  Real surrogate_sum = 0, kl_sum = 0;
  int clipped_count = 0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const Real lp_new = gaussian_log_prob(mean_new.col(i), policy.log_std, actions.col(i));
    const Real ratio = std::exp(lp_new - old_log_probs(i));
    const Real adv = advantages(i);
    const Real clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const bool outside = ratio < 1.0 - clip_epsilon || ratio > 1.0 + clip_epsilon;
    if (outside) ++clipped_count;
    surrogate_sum += std::min(ratio * adv, clipped * adv);

    // d(-surrogate)/d(log pi_new): zero when the clip binds.
    const Real dlogp = (ratio * adv <= clipped * adv) ? -adv * ratio * inv_n : 0.0;

    Real kl = 0;
    for (Eigen::Index j = 0; j < J; ++j) {
      const Real diff_a = actions(j, i) - mean_new(j, i);
      const Real diff_m = mean_old(j, i) - mean_new(j, i);
      kl += policy.log_std(j) - old_policy.log_std(j) +
            (var_old(j) + diff_m * diff_m) / (2.0 * var_new(j)) - 0.5;
      if (accumulate_grads) {
        // surrogate path through log pi_new
        grad_mean(j, i) += dlogp * diff_a / var_new(j);
        grad_log_std(j) += dlogp * (diff_a * diff_a / var_new(j) - 1.0);
        // beta-weighted KL(old || new) path
        grad_mean(j, i) += beta * inv_n * (-diff_m / var_new(j));
        grad_log_std(j) +=
            beta * inv_n * (1.0 - (var_old(j) + diff_m * diff_m) / var_new(j));
      }
    }
    kl_sum += kl;
  }

  if (accumulate_grads) {
    policy.backward_mean(grad_mean);
    policy.grad_log_std += grad_log_std;
  }
  if (stats) {
    stats->mean_kl = kl_sum * inv_n;
    stats->clip_fraction = static_cast<Real>(clipped_count) * inv_n;
  }
  return -surrogate_sum * inv_n + beta * kl_sum * inv_n;
}

Real value_loss(ValueNet& value, const Matrix& obs, const Vector& returns,
                bool accumulate_grads) {
  const Eigen::Index n = obs.cols();
  if (n == 0) throw InvalidInputError("value_loss: empty minibatch");
  const Real inv_n = 1.0 / static_cast<Real>(n);
  if (!accumulate_grads) {
    const Vector v = value.value(obs);
    return 0.5 * (v - returns).squaredNorm() * inv_n;
  }
  const Matrix v = value.net.forward(obs);
  const Matrix err = v.row(0).transpose() - returns;
  value.net.backward(Matrix(err.transpose() * inv_n));
  return 0.5 * err.squaredNorm() * inv_n;
}

Real ppo_loss(GaussianPolicy& policy, const GaussianPolicy& old_policy, ValueNet& value,
              const Matrix& obs, const Matrix& actions, const Vector& old_log_probs,
              const Vector& advantages, const Vector& returns, Real beta,
              const PpoConfig& config, SurrogateStats* stats) {
  const Real lp = policy_loss(policy, old_policy, obs, actions, old_log_probs, advantages,
                              beta, config.clip_epsilon, stats, false);
  const Real lv = value_loss(value, obs, returns, false);
  const Real total = lp + lv;
  if (!std::isfinite(total)) throw ConfigurationError("ppo_loss: non-finite loss");
  return total;
}

Real adapt_kl(Real beta, Real observed_kl, Real target) {
  if (beta <= 0) throw InvalidInputError("adapt_kl: beta must be positive");
  if (observed_kl > 1.5 * target)
    beta *= 2.0;
  else if (observed_kl < target / 1.5)
    beta /= 2.0;
  return std::clamp(beta, 1e-3, 1e3);
}

void normalize_advantages(Vector& advantages) {
  const Eigen::Index n = advantages.size();
  if (n <= 1) return;
  const Real mean = advantages.mean();
  const Real var = (advantages.array() - mean).square().sum() / static_cast<Real>(n);
  const Real std = std::sqrt(var);
  if (std < 1e-12) return;
  advantages = (advantages.array() - mean) / std;
}

namespace {

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

Matrix gather_cols(const Matrix& m, const std::vector<int>& idx, int begin, int count) {
  Matrix out(m.rows(), count);
  for (int i = 0; i < count; ++i)
    out.col(i) = m.col(idx[static_cast<std::size_t>(begin + i)]);
  return out;
}

Vector gather(const Vector& v, const std::vector<int>& idx, int begin, int count) {
  Vector out(count);
  for (int i = 0; i < count; ++i) out(i) = v(idx[static_cast<std::size_t>(begin + i)]);
  return out;
}

Real mean_of(const std::vector<Real>& xs) {
  if (xs.empty()) return 0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<Real>(xs.size());
}

}  // namespace

TrainResult train(const PpoConfig& config, const sim::RobotSpec& spec,
                  const sim::RewardConfig& reward,
                  const std::vector<StageSchedule>& curriculum, std::uint64_t seed,
                  bool damage_aware) {
  const int input_dim = spec.observation_dim() + (damage_aware ? 2 * spec.n_legs : 0);

  Rng init_rng(derive_seed(seed, 1));
  Rng value_rng(derive_seed(seed, 2));
  TrainResult result;
  result.policy = GaussianPolicy(input_dim, config.hidden_sizes, spec.joint_count(), init_rng);
  result.value = ValueNet(input_dim, config.hidden_sizes, value_rng);

  result.policy_optimizer =
      nn::AdamState::make(result.policy.parameter_count(), config.learning_rate_init);
  result.value_optimizer =
      nn::AdamState::make(result.value.net.parameter_count(), config.value_learning_rate);
  nn::AdamState& policy_adam = result.policy_optimizer;
  nn::AdamState& value_adam = result.value_optimizer;

  Real beta = config.beta_init;
  Real learning_rate = config.learning_rate_init;

  Matrix prev_obs;    // one-batch ring buffer for value training
  Vector prev_returns;

  int iteration = 0;
  for (const auto& stage : curriculum) {
    for (int k = 0; k < stage.iterations; ++k, ++iteration) {
      RolloutBatch batch = collect_rollouts(
          result.policy, result.value, spec, reward, stage.stage, config.batch_timesteps,
          derive_seed(seed, 1000 + static_cast<std::uint64_t>(iteration)), damage_aware,
          config.workers);

      // GAE per worker segment
      batch.advantages.resize(batch.size());
      batch.returns.resize(batch.size());
      int begin = 0;
      for (std::size_t s = 0; s < batch.segment_ends.size(); ++s) {
        const int end = batch.segment_ends[s];
        const int n = end - begin;
        Vector adv, ret;
        std::vector<std::uint8_t> seg_dones(batch.dones.begin() + begin,
                                            batch.dones.begin() + end);
        compute_gae(batch.rewards.segment(begin, n), batch.values.segment(begin, n),
                    seg_dones, batch.bootstrap_values(static_cast<Eigen::Index>(s)),
                    config.gae, adv, ret);
        batch.advantages.segment(begin, n) = adv;
        batch.returns.segment(begin, n) = ret;
        begin = end;
      }
      normalize_advantages(batch.advantages);

      const GaussianPolicy old_policy = result.policy;
      const Vector params_backup = result.policy.parameters();
      policy_adam.learning_rate = learning_rate;

      Rng shuffle_rng(derive_seed(seed, 2000 + static_cast<std::uint64_t>(iteration)));
      bool blown_up = false;
      for (int epoch = 0; epoch < config.epochs_per_batch && !blown_up; ++epoch) {
        const auto idx = shuffled_indices(batch.size(), shuffle_rng);
        for (int start = 0; start < batch.size(); start += config.minibatch_size) {
          const int count = std::min(config.minibatch_size, batch.size() - start);
          const Matrix mb_obs = gather_cols(batch.observations, idx, start, count);
          const Matrix mb_act = gather_cols(batch.actions, idx, start, count);
          const Vector mb_lp = gather(batch.log_probs, idx, start, count);
          const Vector mb_adv = gather(batch.advantages, idx, start, count);
          result.policy.zero_gradients();
          policy_loss(result.policy, old_policy, mb_obs, mb_act, mb_lp, mb_adv, beta,
                      config.clip_epsilon, nullptr, true);
          Vector params = result.policy.parameters();
          adam_update(params, result.policy.gradients(), policy_adam);
          if (!params.allFinite()) {
            blown_up = true;
            break;
          }
          result.policy.set_parameters(params);
          result.policy.clamp_log_std();
        }
      }
      if (blown_up) {
        result.policy.set_parameters(params_backup);
        result.aborted = true;
        return result;
      }

      // full-batch diagnostics against the sampling policy
      SurrogateStats stats;
      policy_loss(result.policy, old_policy, batch.observations, batch.actions,
                  batch.log_probs, batch.advantages, beta, config.clip_epsilon, &stats,
                  false);

      // value trained on current batch + previous batch
      Matrix value_obs;
      Vector value_returns;
      if (prev_obs.cols() > 0 && prev_obs.rows() == batch.observations.rows()) {
        value_obs.resize(batch.observations.rows(), batch.size() + prev_obs.cols());
        value_obs << batch.observations, prev_obs;
        value_returns.resize(batch.size() + prev_returns.size());
        value_returns << batch.returns, prev_returns;
      } else {
        value_obs = batch.observations;
        value_returns = batch.returns;
      }
      const int n_value = static_cast<int>(value_obs.cols());
      for (int epoch = 0; epoch < config.epochs_per_batch; ++epoch) {
        const auto idx = shuffled_indices(n_value, shuffle_rng);
        for (int start = 0; start < n_value; start += config.minibatch_size) {
          const int count = std::min(config.minibatch_size, n_value - start);
          const Matrix mb_obs = gather_cols(value_obs, idx, start, count);
          const Vector mb_ret = gather(value_returns, idx, start, count);
          result.value.net.zero_gradients();
          value_loss(result.value, mb_obs, mb_ret, true);
          Vector params = result.value.net.parameters();
          adam_update(params, result.value.net.gradients(), value_adam);
          if (!params.allFinite()) {
            result.aborted = true;
            return result;
          }
          result.value.net.set_parameters(params);
        }
      }
      prev_obs = batch.observations;
      prev_returns = batch.returns;

      beta = adapt_kl(beta, stats.mean_kl, config.kl_target);
      if (stats.mean_kl > 2.0 * config.kl_target)
        learning_rate *= 0.5;
      else if (stats.mean_kl < config.kl_target / 2.0)
        learning_rate *= 1.5;
      learning_rate =
          std::clamp(learning_rate, config.learning_rate_min, config.learning_rate_max);

      IterationMetrics metrics;
      metrics.iteration = iteration;
      metrics.stage = stage.stage;
      metrics.mean_episode_reward = mean_of(batch.episode_rewards);
      metrics.mean_forward_reward = mean_of(batch.episode_forward);
      metrics.mean_kl = stats.mean_kl;
      metrics.clip_fraction = stats.clip_fraction;
      metrics.beta = beta;
      metrics.learning_rate = learning_rate;
      result.metrics.push_back(metrics);
    }
  }
  return result;
}

}  // namespace dappo::ppo
