// Acceptance suite: one criterion per function, one PASS/FAIL line each.
// Run `acceptance all` or `acceptance <n>`; the exit code is the number of
// failed criteria. Training-backed criteria are deterministic per the seeds
// fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dappo/control.hpp"
#include "dappo/damage.hpp"
#include "dappo/diagnosis.hpp"
#include "dappo/harness.hpp"
#include "dappo/io.hpp"
#include "dappo/ppo.hpp"
#include "dappo/sim.hpp"

using namespace dappo;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
};

int report(int number, const std::string& title, const Criterion& c, double seconds) {
  std::ostringstream line;
  line << (c.ok ? "[PASS]" : "[FAIL]") << " criterion " << number << ": " << title << " ("
       << static_cast<long>(seconds + 0.5) << " s)";
  if (!c.ok) line << " -- " << c.detail;
  std::cout << line.str() << std::endl;
  return c.ok ? 0 : 1;
}

template <typename F>
int run(int number, const std::string& title, F&& body) {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report(number, title, c, secs);
}

std::string fmt(Real x) { return io::format_real(x); }

// ---- shared desk-scale helpers ------------------------------------------

/// Healthy-robot expert at desk scale (stage I only).
ppo::GaussianPolicy train_expert(int iterations, std::uint64_t seed) {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  ppo::PpoConfig cfg;
  ppo::TrainResult result = ppo::train(cfg, spec, sim::RewardConfig::quad(),
                                       {{ppo::CurriculumStage::kI, iterations}}, seed, false);
  if (result.aborted) throw ConfigurationError("expert training diverged");
  return std::move(result.policy);
}

std::vector<diag::DiagnosisSample> collect_subset(const sim::RobotSpec& spec,
                                                  const ppo::GaussianPolicy& expert,
                                                  const std::vector<int>& class_ids,
                                                  int rollouts, int timesteps,
                                                  diag::Method method,
                                                  std::uint64_t seed_base) {
  const sim::RewardConfig rc = sim::RewardConfig::quad();
  std::vector<diag::DiagnosisSample> samples;
  samples.reserve(static_cast<std::size_t>(rollouts) * class_ids.size());
  for (int r = 0; r < rollouts; ++r) {
    for (std::size_t k = 0; k < class_ids.size(); ++k) {
      sim::Env env_h(spec, damage::class_from_id(0, spec.n_legs, 2), rc);
      sim::Env env_d(spec, damage::class_from_id(class_ids[k], spec.n_legs, 2), rc);
      diag::DiagnosisSample s =
          diag::paired_rollout(env_h, env_d, expert, timesteps,
                               seed_base + static_cast<std::uint64_t>(r), method);
      s.label = static_cast<int>(k);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

// ---- criteria ------------------------------------------------------------

void c1_class_counts(Criterion& c) {
  c.require(damage::count_classes(4, 2) == 33, "count_classes(4,2) != 33");
  c.require(damage::count_classes(6, 2) == 73, "count_classes(6,2) != 73");
  for (int n = 1; n <= 8; ++n) {
    for (int k = 0; k <= 3; ++k) {
      long enumerated = 1 + static_cast<long>(n) * k;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) enumerated += static_cast<long>(k) * k;
      c.require(damage::count_classes(n, k) == enumerated,
                "enumeration mismatch at n=" + std::to_string(n) + " k=" + std::to_string(k));
    }
  }
}

void c2_encoding_bijectivity(Criterion& c) {
  for (const int n : {4, 6}) {
    const long total = damage::count_classes(n, 2);
    std::set<std::string> seen;
    for (int id = 0; id < total; ++id) {
      const damage::DamageClass cls = damage::class_from_id(id, n, 2);
      const Vector enc = damage::encode(cls, n);
      for (int limb = 0; limb < n; ++limb)
        c.require(enc(2 * limb) + enc(2 * limb + 1) <= 1.0, "limb tuple [1,1] produced");
      const damage::DamageClass back = damage::decode(enc, n);
      c.require(back.class_id == id, "decode(encode) != identity at id " + std::to_string(id));
      std::string key;
      for (Eigen::Index i = 0; i < enc.size(); ++i) key += enc(i) > 0.5 ? '1' : '0';
      seen.insert(key);
    }
    c.require(static_cast<long>(seen.size()) == total, "encode is not injective");
  }
}

void c3_gae_oracle(Criterion& c) {
  const ppo::GaeConfig cfg;  // gamma 0.995, lambda 0.98
  Rng rng(303);
  Real worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + rng.uniform_int(20);
    Vector rewards(n), values(n);
    std::vector<std::uint8_t> dones(static_cast<std::size_t>(n), 0);
    for (int t = 0; t < n; ++t) {
      rewards(t) = rng.normal();
      values(t) = rng.normal();
      dones[static_cast<std::size_t>(t)] = rng.uniform() < 0.2 ? 1 : 0;
    }
    const Real bootstrap = rng.normal();
    Vector adv, ret;
    ppo::compute_gae(rewards, values, dones, bootstrap, cfg, adv, ret);
    // direct double-sum oracle
    for (int t = 0; t < n; ++t) {
      Real expect = 0, weight = 1.0;
      for (int l = t; l < n; ++l) {
        const Real not_done = dones[static_cast<std::size_t>(l)] ? 0.0 : 1.0;
        const Real next_value = (l == n - 1) ? bootstrap : values(l + 1);
        expect += weight * (rewards(l) + cfg.gamma * next_value * not_done - values(l));
        if (dones[static_cast<std::size_t>(l)]) break;
        weight *= cfg.gamma * cfg.lambda;
      }
      worst = std::max(worst, std::abs(adv(t) - expect));
    }
  }
  c.require(worst < 1e-10, "recursive GAE deviates from the double-sum oracle by " + fmt(worst));
}

void c4_ppo_identities(Criterion& c) {
  Rng rng(404);
  ppo::GaussianPolicy policy(6, {8}, 3, rng);
  const ppo::GaussianPolicy old_policy = policy;
  for (int trial = 0; trial < 100; ++trial) {
    Vector obs(6), action(3);
    for (int i = 0; i < 6; ++i) obs(i) = rng.normal();
    for (int i = 0; i < 3; ++i) action(i) = rng.normal();
    c.require(ppo::policy_ratio(policy, old_policy, obs, action) == 1.0,
              "ratio != 1 at theta == theta_old");
    const Vector mu = policy.mean(obs);
    c.require(ppo::gaussian_kl(mu, policy.log_std, mu, policy.log_std) == 0.0,
              "closed-form KL != 0 at identical Gaussians");
    const Real adv = rng.normal();
    c.require(ppo::clipped_surrogate(1.0, adv, 0.2) == adv,
              "clipped surrogate != unclipped at ratio 1");
  }
  c.require(ppo::clipped_surrogate(1.5, 1.0, 0.2) == 1.2, "surrogate case r=1.5, A=1 != 1.2");
  c.require(ppo::clipped_surrogate(0.5, -1.0, 0.2) == -0.8, "surrogate case r=0.5, A=-1 != -0.8");
}

void c5_gradient_checks(Criterion& c) {
  // dense stack
  {
    Rng rng(505);
    nn::Mlp net(4, {5}, 3, nn::Activation::kTanh, nn::Activation::kTanh, rng);
    Vector x(4), target(3);
    for (int i = 0; i < 4; ++i) x(i) = rng.normal();
    for (int i = 0; i < 3; ++i) target(i) = rng.normal();
    auto loss = [&](const Vector& p) {
      nn::Mlp probe = net;
      probe.set_parameters(p);
      return 0.5 * (probe.infer(x) - target).squaredNorm();
    };
    net.zero_gradients();
    const Matrix out = net.forward(Matrix(x));
    net.backward(Matrix(out.col(0) - target));
    const Real err = nn::finite_diff_max_rel_error(loss, net.parameters(), net.gradients(), 1e-5);
    c.require(err < 1e-4, "dense-layer gradient error " + fmt(err));
  }
  // recurrent cell
  {
    Rng rng(506);
    nn::LstmCell cell(3, 4, rng);
    std::vector<Matrix> sequence;
    for (int t = 0; t < 4; ++t) {
      Matrix x(3, 1);
      for (int i = 0; i < 3; ++i) x(i, 0) = rng.normal();
      sequence.push_back(x);
    }
    Vector target(4);
    for (int i = 0; i < 4; ++i) target(i) = rng.normal();
    auto loss = [&](const Vector& p) {
      nn::LstmCell probe = cell;
      probe.set_parameters(p);
      return 0.5 * (probe.infer(sequence).col(0) - target).squaredNorm();
    };
    cell.zero_gradients();
    const Matrix h = cell.forward(sequence);
    cell.backward(Matrix(h.col(0) - target));
    const Real err =
        nn::finite_diff_max_rel_error(loss, cell.parameters(), cell.gradients(), 1e-5);
    c.require(err < 1e-4, "recurrent-cell gradient error " + fmt(err));
  }
  // policy loss
  {
    Rng rng(507);
    ppo::GaussianPolicy policy(2, {3}, 2, rng);
    ppo::GaussianPolicy old_policy(2, {3}, 2, rng);
    const int n = 5;
    Matrix obs(2, n), actions(2, n);
    Vector advantages(n);
    for (int i = 0; i < n; ++i) {
      obs(0, i) = rng.normal();
      obs(1, i) = rng.normal();
      actions(0, i) = rng.normal();
      actions(1, i) = rng.normal();
      advantages(i) = rng.normal();
    }
    const Vector old_log_probs = old_policy.log_prob(obs, actions);
    policy.zero_gradients();
    ppo::policy_loss(policy, old_policy, obs, actions, old_log_probs, advantages, 0.8, 0.2,
                     nullptr, true);
    auto loss = [&](const Vector& p) {
      ppo::GaussianPolicy probe = policy;
      probe.set_parameters(p);
      return ppo::policy_loss(probe, old_policy, obs, actions, old_log_probs, advantages, 0.8,
                              0.2, nullptr, false);
    };
    const Real err =
        nn::finite_diff_max_rel_error(loss, policy.parameters(), policy.gradients(), 1e-5);
    c.require(err < 1e-4, "policy-loss gradient error " + fmt(err));
  }
  // value loss
  {
    Rng rng(508);
    ppo::ValueNet value(3, {4}, rng);
    const int n = 6;
    Matrix obs(3, n);
    Vector returns(n);
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < 3; ++r) obs(r, i) = rng.normal();
      returns(i) = rng.normal();
    }
    value.net.zero_gradients();
    ppo::value_loss(value, obs, returns, true);
    auto loss = [&](const Vector& p) {
      ppo::ValueNet probe = value;
      probe.net.set_parameters(p);
      return ppo::value_loss(probe, obs, returns, false);
    };
    const Real err =
        nn::finite_diff_max_rel_error(loss, value.net.parameters(), value.net.gradients(), 1e-5);
    c.require(err < 1e-4, "value-loss gradient error " + fmt(err));
  }
}

void c6_paired_rollout_zero(Criterion& c) {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  Rng rng(606);
  const ppo::GaussianPolicy expert(spec.observation_dim(), {32}, spec.joint_count(), rng);
  diag::CollectionConfig cfg;
  cfg.n_rollouts = 3;
  cfg.n_timesteps = 20;
  cfg.seed_base = 6001;
  cfg.method = diag::Method::kHealthyMinusDamaged;

  const auto samples = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);
  c.require(samples.size() == 3u * 33u, "sample count != n_rollouts * D");
  for (int r = 0; r < 3; ++r) {
    const auto& healthy = samples[static_cast<std::size_t>(r) * 33];
    c.require((healthy.series.array() == 0.0).all(),
              "method-B healthy sample is not a zero matrix");
    c.require(healthy.label == 0, "healthy label mismatch");
  }
  const auto again = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    c.require(samples[i].label == again[i].label, "labels differ across identical runs");
    c.require((samples[i].series - again[i].series).cwiseAbs().maxCoeff() == 0.0,
              "datasets differ across identical seeds");
  }
}

void c7_diagnosis_accuracy(Criterion& c) {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const ppo::GaussianPolicy expert = train_expert(40, 700);
  diag::ClassifierConfig cls_cfg;  // spec defaults: 512/32/256-128-64, dropout 0.3

  // 3-class subset: healthy, jam limb 0, missing toe limb 0 (ids 0, 1, 2)
  for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto samples = collect_subset(spec, expert, {0, 1, 2}, 200, 30,
                                        diag::Method::kHealthyMinusDamaged, 7000 + seed * 1000);
    diag::TrainReport report;
    diag::train_classifier(samples, 3, cls_cfg, seed, &report);
    c.require(report.validation_accuracy >= 0.90,
              "3-class accuracy " + fmt(report.validation_accuracy) + " < 0.90 at seed " +
                  std::to_string(seed));
  }

  // full 33-class problem
  diag::CollectionConfig collect_cfg;
  collect_cfg.n_rollouts = 500;
  collect_cfg.n_timesteps = 50;
  collect_cfg.seed_base = 71000;
  collect_cfg.method = diag::Method::kHealthyMinusDamaged;
  const auto samples =
      diag::collect_samples(collect_cfg, spec, sim::RewardConfig::quad(), expert);
  diag::TrainReport report;
  diag::train_classifier(samples, 33, cls_cfg, 17, &report);
  c.require(report.validation_accuracy >= 0.60,
            "33-class accuracy " + fmt(report.validation_accuracy) + " < 0.60");
}

void c8_method_b_dominates(Criterion& c) {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const ppo::GaussianPolicy expert = train_expert(40, 800);
  diag::ClassifierConfig cls_cfg;

  // 100 rollouts per class at T = 30, three seeds per method
  auto mean_accuracy = [&](diag::Method method) {
    Real total = 0;
    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
      diag::CollectionConfig collect_cfg;
      collect_cfg.n_rollouts = 100;
      collect_cfg.n_timesteps = 30;
      collect_cfg.seed_base = 80000 + seed * 1000;
      collect_cfg.method = method;
      const auto samples =
          diag::collect_samples(collect_cfg, spec, sim::RewardConfig::quad(), expert);
      diag::TrainReport report;
      diag::train_classifier(samples, 33, cls_cfg, seed, &report);
      total += report.validation_accuracy;
    }
    return total / 3.0;
  };

  const Real acc_b = mean_accuracy(diag::Method::kHealthyMinusDamaged);
  const Real acc_a = mean_accuracy(diag::Method::kDamagedOnly);
  c.require(acc_b >= acc_a, "method B mean accuracy " + fmt(acc_b) +
                                " < method A mean accuracy " + fmt(acc_a));
  c.detail = "B=" + fmt(acc_b) + " A=" + fmt(acc_a);
}

void c9_damage_awareness_gain(Criterion& c) {
  harness::ExperimentConfig cfg = harness::default_config("quad");
  cfg.seeds = {1, 2, 3};
  cfg.eval_episodes_per_class = 10;

  std::vector<ppo::GaussianPolicy> aware, unaware;
  for (const std::uint64_t seed : cfg.seeds) {
    ppo::TrainResult a, u;
    std::thread aware_job(
        [&] { a = ppo::train(cfg.ppo, cfg.spec, cfg.reward, cfg.curriculum, seed, true); });
    u = ppo::train(cfg.ppo, cfg.spec, cfg.reward, cfg.curriculum, seed, false);
    aware_job.join();
    c.require(!a.aborted && !u.aborted, "training diverged");
    std::cout << "  c9 seed " << seed << ": trained dappo fwd "
              << a.metrics.back().mean_forward_reward << ", unaware fwd "
              << u.metrics.back().mean_forward_reward << "\n";
    aware.push_back(std::move(a.policy));
    unaware.push_back(std::move(u.policy));
  }
  const harness::EvaluationReport report = harness::evaluate_policies(cfg, aware, unaware);
  c.require(report.improvement_percent >= 10.0,
            "improvement " + fmt(report.improvement_percent) + "% < 10%");
  c.require(report.win_rate >= 0.55, "win rate " + fmt(report.win_rate) + " < 0.55");
  if (c.ok)
    c.detail = "improvement " + fmt(report.improvement_percent) + "%, win rate " +
               fmt(report.win_rate);
  std::cout << "  c9 detail: dappo " << report.dappo_overall << " unaware "
            << report.unaware_overall << " improvement " << report.improvement_percent
            << "% win rate " << report.win_rate << "\n";
}

void c10_single_trial_control(Criterion& c) {
  harness::ExperimentConfig cfg = harness::default_config("quad");
  cfg.seeds = {1};
  cfg.deploy.episodes = 100;
  cfg.deploy.damage_event_episode = 30;
  cfg.deploy.injected_class = 9;  // jammed joints on limbs 0 and 1
  cfg.deploy.probe_timesteps = 30;
  cfg.deploy.baseline_episodes = 10;

  // a short damage-aware training run gives a positive healthy baseline
  ppo::TrainResult trained = ppo::train(cfg.ppo, cfg.spec, cfg.reward,
                                        {{ppo::CurriculumStage::kI, 30},
                                         {ppo::CurriculumStage::kIV, 20}},
                                        11, true);
  c.require(!trained.aborted, "training diverged");
  Rng expert_rng(1010);
  const ppo::GaussianPolicy expert(cfg.spec.observation_dim(), cfg.ppo.hidden_sizes,
                                   cfg.spec.joint_count(), expert_rng);

  control::Diagnoser oracle = [&cfg](const Matrix&, Vector* posterior) {
    if (posterior) {
      *posterior = Vector::Zero(33);
      (*posterior)(cfg.deploy.injected_class) = 1.0;
    }
    return cfg.deploy.injected_class;
  };

  const harness::DeployResult result = harness::deploy_run(cfg, trained.policy, expert, oracle);
  c.require(result.healthy_baseline > 0, "healthy baseline not positive: " +
                                             fmt(result.healthy_baseline));
  c.require(result.probes_executed == 1,
            "expected exactly 1 probe, got " + std::to_string(result.probes_executed));

  int probe_episode = -1;
  int triggers = 0;
  for (const auto& event : result.events) {
    if (event.probe_executed && probe_episode < 0) probe_episode = event.episode;
    if (event.triggered) ++triggers;
  }
  c.require(triggers == 1, "expected exactly 1 trigger, got " + std::to_string(triggers));
  c.require(probe_episode == cfg.deploy.damage_event_episode + 1,
            "probe did not run at the episode after the collapse");

  const std::vector<Real> oracle_rewards = harness::oracle_labelled_rewards(cfg, trained.policy);
  for (int e = probe_episode; e < cfg.deploy.episodes; ++e) {
    const Real deployed = result.events[static_cast<std::size_t>(e)].reward;
    const Real labelled = oracle_rewards[static_cast<std::size_t>(e)];
    c.require(deployed == labelled, "post-diagnosis reward differs at episode " +
                                        std::to_string(e) + ": " + fmt(deployed) + " vs " +
                                        fmt(labelled));
  }
}

void c11_curriculum_frequencies(Criterion& c) {
  const int n = 4, k = 2, draws = 10000;
  const int total = static_cast<int>(damage::count_classes(n, k));
  const int singles = n * k;
  for (const auto stage : {ppo::CurriculumStage::kI, ppo::CurriculumStage::kII,
                           ppo::CurriculumStage::kIII, ppo::CurriculumStage::kIV}) {
    Rng rng(1120 + static_cast<std::uint64_t>(stage));
    std::vector<int> counts(static_cast<std::size_t>(total), 0);
    for (int i = 0; i < draws; ++i)
      counts[static_cast<std::size_t>(ppo::sample_damage_class(stage, n, k, rng))]++;
    const ppo::CurriculumMix mix = ppo::stage_mix(stage, n, k);
    for (int d = 0; d < total; ++d) {
      Real p = 0;
      if (d == 0)
        p = mix.healthy;
      else if (d <= singles)
        p = mix.single_damage / singles;
      else
        p = mix.multi_damage / (total - 1 - singles);
      const Real expected = draws * p;
      const Real sigma = std::sqrt(draws * p * (1.0 - p));
      const Real deviation = std::abs(counts[static_cast<std::size_t>(d)] - expected);
      c.require(deviation <= 3.0 * sigma + 1e-9,
                "stage " + ppo::stage_name(stage) + " class " + std::to_string(d) +
                    " deviates " + fmt(deviation) + " > 3 sigma (" + fmt(3.0 * sigma) + ")");
    }
  }
}

void c12_subcommand_determinism(Criterion& c) {
  harness::ExperimentConfig base = harness::default_config("quad");
  base.seeds = {5};
  base.spec.max_steps = 120;
  base.expert_iterations = 2;
  base.ppo.batch_timesteps = 256;
  base.ppo.minibatch_size = 128;
  base.ppo.epochs_per_batch = 2;
  base.ppo.hidden_sizes = {16};
  base.curriculum = {{ppo::CurriculumStage::kI, 1}, {ppo::CurriculumStage::kIV, 1}};
  base.collection.n_rollouts = 2;
  base.collection.n_timesteps = 6;
  base.classifier.projection_dim = 16;
  base.classifier.lstm_hidden = 6;
  base.classifier.dense_sizes = {12};
  base.classifier.max_epochs = 3;
  base.grid.timesteps = {4};
  base.grid.rollouts = {2};
  base.eval_episodes_per_class = 1;
  base.eval_probes_per_class = 1;
  base.deploy.episodes = 5;
  base.deploy.damage_event_episode = 2;
  base.deploy.baseline_episodes = 2;
  base.deploy.oracle_classifier = true;

  const std::vector<std::string> commands = {"train-expert",  "collect",  "train-diagnose",
                                             "train-dappo",   "train-unaware", "evaluate",
                                             "deploy-demo"};
  const fs::path root = fs::temp_directory_path() / "dappo_acceptance_c12";
  fs::remove_all(root);
  std::vector<fs::path> dirs = {root / "run_a", root / "run_b"};
  for (const auto& dir : dirs) {
    harness::ExperimentConfig cfg = base;
    cfg.out_dir = dir.string();
    for (const auto& command : commands)
      c.require(harness::run_command(command, cfg) == 0, "subcommand failed: " + command);
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dirs[0])) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  c.require(!files.empty(), "no outputs produced");
  for (const auto& file : files) {
    const fs::path other = dirs[1] / file.filename();
    c.require(fs::exists(other), "missing on rerun: " + file.filename().string());
    if (!fs::exists(other)) continue;
    const std::string a = io::read_text_file(file);
    const std::string b = io::read_text_file(other);
    c.require(a == b, "outputs differ: " + file.filename().string());
  }
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  int failures = 0;
  const auto want = [&](int n) { return which == "all" || which == std::to_string(n); };

  if (want(1))
    failures += run(1, "damage-class counts match enumeration", c1_class_counts);
  if (want(2))
    failures += run(2, "encoding bijectivity over all quad and hex classes",
                    c2_encoding_bijectivity);
  if (want(3))
    failures += run(3, "recursive GAE equals the double-sum oracle (1e-10)", c3_gae_oracle);
  if (want(4)) failures += run(4, "PPO ratio/KL/surrogate identities", c4_ppo_identities);
  if (want(5))
    failures += run(5, "analytic gradients match central differences (1e-4)",
                    c5_gradient_checks);
  if (want(6))
    failures += run(6, "paired rollouts: zero property, counts, determinism",
                    c6_paired_rollout_zero);
  if (want(7))
    failures += run(7, "diagnosis accuracy: 3-class >= 0.90 x3 seeds, 33-class >= 0.60",
                    c7_diagnosis_accuracy);
  if (want(8))
    failures += run(8, "method B >= method A at T=30 over 3 seeds", c8_method_b_dominates);
  if (want(9))
    failures += run(9, "DA-PPO beats PPO-Unaware by >= 10% with >= 55% class wins",
                    c9_damage_awareness_gain);
  if (want(10))
    failures += run(10, "single-trial probe and oracle bit-identity in deploy",
                    c10_single_trial_control);
  if (want(11))
    failures += run(11, "curriculum stage mixes within 3 sigma over 10k resets",
                    c11_curriculum_frequencies);
  if (want(12))
    failures += run(12, "byte-identical subcommand outputs on rerun",
                    c12_subcommand_determinism);
  return failures;
}
