#include "dappo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "dappo/damage.hpp"
#include "dappo/io.hpp"
#include "dappo/svg.hpp"

namespace dappo::harness {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig default_config(const std::string& robot) {
  ExperimentConfig cfg;
  cfg.robot = robot;
  if (robot == "quad") {
    cfg.spec = sim::RobotSpec::quad();
    cfg.reward = sim::RewardConfig::quad();
    cfg.ppo.batch_timesteps = 2048;
  } else if (robot == "hex") {
    cfg.spec = sim::RobotSpec::hex();
    cfg.reward = sim::RewardConfig::hex();
    cfg.ppo.batch_timesteps = 4096;
  } else {
    throw InvalidInputError("unknown robot '" + robot + "' (expected quad or hex)");
  }
  cfg.curriculum = ppo::default_curriculum();
  cfg.collection.n_rollouts = 200;
  cfg.collection.n_timesteps = 30;
  cfg.collection.seed_base = 424242;
  return cfg;
}

namespace {

json spec_to_json(const sim::RobotSpec& spec) {
  json segments = json::array();
  for (int leg = 0; leg < spec.n_legs; ++leg) {
    json row = json::array();
    for (int j = 0; j < spec.joints_per_leg; ++j) row.push_back(spec.segment_lengths(leg, j));
    segments.push_back(row);
  }
  return {{"n_legs", spec.n_legs},
          {"joints_per_leg", spec.joints_per_leg},
          {"segment_lengths", segments},
          {"joint_range", spec.joint_range},
          {"neutral_height", spec.neutral_height},
          {"slew_rate", spec.slew_rate},
          {"dt", spec.dt},
          {"velocity_blend", spec.velocity_blend},
          {"fall_height_fraction", spec.fall_height_fraction},
          {"jump_height_fraction", spec.jump_height_fraction},
          {"max_steps", spec.max_steps}};
}

void spec_from_json(const json& j, sim::RobotSpec& spec) {
  if (j.contains("n_legs")) spec.n_legs = j.at("n_legs").get<int>();
  if (j.contains("joints_per_leg")) spec.joints_per_leg = j.at("joints_per_leg").get<int>();
  if (j.contains("segment_lengths")) {
    const auto& rows = j.at("segment_lengths");
    spec.segment_lengths.resize(spec.n_legs, spec.joints_per_leg);
    for (int leg = 0; leg < spec.n_legs; ++leg)
      for (int jj = 0; jj < spec.joints_per_leg; ++jj)
        spec.segment_lengths(leg, jj) =
            rows.at(static_cast<std::size_t>(leg)).at(static_cast<std::size_t>(jj)).get<Real>();
  }
  if (j.contains("joint_range")) spec.joint_range = j.at("joint_range").get<Real>();
  if (j.contains("neutral_height")) spec.neutral_height = j.at("neutral_height").get<Real>();
  if (j.contains("slew_rate")) spec.slew_rate = j.at("slew_rate").get<Real>();
  if (j.contains("dt")) spec.dt = j.at("dt").get<Real>();
  if (j.contains("velocity_blend")) spec.velocity_blend = j.at("velocity_blend").get<Real>();
  if (j.contains("fall_height_fraction"))
    spec.fall_height_fraction = j.at("fall_height_fraction").get<Real>();
  if (j.contains("jump_height_fraction"))
    spec.jump_height_fraction = j.at("jump_height_fraction").get<Real>();
  if (j.contains("max_steps")) spec.max_steps = j.at("max_steps").get<int>();
}

json reward_to_json(const sim::RewardConfig& rc) {
  return {{"w0", rc.w0},
          {"w1", rc.w1},
          {"w2", rc.w2},
          {"survival_value", rc.survival_value},
          {"torque_term", rc.torque_term}};
}

void reward_from_json(const json& j, sim::RewardConfig& rc) {
  if (j.contains("w0")) rc.w0 = j.at("w0").get<Real>();
  if (j.contains("w1")) rc.w1 = j.at("w1").get<Real>();
  if (j.contains("w2")) rc.w2 = j.at("w2").get<Real>();
  if (j.contains("survival_value")) rc.survival_value = j.at("survival_value").get<Real>();
  if (j.contains("torque_term")) rc.torque_term = j.at("torque_term").get<bool>();
}

json ppo_to_json(const ppo::PpoConfig& p) {
  return {{"clip_epsilon", p.clip_epsilon},
          {"kl_target", p.kl_target},
          {"beta_init", p.beta_init},
          {"epochs_per_batch", p.epochs_per_batch},
          {"minibatch_size", p.minibatch_size},
          {"batch_timesteps", p.batch_timesteps},
          {"learning_rate_init", p.learning_rate_init},
          {"learning_rate_min", p.learning_rate_min},
          {"learning_rate_max", p.learning_rate_max},
          {"value_learning_rate", p.value_learning_rate},
          {"hidden_sizes", p.hidden_sizes},
          {"workers", p.workers},
          {"gamma", p.gae.gamma},
          {"lambda", p.gae.lambda}};
}

void ppo_from_json(const json& j, ppo::PpoConfig& p) {
  if (j.contains("clip_epsilon")) p.clip_epsilon = j.at("clip_epsilon").get<Real>();
  if (j.contains("kl_target")) p.kl_target = j.at("kl_target").get<Real>();
  if (j.contains("beta_init")) p.beta_init = j.at("beta_init").get<Real>();
  if (j.contains("epochs_per_batch")) p.epochs_per_batch = j.at("epochs_per_batch").get<int>();
  if (j.contains("minibatch_size")) p.minibatch_size = j.at("minibatch_size").get<int>();
  if (j.contains("batch_timesteps")) p.batch_timesteps = j.at("batch_timesteps").get<int>();
  if (j.contains("learning_rate_init")) p.learning_rate_init = j.at("learning_rate_init").get<Real>();
  if (j.contains("learning_rate_min")) p.learning_rate_min = j.at("learning_rate_min").get<Real>();
  if (j.contains("learning_rate_max")) p.learning_rate_max = j.at("learning_rate_max").get<Real>();
  if (j.contains("value_learning_rate"))
    p.value_learning_rate = j.at("value_learning_rate").get<Real>();
  if (j.contains("hidden_sizes")) p.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  if (j.contains("workers")) p.workers = j.at("workers").get<int>();
  if (j.contains("gamma")) p.gae.gamma = j.at("gamma").get<Real>();
  if (j.contains("lambda")) p.gae.lambda = j.at("lambda").get<Real>();
}

json curriculum_to_json(const std::vector<ppo::StageSchedule>& stages) {
  json out = json::array();
  for (const auto& s : stages)
    out.push_back({{"stage", ppo::stage_name(s.stage)}, {"iterations", s.iterations}});
  return out;
}

std::vector<ppo::StageSchedule> curriculum_from_json(const json& j) {
  std::vector<ppo::StageSchedule> stages;
  for (const auto& item : j)
    stages.push_back({ppo::stage_from_name(item.at("stage").get<std::string>()),
                      item.at("iterations").get<int>()});
  return stages;
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  return {{"robot", cfg.robot},
          {"seeds", cfg.seeds},
          {"spec", spec_to_json(cfg.spec)},
          {"reward", reward_to_json(cfg.reward)},
          {"ppo", ppo_to_json(cfg.ppo)},
          {"curriculum", curriculum_to_json(cfg.curriculum)},
          {"expert_iterations", cfg.expert_iterations},
          {"collection",
           {{"n_rollouts", cfg.collection.n_rollouts},
            {"n_timesteps", cfg.collection.n_timesteps},
            {"seed_base", cfg.collection.seed_base},
            {"method", std::string(1, diag::method_code(cfg.collection.method))}}},
          {"classifier",
           {{"projection_dim", cfg.classifier.projection_dim},
            {"lstm_hidden", cfg.classifier.lstm_hidden},
            {"dense_sizes", cfg.classifier.dense_sizes},
            {"dropout_rate", cfg.classifier.dropout_rate},
            {"learning_rate", cfg.classifier.learning_rate},
            {"minibatch_size", cfg.classifier.minibatch_size},
            {"max_epochs", cfg.classifier.max_epochs},
            {"early_stop_patience", cfg.classifier.early_stop_patience},
            {"train_split", cfg.classifier.train_split}}},
          {"grid",
           {{"enabled", cfg.grid.enabled},
            {"timesteps", cfg.grid.timesteps},
            {"rollouts", cfg.grid.rollouts}}},
          {"trigger_fraction", cfg.trigger_fraction},
          {"eval_episodes_per_class", cfg.eval_episodes_per_class},
          {"eval_probes_per_class", cfg.eval_probes_per_class},
          {"eval_seed", cfg.eval_seed},
          {"deploy",
           {{"episodes", cfg.deploy.episodes},
            {"damage_event_episode", cfg.deploy.damage_event_episode},
            {"injected_class", cfg.deploy.injected_class},
            {"probe_timesteps", cfg.deploy.probe_timesteps},
            {"baseline_episodes", cfg.deploy.baseline_episodes},
            {"oracle_classifier", cfg.deploy.oracle_classifier}}},
          {"out_dir", cfg.out_dir}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg = default_config(j.contains("robot") ? j.at("robot").get<std::string>()
                                                            : std::string("quad"));
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("spec")) spec_from_json(j.at("spec"), cfg.spec);
  if (j.contains("reward")) reward_from_json(j.at("reward"), cfg.reward);
  if (j.contains("ppo")) ppo_from_json(j.at("ppo"), cfg.ppo);
  if (j.contains("curriculum")) cfg.curriculum = curriculum_from_json(j.at("curriculum"));
  if (j.contains("expert_iterations")) cfg.expert_iterations = j.at("expert_iterations").get<int>();
  if (j.contains("collection")) {
    const auto& c = j.at("collection");
    if (c.contains("n_rollouts")) cfg.collection.n_rollouts = c.at("n_rollouts").get<int>();
    if (c.contains("n_timesteps")) cfg.collection.n_timesteps = c.at("n_timesteps").get<int>();
    if (c.contains("seed_base")) cfg.collection.seed_base = c.at("seed_base").get<std::uint64_t>();
    if (c.contains("method"))
      cfg.collection.method = diag::method_from_code(c.at("method").get<std::string>().at(0));
  }
  if (j.contains("classifier")) {
    const auto& c = j.at("classifier");
    if (c.contains("projection_dim")) cfg.classifier.projection_dim = c.at("projection_dim").get<int>();
    if (c.contains("lstm_hidden")) cfg.classifier.lstm_hidden = c.at("lstm_hidden").get<int>();
    if (c.contains("dense_sizes"))
      cfg.classifier.dense_sizes = c.at("dense_sizes").get<std::vector<int>>();
    if (c.contains("dropout_rate")) cfg.classifier.dropout_rate = c.at("dropout_rate").get<Real>();
    if (c.contains("learning_rate")) cfg.classifier.learning_rate = c.at("learning_rate").get<Real>();
    if (c.contains("minibatch_size")) cfg.classifier.minibatch_size = c.at("minibatch_size").get<int>();
    if (c.contains("max_epochs")) cfg.classifier.max_epochs = c.at("max_epochs").get<int>();
    if (c.contains("early_stop_patience"))
      cfg.classifier.early_stop_patience = c.at("early_stop_patience").get<int>();
    if (c.contains("train_split")) cfg.classifier.train_split = c.at("train_split").get<Real>();
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (g.contains("enabled")) cfg.grid.enabled = g.at("enabled").get<bool>();
    if (g.contains("timesteps")) cfg.grid.timesteps = g.at("timesteps").get<std::vector<int>>();
    if (g.contains("rollouts")) cfg.grid.rollouts = g.at("rollouts").get<std::vector<int>>();
  }
  if (j.contains("trigger_fraction")) cfg.trigger_fraction = j.at("trigger_fraction").get<Real>();
  if (j.contains("eval_episodes_per_class"))
    cfg.eval_episodes_per_class = j.at("eval_episodes_per_class").get<int>();
  if (j.contains("eval_probes_per_class"))
    cfg.eval_probes_per_class = j.at("eval_probes_per_class").get<int>();
  if (j.contains("eval_seed")) cfg.eval_seed = j.at("eval_seed").get<std::uint64_t>();
  if (j.contains("deploy")) {
    const auto& d = j.at("deploy");
    if (d.contains("episodes")) cfg.deploy.episodes = d.at("episodes").get<int>();
    if (d.contains("damage_event_episode"))
      cfg.deploy.damage_event_episode = d.at("damage_event_episode").get<int>();
    if (d.contains("injected_class")) cfg.deploy.injected_class = d.at("injected_class").get<int>();
    if (d.contains("probe_timesteps")) cfg.deploy.probe_timesteps = d.at("probe_timesteps").get<int>();
    if (d.contains("baseline_episodes"))
      cfg.deploy.baseline_episodes = d.at("baseline_episodes").get<int>();
    if (d.contains("oracle_classifier"))
      cfg.deploy.oracle_classifier = d.at("oracle_classifier").get<bool>();
  }
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(json::parse(io::read_text_file(path)));
}

std::string config_hash(const ExperimentConfig& cfg) {
  // the hash identifies the experiment; the output location is not part of it
  json j = to_json(cfg);
  j.erase("out_dir");
  return io::fnv1a64_hex(j.dump());
}

// ---- checkpoint files --------------------------------------------------

void save_policy_checkpoint(const fs::path& path, const ppo::GaussianPolicy& policy,
                            const ppo::ValueNet& value, bool damage_aware, std::uint64_t seed,
                            const std::string& hash, const nn::AdamState* policy_optimizer,
                            const nn::AdamState* value_optimizer) {
  const nn::AdamState fresh_policy = nn::AdamState::make(policy.parameter_count(), 0.0);
  const nn::AdamState fresh_value = nn::AdamState::make(value.net.parameter_count(), 0.0);
  const json doc = {{"format_version", 1},
                    {"kind", "policy_checkpoint"},
                    {"seed", seed},
                    {"config_hash", hash},
                    {"damage_aware", damage_aware},
                    {"policy", ppo::policy_to_json(policy)},
                    {"value", ppo::value_to_json(value)},
                    {"policy_optimizer",
                     nn::to_json(policy_optimizer ? *policy_optimizer : fresh_policy)},
                    {"value_optimizer",
                     nn::to_json(value_optimizer ? *value_optimizer : fresh_value)}};
  io::write_text_file(path, doc.dump(1));
}

ppo::GaussianPolicy load_policy_checkpoint(const fs::path& path, ppo::ValueNet* value,
                                           bool* damage_aware) {
  const json doc = json::parse(io::read_text_file(path));
  if (doc.at("kind").get<std::string>() != "policy_checkpoint")
    throw ConfigurationError("not a policy checkpoint: " + path.string());
  if (value) *value = ppo::value_from_json(doc.at("value"));
  if (damage_aware) *damage_aware = doc.at("damage_aware").get<bool>();
  return ppo::policy_from_json(doc.at("policy"));
}

void save_classifier_checkpoint(const fs::path& path, const diag::ClassifierModel& model,
                                Real validation_accuracy, std::uint64_t seed,
                                const std::string& hash) {
  const json doc = {{"format_version", 1},
                    {"kind", "classifier_checkpoint"},
                    {"seed", seed},
                    {"config_hash", hash},
                    {"validation_accuracy", validation_accuracy},
                    {"classifier", diag::classifier_to_json(model)}};
  io::write_text_file(path, doc.dump(1));
}

diag::ClassifierModel load_classifier_checkpoint(const fs::path& path) {
  const json doc = json::parse(io::read_text_file(path));
  if (doc.at("kind").get<std::string>() != "classifier_checkpoint")
    throw ConfigurationError("not a classifier checkpoint: " + path.string());
  return diag::classifier_from_json(doc.at("classifier"));
}

void write_metrics_csv(const fs::path& path, const std::vector<ppo::IterationMetrics>& metrics,
                       std::uint64_t seed, const std::string& hash) {
  io::CsvBuilder csv;
  csv.comment("config_hash=" + hash + " seed=" + std::to_string(seed));
  csv.row({"iteration", "stage", "mean_episode_reward", "mean_forward_reward", "mean_kl",
           "clip_fraction", "beta", "lr"});
  for (const auto& m : metrics)
    csv.row({std::to_string(m.iteration), ppo::stage_name(m.stage),
             io::format_real(m.mean_episode_reward), io::format_real(m.mean_forward_reward),
             io::format_real(m.mean_kl), io::format_real(m.clip_fraction),
             io::format_real(m.beta), io::format_real(m.learning_rate)});
  io::write_text_file(path, csv.str());
}

void write_trajectory_csv(const fs::path& path, const sim::RobotSpec& spec,
                          const std::vector<Vector>& states_q,
                          const std::vector<Vector>& observations,
                          const std::vector<Vector>& actions, const std::vector<Real>& rewards,
                          const std::vector<bool>& dones, std::uint64_t seed,
                          const std::string& hash) {
  io::CsvBuilder csv;
  csv.comment("config_hash=" + hash + " seed=" + std::to_string(seed));
  std::vector<std::string> header = {"step"};
  for (int j = 0; j < spec.joint_count(); ++j) header.push_back("q" + std::to_string(j));
  for (int o = 0; o < spec.observation_dim(); ++o) header.push_back("obs" + std::to_string(o));
  for (int a = 0; a < spec.joint_count(); ++a) header.push_back("action" + std::to_string(a));
  header.push_back("reward");
  header.push_back("done");
  csv.row(header);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    std::vector<std::string> row = {std::to_string(t)};
    for (Eigen::Index j = 0; j < states_q[t].size(); ++j)
      row.push_back(io::format_real(states_q[t](j)));
    for (Eigen::Index o = 0; o < observations[t].size(); ++o)
      row.push_back(io::format_real(observations[t](o)));
    for (Eigen::Index a = 0; a < actions[t].size(); ++a)
      row.push_back(io::format_real(actions[t](a)));
    row.push_back(io::format_real(rewards[t]));
    row.push_back(dones[t] ? "1" : "0");
    csv.row(row);
  }
  io::write_text_file(path, csv.str());
}

// ---- artifact paths ----------------------------------------------------

std::filesystem::path expert_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / ("expert_" + cfg.robot + "_seed" + std::to_string(seed) + ".json");
}

std::filesystem::path dataset_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) /
         ("dataset_" + cfg.robot + "_T" + std::to_string(cfg.collection.n_timesteps) + "_" +
          std::string(1, diag::method_code(cfg.collection.method)) + "_seed" +
          std::to_string(seed) + ".bin");
}

std::filesystem::path classifier_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) /
         ("classifier_" + cfg.robot + "_seed" + std::to_string(seed) + ".json");
}

std::filesystem::path policy_path(const ExperimentConfig& cfg, const std::string& kind,
                                  std::uint64_t seed) {
  return fs::path(cfg.out_dir) / (kind + "_" + cfg.robot + "_seed" + std::to_string(seed) + ".json");
}

namespace {

std::string seed_list(const ExperimentConfig& cfg) {
  std::string out;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    out += (i ? "," : "") + std::to_string(cfg.seeds[i]);
  return out;
}

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw ConfigurationError("missing artifact " + path.string() + "; run '" + producer +
                             "' first");
}

ppo::GaussianPolicy load_expert(const ExperimentConfig& cfg, std::uint64_t seed) {
  require_artifact(expert_path(cfg, seed), "train-expert");
  return load_policy_checkpoint(expert_path(cfg, seed));
}

/// Runs the PPO stage list for each seed, two training jobs at a time.
void train_policies(const ExperimentConfig& cfg, const std::string& kind, bool damage_aware,
                    const std::vector<ppo::StageSchedule>& curriculum) {
  const std::string hash = config_hash(cfg);
  std::vector<ppo::TrainResult> results(cfg.seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    pool.emplace_back([&, i] {
      results[i] = ppo::train(cfg.ppo, cfg.spec, cfg.reward, curriculum, cfg.seeds[i],
                              damage_aware);
    });
    if (pool.size() == 2 || i + 1 == cfg.seeds.size()) {
      for (auto& t : pool) t.join();
      pool.clear();
    }
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const auto& result = results[i];
    if (result.aborted)
      throw ConfigurationError(kind + " training diverged for seed " +
                               std::to_string(cfg.seeds[i]));
    save_policy_checkpoint(policy_path(cfg, kind, cfg.seeds[i]), result.policy, result.value,
                           damage_aware, cfg.seeds[i], hash, &result.policy_optimizer,
                           &result.value_optimizer);
    write_metrics_csv(fs::path(cfg.out_dir) / (kind + "_" + cfg.robot + "_metrics_seed" +
                                               std::to_string(cfg.seeds[i]) + ".csv"),
                      result.metrics, cfg.seeds[i], hash);
    std::cout << kind << " seed " << cfg.seeds[i] << ": "
              << result.metrics.size() << " iterations, final forward reward "
              << (result.metrics.empty() ? 0.0 : result.metrics.back().mean_forward_reward)
              << "\n";
  }
}

}  // namespace

// ---- evaluation --------------------------------------------------------

EvaluationReport evaluate_policies(const ExperimentConfig& cfg,
                                   const std::vector<ppo::GaussianPolicy>& dappo_policies,
                                   const std::vector<ppo::GaussianPolicy>& unaware_policies) {
  if (dappo_policies.size() != unaware_policies.size() || dappo_policies.empty())
    throw InvalidInputError("evaluate_policies: need matching non-empty policy sets");
  const int n_classes = static_cast<int>(damage::count_classes(cfg.spec.n_legs, 2));
  const int obs_dim = cfg.spec.observation_dim();
  const int enc_dim = 2 * cfg.spec.n_legs;
  for (std::size_t s = 0; s < dappo_policies.size(); ++s) {
    if (dappo_policies[s].obs_dim() != obs_dim + enc_dim)
      throw ConfigurationError("evaluate_policies: damage-aware policy input mismatch");
    if (unaware_policies[s].obs_dim() != obs_dim)
      throw ConfigurationError("evaluate_policies: unaware policy input mismatch");
  }

  EvaluationReport report;
  report.n_classes = n_classes;
  report.dappo_mean_forward.assign(static_cast<std::size_t>(n_classes), 0.0);
  report.unaware_mean_forward.assign(static_cast<std::size_t>(n_classes), 0.0);

  const int episodes = cfg.eval_episodes_per_class;
  const Real denom = static_cast<Real>(episodes) * static_cast<Real>(dappo_policies.size());

  // classes fan out across threads; per-(seed,class,episode) seeds are derived
  std::vector<int> class_ids(static_cast<std::size_t>(n_classes));
  for (int d = 0; d < n_classes; ++d) class_ids[static_cast<std::size_t>(d)] = d;

  auto eval_class = [&](int d) {
    const damage::DamageClass cls = damage::class_from_id(d, cfg.spec.n_legs, 2);
    const Vector enc = damage::encode(cls, cfg.spec.n_legs);
    Real dappo_sum = 0, unaware_sum = 0;
    for (std::size_t s = 0; s < dappo_policies.size(); ++s) {
      for (int e = 0; e < episodes; ++e) {
        const std::uint64_t env_seed = derive_seed(
            derive_seed(derive_seed(cfg.eval_seed, s), static_cast<std::uint64_t>(d)),
            static_cast<std::uint64_t>(e));
        {
          sim::Env env(cfg.spec, cls, cfg.reward);
          env.reset(env_seed);
          Vector input(obs_dim + enc_dim);
          input.tail(enc_dim) = enc;
          while (!env.done()) {
            input.head(obs_dim) = env.observation();
            env.step(dappo_policies[s].mean(input));
          }
          dappo_sum += env.state().cumulative_x;
        }
        {
          sim::Env env(cfg.spec, cls, cfg.reward);
          env.reset(env_seed);
          while (!env.done()) env.step(unaware_policies[s].mean(env.observation()));
          unaware_sum += env.state().cumulative_x;
        }
      }
    }
    report.dappo_mean_forward[static_cast<std::size_t>(d)] = dappo_sum / denom;
    report.unaware_mean_forward[static_cast<std::size_t>(d)] = unaware_sum / denom;
  };

  const int n_threads = 2;
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&, t] {
      for (int d = t; d < n_classes; d += n_threads) eval_class(d);
    });
  for (auto& th : pool) th.join();

  Real wins = 0;
  for (int d = 0; d < n_classes; ++d) {
    const Real a = report.dappo_mean_forward[static_cast<std::size_t>(d)];
    const Real b = report.unaware_mean_forward[static_cast<std::size_t>(d)];
    if (a > b)
      wins += 1.0;
    else if (a == b)
      wins += 0.5;
  }
  report.win_rate = wins / static_cast<Real>(n_classes);
  report.dappo_overall =
      std::accumulate(report.dappo_mean_forward.begin(), report.dappo_mean_forward.end(), 0.0) /
      static_cast<Real>(n_classes);
  report.unaware_overall = std::accumulate(report.unaware_mean_forward.begin(),
                                           report.unaware_mean_forward.end(), 0.0) /
                           static_cast<Real>(n_classes);
  report.improvement_percent = (report.dappo_overall - report.unaware_overall) /
                               std::max(std::abs(report.unaware_overall), 1e-12) * 100.0;
  return report;
}

// ---- deploy demo -------------------------------------------------------

DeployResult deploy_run(const ExperimentConfig& cfg, const ppo::GaussianPolicy& policy,
                        const ppo::GaussianPolicy& expert, const control::Diagnoser& diagnoser) {
  DeployResult result;
  result.healthy_baseline = control::calibrate_baseline(
      policy, cfg.spec, cfg.reward, cfg.deploy.baseline_episodes, derive_seed(cfg.eval_seed, 555));

  control::AgentState agent;
  agent.trigger_fraction = cfg.trigger_fraction;
  agent.healthy_baseline = result.healthy_baseline;

  for (int e = 0; e < cfg.deploy.episodes; ++e) {
    const int true_class = e >= cfg.deploy.damage_event_episode ? cfg.deploy.injected_class : 0;
    sim::Env env(cfg.spec, damage::class_from_id(true_class, cfg.spec.n_legs, 2), cfg.reward);

    DeployEvent event;
    event.episode = e;

    if (agent.diagnosis_pending) {
      const control::ProbeOutcome probe = control::maybe_diagnose(
          agent, diagnoser, expert, cfg.spec, cfg.reward, env, cfg.deploy.probe_timesteps,
          cfg.collection.method, derive_seed(cfg.eval_seed, 100000 + static_cast<std::uint64_t>(e)));
      event.probe_executed = probe.executed;
      event.truncated_probe = probe.truncated;
      if (probe.executed) {
        ++result.probes_executed;
        std::vector<std::pair<int, Real>> ranked;
        for (Eigen::Index i = 0; i < probe.posterior.size(); ++i)
          ranked.emplace_back(static_cast<int>(i), probe.posterior(i));
        std::sort(ranked.begin(), ranked.end(),
                  [](const auto& a, const auto& b) { return a.second > b.second; });
        ranked.resize(std::min<std::size_t>(3, ranked.size()));
        event.posterior_top3 = ranked;
      }
    }

    const control::EpisodeResult episode =
        control::run_episode(agent, policy, env, derive_seed(cfg.eval_seed, static_cast<std::uint64_t>(e)));
    event.reward = episode.reward;
    event.triggered = episode.triggered;
    event.diagnosed_class = agent.diagnosed_class;
    result.events.push_back(std::move(event));
  }
  return result;
}

std::vector<Real> oracle_labelled_rewards(const ExperimentConfig& cfg,
                                          const ppo::GaussianPolicy& policy) {
  std::vector<Real> rewards;
  const int obs_dim = cfg.spec.observation_dim();
  const int enc_dim = 2 * cfg.spec.n_legs;
  for (int e = 0; e < cfg.deploy.episodes; ++e) {
    const int true_class = e >= cfg.deploy.damage_event_episode ? cfg.deploy.injected_class : 0;
    const damage::DamageClass cls = damage::class_from_id(true_class, cfg.spec.n_legs, 2);
    sim::Env env(cfg.spec, cls, cfg.reward);
    env.reset(derive_seed(cfg.eval_seed, static_cast<std::uint64_t>(e)));
    Vector input(obs_dim + enc_dim);
    input.tail(enc_dim) = damage::encode(cls, cfg.spec.n_legs);
    Real total = 0;
    while (!env.done()) {
      input.head(obs_dim) = env.observation();
      total += env.step(policy.mean(input)).info.reward;
    }
    rewards.push_back(total);
  }
  return rewards;
}

// ---- subcommands -------------------------------------------------------

void cmd_train_expert(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  std::vector<ppo::TrainResult> results(cfg.seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    pool.emplace_back([&, i] {
      results[i] = ppo::train(cfg.ppo, cfg.spec, cfg.reward,
                              {{ppo::CurriculumStage::kI, cfg.expert_iterations}}, cfg.seeds[i],
                              /*damage_aware=*/false);
    });
    if (pool.size() == 2 || i + 1 == cfg.seeds.size()) {
      for (auto& t : pool) t.join();
      pool.clear();
    }
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (results[i].aborted)
      throw ConfigurationError("expert training diverged for seed " +
                               std::to_string(cfg.seeds[i]));
    save_policy_checkpoint(expert_path(cfg, cfg.seeds[i]), results[i].policy, results[i].value,
                           false, cfg.seeds[i], hash, &results[i].policy_optimizer,
                           &results[i].value_optimizer);
    write_metrics_csv(fs::path(cfg.out_dir) / ("expert_" + cfg.robot + "_metrics_seed" +
                                               std::to_string(cfg.seeds[i]) + ".csv"),
                      results[i].metrics, cfg.seeds[i], hash);
    std::cout << "expert seed " << cfg.seeds[i] << ": final forward reward "
              << (results[i].metrics.empty() ? 0.0
                                             : results[i].metrics.back().mean_forward_reward)
              << "\n";
  }
}

void cmd_collect(const ExperimentConfig& cfg) {
  const int n_classes = static_cast<int>(damage::count_classes(cfg.spec.n_legs, 2));
  for (const std::uint64_t seed : cfg.seeds) {
    const ppo::GaussianPolicy expert = load_expert(cfg, seed);
    diag::CollectionConfig collection = cfg.collection;
    collection.seed_base = derive_seed(cfg.collection.seed_base, seed);
    const auto samples = diag::collect_samples(collection, cfg.spec, cfg.reward, expert);
    diag::save_dataset(dataset_path(cfg, seed), samples, n_classes, collection);
    std::cout << "collected " << samples.size() << " samples for seed " << seed << "\n";
  }
}

void cmd_train_diagnose(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  const int n_classes = static_cast<int>(damage::count_classes(cfg.spec.n_legs, 2));

  io::CsvBuilder accuracy_csv;
  accuracy_csv.comment("config_hash=" + hash + " seeds=" + seed_list(cfg));
  accuracy_csv.row({"seed", "timesteps", "method", "rollouts", "validation_accuracy",
                    "epochs_run"});

  for (const std::uint64_t seed : cfg.seeds) {
    require_artifact(dataset_path(cfg, seed), "collect");
    int d = 0;
    diag::CollectionConfig meta;
    const auto samples = diag::load_dataset(dataset_path(cfg, seed), &d, &meta);
    if (d != n_classes)
      throw ConfigurationError("dataset class count does not match the configured robot");
    diag::TrainReport report;
    const diag::ClassifierModel model =
        diag::train_classifier(samples, n_classes, cfg.classifier, derive_seed(seed, 77), &report);
    save_classifier_checkpoint(classifier_path(cfg, seed), model, report.validation_accuracy,
                               seed, hash);
    accuracy_csv.row({std::to_string(seed), std::to_string(meta.n_timesteps),
                      std::string(1, diag::method_code(meta.method)),
                      std::to_string(meta.n_rollouts),
                      io::format_real(report.validation_accuracy),
                      std::to_string(report.epochs_run)});
    std::cout << "classifier seed " << seed << ": validation accuracy "
              << report.validation_accuracy << "\n";
  }
  io::write_text_file(fs::path(cfg.out_dir) / ("diagnose_accuracy_" + cfg.robot + ".csv"),
                      accuracy_csv.str());

  if (!cfg.grid.enabled) return;

  // Table-style grid: timesteps x rollouts x method, mean +- std over seeds.
  io::CsvBuilder grid_csv;
  grid_csv.comment("config_hash=" + hash + " seeds=" + seed_list(cfg));
  grid_csv.row({"timesteps", "method", "rollouts", "mean_accuracy", "std_accuracy",
                "per_seed_accuracy"});
  std::vector<ppo::GaussianPolicy> experts;
  for (const std::uint64_t seed : cfg.seeds) experts.push_back(load_expert(cfg, seed));

  for (const int T : cfg.grid.timesteps) {
    for (const char method_char : {'A', 'B'}) {
      for (const int rollouts : cfg.grid.rollouts) {
        std::vector<Real> accs(cfg.seeds.size());
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
          pool.emplace_back([&, i] {
            diag::CollectionConfig collection;
            collection.n_rollouts = rollouts;
            collection.n_timesteps = T;
            collection.method = diag::method_from_code(method_char);
            collection.seed_base = derive_seed(cfg.collection.seed_base, cfg.seeds[i]);
            const auto samples =
                diag::collect_samples(collection, cfg.spec, cfg.reward, experts[i]);
            diag::TrainReport report;
            diag::train_classifier(samples, n_classes, cfg.classifier,
                                   derive_seed(cfg.seeds[i], 78), &report);
            accs[i] = report.validation_accuracy;
          });
          if (pool.size() == 2 || i + 1 == cfg.seeds.size()) {
            for (auto& t : pool) t.join();
            pool.clear();
          }
        }
        Real mean = std::accumulate(accs.begin(), accs.end(), 0.0) /
                    static_cast<Real>(accs.size());
        Real var = 0;
        for (const Real a : accs) var += (a - mean) * (a - mean);
        var /= static_cast<Real>(accs.size());
        std::string per_seed;
        for (std::size_t i = 0; i < accs.size(); ++i)
          per_seed += (i ? ";" : "") + io::format_real(accs[i]);
        grid_csv.row({std::to_string(T), std::string(1, method_char), std::to_string(rollouts),
                      io::format_real(mean), io::format_real(std::sqrt(var)), per_seed});
        std::cout << "grid T=" << T << " method=" << method_char << " rollouts=" << rollouts
                  << ": mean accuracy " << mean << "\n";
      }
    }
  }
  io::write_text_file(fs::path(cfg.out_dir) / ("diagnose_grid_" + cfg.robot + ".csv"),
                      grid_csv.str());
}

void cmd_train_dappo(const ExperimentConfig& cfg) {
  train_policies(cfg, "dappo", /*damage_aware=*/true, cfg.curriculum);
}

void cmd_train_unaware(const ExperimentConfig& cfg) {
  train_policies(cfg, "unaware", /*damage_aware=*/false, cfg.curriculum);
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  const int n_classes = static_cast<int>(damage::count_classes(cfg.spec.n_legs, 2));

  std::vector<ppo::GaussianPolicy> dappo_policies, unaware_policies;
  for (const std::uint64_t seed : cfg.seeds) {
    require_artifact(policy_path(cfg, "dappo", seed), "train-dappo");
    require_artifact(policy_path(cfg, "unaware", seed), "train-unaware");
    dappo_policies.push_back(load_policy_checkpoint(policy_path(cfg, "dappo", seed)));
    unaware_policies.push_back(load_policy_checkpoint(policy_path(cfg, "unaware", seed)));
  }

  const EvaluationReport report = evaluate_policies(cfg, dappo_policies, unaware_policies);

  io::CsvBuilder per_class;
  per_class.comment("config_hash=" + hash + " seeds=" + seed_list(cfg) +
                    " episodes_per_class=" +
                    std::to_string(cfg.eval_episodes_per_class));
  per_class.row({"class_id", "dappo_mean_forward", "unaware_mean_forward", "dappo_wins"});
  for (int d = 0; d < n_classes; ++d) {
    const Real a = report.dappo_mean_forward[static_cast<std::size_t>(d)];
    const Real b = report.unaware_mean_forward[static_cast<std::size_t>(d)];
    per_class.row({std::to_string(d), io::format_real(a), io::format_real(b),
                   a > b ? "1" : (a == b ? "0.5" : "0")});
  }
  io::write_text_file(fs::path(cfg.out_dir) / ("evaluation_per_class_" + cfg.robot + ".csv"),
                      per_class.str());

  // classifier confusion over fresh probes
  require_artifact(classifier_path(cfg, cfg.seeds.front()), "train-diagnose");
  const diag::ClassifierModel classifier =
      load_classifier_checkpoint(classifier_path(cfg, cfg.seeds.front()));
  const ppo::GaussianPolicy expert = load_expert(cfg, cfg.seeds.front());
  std::vector<std::vector<int>> confusion(
      static_cast<std::size_t>(n_classes),
      std::vector<int>(static_cast<std::size_t>(n_classes), 0));
  for (int d = 0; d < n_classes; ++d) {
    for (int p = 0; p < cfg.eval_probes_per_class; ++p) {
      sim::Env live(cfg.spec, damage::class_from_id(d, cfg.spec.n_legs, 2), cfg.reward);
      const diag::DiagnosisSample probe = diag::run_probe(
          cfg.spec, cfg.reward, live, expert, cfg.collection.n_timesteps,
          derive_seed(derive_seed(cfg.eval_seed, 31337), static_cast<std::uint64_t>(d * 1000 + p)),
          cfg.collection.method);
      const int predicted = diag::diagnose(classifier, probe.series);
      confusion[static_cast<std::size_t>(d)][static_cast<std::size_t>(predicted)] += 1;
    }
  }
  io::CsvBuilder confusion_csv;
  confusion_csv.comment("config_hash=" + hash + " seeds=" + seed_list(cfg) +
                        " probes_per_class=" +
                        std::to_string(cfg.eval_probes_per_class));
  {
    std::vector<std::string> header = {"true_class", "accuracy"};
    for (int d = 0; d < n_classes; ++d) header.push_back("pred" + std::to_string(d));
    confusion_csv.row(header);
    for (int d = 0; d < n_classes; ++d) {
      std::vector<std::string> row = {std::to_string(d)};
      const auto& counts = confusion[static_cast<std::size_t>(d)];
      row.push_back(io::format_real(static_cast<Real>(counts[static_cast<std::size_t>(d)]) /
                                    static_cast<Real>(cfg.eval_probes_per_class)));
      for (int p = 0; p < n_classes; ++p)
        row.push_back(std::to_string(counts[static_cast<std::size_t>(p)]));
      confusion_csv.row(row);
    }
  }
  io::write_text_file(fs::path(cfg.out_dir) / ("confusion_" + cfg.robot + ".csv"),
                      confusion_csv.str());

  json summary = {{"config_hash", hash},
                  {"robot", cfg.robot},
                  {"n_classes", n_classes},
                  {"episodes_per_class", cfg.eval_episodes_per_class},
                  {"seeds", cfg.seeds},
                  {"dappo_mean_forward_reward", report.dappo_overall},
                  {"unaware_mean_forward_reward", report.unaware_overall},
                  {"improvement_percent", report.improvement_percent},
                  {"win_rate", report.win_rate}};
  io::write_text_file(fs::path(cfg.out_dir) / ("evaluation_summary_" + cfg.robot + ".json"),
                      summary.dump(1));

  // per-class grouped bars
  std::vector<std::string> labels(static_cast<std::size_t>(n_classes));
  const int stride = n_classes > 40 ? 8 : 4;
  for (int d = 0; d < n_classes; d += stride)
    labels[static_cast<std::size_t>(d)] = std::to_string(d);
  const std::string chart = svg::grouped_bar_chart(
      "Per-class mean forward reward (" + cfg.robot + ")", labels,
      {{"DA-PPO", "#1f77b4", report.dappo_mean_forward},
       {"PPO-Unaware", "#ff7f0e", report.unaware_mean_forward}},
      "config_hash=" + hash + " seeds=" + seed_list(cfg));
  io::write_text_file(fs::path(cfg.out_dir) / ("per_class_forward_reward_" + cfg.robot + ".svg"),
                      chart);

  // training curves from the metrics CSVs
  std::vector<svg::LineSeries> curves;
  const std::vector<std::pair<std::string, std::string>> kinds = {
      {"dappo", "#1f77b4"}, {"unaware", "#ff7f0e"}};
  for (const auto& [kind, color] : kinds) {
    svg::LineSeries series;
    series.label = kind;
    series.color = color;
    std::vector<Real> sums;
    for (const std::uint64_t seed : cfg.seeds) {
      const fs::path path = fs::path(cfg.out_dir) / (kind + "_" + cfg.robot + "_metrics_seed" +
                                                     std::to_string(seed) + ".csv");
      if (!fs::exists(path)) continue;
      const std::string text = io::read_text_file(path);
      std::size_t line_start = 0;
      int row_index = 0;
      std::vector<Real> values;
      while (line_start < text.size()) {
        std::size_t line_end = text.find('\n', line_start);
        if (line_end == std::string::npos) line_end = text.size();
        const std::string line = text.substr(line_start, line_end - line_start);
        line_start = line_end + 1;
        if (line.empty() || line[0] == '#' || line.rfind("iteration", 0) == 0) continue;
        std::vector<std::string> cells;
        std::size_t cell_start = 0;
        while (cell_start <= line.size()) {
          std::size_t comma = line.find(',', cell_start);
          if (comma == std::string::npos) comma = line.size();
          cells.push_back(line.substr(cell_start, comma - cell_start));
          cell_start = comma + 1;
        }
        if (cells.size() >= 4) values.push_back(io::parse_real(cells[3]));
        ++row_index;
      }
      if (sums.empty()) sums.assign(values.size(), 0.0);
      for (std::size_t i = 0; i < values.size() && i < sums.size(); ++i) sums[i] += values[i];
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
      series.x.push_back(static_cast<Real>(i));
      series.y.push_back(sums[i] / static_cast<Real>(cfg.seeds.size()));
    }
    if (!series.x.empty()) curves.push_back(std::move(series));
  }
  if (!curves.empty()) {
    io::write_text_file(
        fs::path(cfg.out_dir) / ("training_curves_" + cfg.robot + ".svg"),
        svg::line_chart("Mean forward reward per iteration (" + cfg.robot + ")", "iteration",
                        "mean forward reward", curves,
                        "config_hash=" + hash + " seeds=" + seed_list(cfg)));
  }

  std::cout << "evaluate: DA-PPO " << report.dappo_overall << " vs PPO-Unaware "
            << report.unaware_overall << " (" << report.improvement_percent
            << "% improvement, win rate " << report.win_rate << ")\n";
}

void cmd_deploy_demo(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  require_artifact(policy_path(cfg, "dappo", seed), "train-dappo");
  const ppo::GaussianPolicy policy = load_policy_checkpoint(policy_path(cfg, "dappo", seed));
  const ppo::GaussianPolicy expert = load_expert(cfg, seed);

  control::Diagnoser diagnoser;
  diag::ClassifierModel classifier;
  if (cfg.deploy.oracle_classifier) {
    const int injected = cfg.deploy.injected_class;
    diagnoser = [injected](const Matrix&, Vector* posterior) {
      if (posterior) {
        *posterior = Vector::Zero(injected + 1);
        (*posterior)(injected) = 1.0;
      }
      return injected;
    };
  } else {
    require_artifact(classifier_path(cfg, seed), "train-diagnose");
    classifier = load_classifier_checkpoint(classifier_path(cfg, seed));
    diagnoser = control::classifier_diagnoser(classifier);
  }

  const DeployResult result = deploy_run(cfg, policy, expert, diagnoser);

  std::string lines;
  lines += json({{"config_hash", hash},
                 {"seed", seed},
                 {"healthy_baseline", result.healthy_baseline},
                 {"probes_executed", result.probes_executed},
                 {"injected_class",
                  damage::to_json(damage::class_from_id(cfg.deploy.injected_class,
                                                        cfg.spec.n_legs, 2))}})
               .dump() +
           "\n";
  for (const auto& event : result.events) {
    json top3 = json::array();
    for (const auto& [cls, p] : event.posterior_top3)
      top3.push_back({{"class", cls}, {"p", p}});
    lines += json({{"episode", event.episode},
                   {"reward", event.reward},
                   {"triggered", event.triggered},
                   {"diagnosed_class", event.diagnosed_class},
                   {"posterior_top3", top3},
                   {"truncated_probe", event.truncated_probe}})
                 .dump() +
             "\n";
  }
  io::write_text_file(fs::path(cfg.out_dir) / ("deploy_events_" + cfg.robot + ".jsonl"), lines);

  // trajectory dump of the first post-diagnosis episode
  int dump_episode = cfg.deploy.episodes - 1;
  for (const auto& event : result.events)
    if (event.probe_executed) {
      dump_episode = std::min(event.episode, dump_episode);
      break;
    }
  {
    const int true_class =
        dump_episode >= cfg.deploy.damage_event_episode ? cfg.deploy.injected_class : 0;
    const damage::DamageClass cls = damage::class_from_id(true_class, cfg.spec.n_legs, 2);
    sim::Env env(cfg.spec, cls, cfg.reward);
    env.reset(derive_seed(cfg.eval_seed, static_cast<std::uint64_t>(dump_episode)));
    const int obs_dim = cfg.spec.observation_dim();
    const int enc_dim = 2 * cfg.spec.n_legs;
    Vector input(obs_dim + enc_dim);
    int mu = 0;
    for (const auto& event : result.events)
      if (event.episode == dump_episode) mu = event.diagnosed_class;
    input.tail(enc_dim) =
        damage::encode(damage::class_from_id(mu, cfg.spec.n_legs, 2), cfg.spec.n_legs);
    std::vector<Vector> qs, observations, actions;
    std::vector<Real> rewards;
    std::vector<bool> dones;
    while (!env.done()) {
      input.head(obs_dim) = env.observation();
      observations.push_back(env.observation());
      qs.push_back(env.state().q);
      const Vector action = policy.mean(input);
      actions.push_back(action);
      const sim::StepResult step = env.step(action);
      rewards.push_back(step.info.reward);
      dones.push_back(env.done());
    }
    write_trajectory_csv(
        fs::path(cfg.out_dir) / ("deploy_trajectory_" + cfg.robot + ".csv"), cfg.spec, qs,
        observations, actions, rewards, dones, seed, hash);
  }

  std::cout << "deploy-demo: baseline " << result.healthy_baseline << ", probes executed "
            << result.probes_executed << "\n";
}

int run_command(const std::string& command, const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  if (command == "train-expert")
    cmd_train_expert(cfg);
  else if (command == "collect")
    cmd_collect(cfg);
  else if (command == "train-diagnose")
    cmd_train_diagnose(cfg);
  else if (command == "train-dappo")
    cmd_train_dappo(cfg);
  else if (command == "train-unaware")
    cmd_train_unaware(cfg);
  else if (command == "evaluate")
    cmd_evaluate(cfg);
  else if (command == "deploy-demo")
    cmd_deploy_demo(cfg);
  else {
    std::cerr << "unknown subcommand '" << command << "'\n";
    return 2;
  }
  return 0;
}

}  // namespace dappo::harness
