#include <doctest.h>

#include <filesystem>

#include "dappo/diagnosis.hpp"

using namespace dappo;
using diag::CollectionConfig;
using diag::DiagnosisSample;
using diag::Method;
using ppo::GaussianPolicy;

namespace {

GaussianPolicy random_expert(const sim::RobotSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return GaussianPolicy(spec.observation_dim(), {16}, spec.joint_count(), rng);
}

diag::ClassifierConfig small_classifier() {
  diag::ClassifierConfig cfg;
  cfg.projection_dim = 24;
  cfg.lstm_hidden = 8;
  cfg.dense_sizes = {16, 8};
  cfg.max_epochs = 20;
  return cfg;
}

std::vector<DiagnosisSample> three_class_samples(const sim::RobotSpec& spec,
                                                 const GaussianPolicy& expert, int rollouts,
                                                 int timesteps, Method method,
                                                 std::uint64_t seed_base) {
  // classes: healthy, jam limb 0, missing toe limb 0 (canonical ids 0, 1, 2)
  std::vector<DiagnosisSample> samples;
  const sim::RewardConfig rc = sim::RewardConfig::quad();
  for (int r = 0; r < rollouts; ++r) {
    for (int d = 0; d < 3; ++d) {
      sim::Env env_h(spec, damage::class_from_id(0, 4, 2), rc);
      sim::Env env_d(spec, damage::class_from_id(d, 4, 2), rc);
      DiagnosisSample s = diag::paired_rollout(env_h, env_d, expert, timesteps,
                                               seed_base + static_cast<std::uint64_t>(r), method);
      s.label = d;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace

TEST_CASE("method B healthy samples are exactly zero matrices") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 1);
  sim::Env env_h(spec, damage::class_from_id(0, 4, 2), sim::RewardConfig::quad());
  sim::Env env_d(spec, damage::class_from_id(0, 4, 2), sim::RewardConfig::quad());
  const DiagnosisSample s =
      diag::paired_rollout(env_h, env_d, expert, 20, 7, Method::kHealthyMinusDamaged);
  CHECK(s.series.rows() == 23);
  CHECK(s.series.cols() == 20);
  CHECK((s.series.array() == 0.0).all());
  CHECK_FALSE(s.truncated);
}

TEST_CASE("collect_samples produces n_rollouts x D samples deterministically") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 2);
  CollectionConfig cfg;
  cfg.n_rollouts = 2;
  cfg.n_timesteps = 5;
  cfg.seed_base = 900;
  cfg.method = Method::kHealthyMinusDamaged;
  const auto samples = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);
  CHECK(samples.size() == 2 * 33);
  for (int r = 0; r < 2; ++r)
    for (int d = 0; d < 33; ++d)
      CHECK(samples[static_cast<std::size_t>(r * 33 + d)].label == d);

  const auto again = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);
  for (std::size_t i = 0; i < samples.size(); ++i)
    CHECK((samples[i].series - again[i].series).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("expert dimension mismatch is a configuration error") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  Rng rng(3);
  const GaussianPolicy wrong(spec.observation_dim() + 1, {8}, spec.joint_count(), rng);
  CollectionConfig cfg;
  CHECK_THROWS_AS(diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), wrong),
                  ConfigurationError);
}

TEST_CASE("run_probe shares the collect_samples code path bit for bit") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 4);
  CollectionConfig cfg;
  cfg.n_rollouts = 1;
  cfg.n_timesteps = 12;
  cfg.seed_base = 321;
  cfg.method = Method::kDamagedOnly;
  const auto samples = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);

  const int d = 5;
  sim::Env live(spec, damage::class_from_id(d, 4, 2), sim::RewardConfig::quad());
  const DiagnosisSample probe =
      diag::run_probe(spec, sim::RewardConfig::quad(), live, expert, 12, 321, cfg.method);
  CHECK((probe.series - samples[static_cast<std::size_t>(d)].series).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("a short probe is the prefix of a longer probe") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 5);
  sim::Env live_a(spec, damage::class_from_id(3, 4, 2), sim::RewardConfig::quad());
  sim::Env live_b(spec, damage::class_from_id(3, 4, 2), sim::RewardConfig::quad());
  const DiagnosisSample short_probe =
      diag::run_probe(spec, sim::RewardConfig::quad(), live_a, expert, 10, 55,
                      Method::kHealthyMinusDamaged);
  const DiagnosisSample long_probe =
      diag::run_probe(spec, sim::RewardConfig::quad(), live_b, expert, 50, 55, Method::kHealthyMinusDamaged);
  CHECK((short_probe.series - long_probe.series.leftCols(10)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("early termination zero-pads and flags the sample") {
  sim::RobotSpec spec = sim::RobotSpec::quad();
  spec.max_steps = 6;  // force termination before the probe completes
  const GaussianPolicy expert = random_expert(spec, 6);
  sim::Env live(spec, damage::class_from_id(2, 4, 2), sim::RewardConfig::quad());
  const DiagnosisSample probe = diag::run_probe(spec, sim::RewardConfig::quad(), live, expert,
                                                10, 9, Method::kDamagedOnly);
  CHECK(probe.truncated);
  CHECK(probe.series.cols() == 10);
  CHECK(probe.series.rightCols(4).isZero());
}

TEST_CASE("classifier training separates a 3-class quad subset") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 11);
  const auto samples = three_class_samples(spec, expert, 50, 12,
                                           Method::kHealthyMinusDamaged, 5000);
  diag::TrainReport report;
  const diag::ClassifierModel model =
      diag::train_classifier(samples, 3, small_classifier(), 13, &report);
  CHECK(report.validation_accuracy >= 0.8);
  CHECK(report.train_accuracy + 0.05 >= report.validation_accuracy);

  // memorization spot-check on a training sample
  Vector posterior;
  const int predicted = diag::diagnose(model, samples[4].series, &posterior);
  CHECK(predicted == samples[4].label);
  CHECK(std::abs(posterior.sum() - 1.0) <= 1e-12);

  // method-B healthy samples are zero matrices, so the zero probe lands on 0
  CHECK(diag::diagnose(model, Matrix::Zero(23, 12)) == 0);
}

TEST_CASE("classifier training is deterministic per seed") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 21);
  const auto samples =
      three_class_samples(spec, expert, 12, 8, Method::kHealthyMinusDamaged, 6000);
  diag::TrainReport a, b;
  diag::train_classifier(samples, 3, small_classifier(), 31, &a);
  diag::train_classifier(samples, 3, small_classifier(), 31, &b);
  REQUIRE(a.validation_accuracy == b.validation_accuracy);
  REQUIRE(a.validation_loss_history.size() == b.validation_loss_history.size());
  for (std::size_t i = 0; i < a.validation_loss_history.size(); ++i)
    CHECK(a.validation_loss_history[i] == b.validation_loss_history[i]);
}

TEST_CASE("shuffled labels drop validation accuracy to chance") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 41);
  auto samples = three_class_samples(spec, expert, 60, 8, Method::kHealthyMinusDamaged, 7000);
  Rng rng(42);
  for (int i = static_cast<int>(samples.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(samples[static_cast<std::size_t>(i)].label,
              samples[static_cast<std::size_t>(j)].label);
  }
  diag::TrainReport report;
  diag::train_classifier(samples, 3, small_classifier(), 43, &report);
  CHECK(report.validation_accuracy == doctest::Approx(1.0 / 3.0).epsilon(0.35));
}

TEST_CASE("single-class training degenerates to perfect accuracy") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 51);
  std::vector<DiagnosisSample> samples;
  const sim::RewardConfig rc = sim::RewardConfig::quad();
  for (int r = 0; r < 6; ++r) {
    sim::Env env_h(spec, damage::class_from_id(0, 4, 2), rc);
    sim::Env env_d(spec, damage::class_from_id(0, 4, 2), rc);
    DiagnosisSample s = diag::paired_rollout(env_h, env_d, expert, 6,
                                             9000 + static_cast<std::uint64_t>(r),
                                             Method::kDamagedOnly);
    s.label = 0;
    samples.push_back(std::move(s));
  }
  diag::TrainReport report;
  diag::train_classifier(samples, 1, small_classifier(), 52, &report);
  CHECK(report.validation_accuracy == 1.0);

  samples.resize(1);
  CHECK_THROWS_AS(diag::train_classifier(samples, 1, small_classifier(), 53, nullptr),
                  InvalidInputError);
}

TEST_CASE("longer probes do not cost attainable accuracy on the 3-class subset") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 81);
  auto mean_accuracy = [&](int timesteps) {
    Real total = 0;
    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const auto samples = three_class_samples(spec, expert, 40, timesteps,
                                               Method::kHealthyMinusDamaged, 8000 + seed * 100);
      diag::TrainReport report;
      diag::train_classifier(samples, 3, small_classifier(), seed, &report);
      total += report.validation_accuracy;
    }
    return total / 3.0;
  };
  CHECK(mean_accuracy(50) + 1e-12 >= mean_accuracy(10));
}

TEST_CASE("diagnose validates probe shape and breaks ties low") {
  Rng rng(61);
  diag::ClassifierModel model(5, 4, small_classifier(), rng);
  CHECK_THROWS_AS(model.posterior(Matrix::Zero(6, 4)), InvalidInputError);

  const Matrix probe = Matrix::Zero(5, 4);
  Vector posterior;
  const int cls = diag::diagnose(model, probe, &posterior);
  CHECK(cls >= 0);
  CHECK(std::abs(posterior.sum() - 1.0) <= 1e-12);
}

TEST_CASE("dataset container round trip is bit exact") {
  const sim::RobotSpec spec = sim::RobotSpec::quad();
  const GaussianPolicy expert = random_expert(spec, 71);
  CollectionConfig cfg;
  cfg.n_rollouts = 2;
  cfg.n_timesteps = 4;
  cfg.seed_base = 111;
  cfg.method = Method::kDamagedOnly;
  const auto samples = diag::collect_samples(cfg, spec, sim::RewardConfig::quad(), expert);

  const auto path = std::filesystem::temp_directory_path() / "dappo_test_dataset.bin";
  diag::save_dataset(path, samples, 33, cfg);
  int n_classes = 0;
  CollectionConfig meta;
  const auto loaded = diag::load_dataset(path, &n_classes, &meta);
  CHECK(n_classes == 33);
  CHECK(meta.n_timesteps == 4);
  CHECK(meta.method == Method::kDamagedOnly);
  CHECK(meta.seed_base == 111);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].label == samples[i].label);
    CHECK((loaded[i].series - samples[i].series).cwiseAbs().maxCoeff() == 0.0);
  }
  std::filesystem::remove(path);
}
