#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dappo/policy.hpp"
#include "dappo/sim.hpp"
#include "dappo/types.hpp"

namespace dappo::diag {

/// Classifier input variants: A feeds the damaged run's observations, B the
/// healthy-minus-damaged observation differences.
enum class Method { kDamagedOnly, kHealthyMinusDamaged };

char method_code(Method m);
Method method_from_code(char c);

struct CollectionConfig {
  int n_rollouts = 1;
  int n_timesteps = 30;
  std::uint64_t seed_base = 0;
  Method method = Method::kHealthyMinusDamaged;
};

/// One labeled O x T time-series. Columns missing because an environment
/// terminated early stay zero and the sample is flagged truncated.
struct DiagnosisSample {
  Matrix series;
  int label = 0;
  bool truncated = false;
};

/// Steps a healthy simulation and a second environment in lockstep for up to
/// n_timesteps, each driven by the expert policy's deterministic action on
/// its own observation. Shared by sample collection and the runtime probe.
DiagnosisSample paired_rollout(sim::Env& env_healthy, sim::Env& env_other,
                               const ppo::GaussianPolicy& expert, int n_timesteps,
                               std::uint64_t seed, Method method);

/// Algorithm: for each rollout r and class d, run a paired rollout with seed
/// seed_base + r. Produces n_rollouts x D samples in (rollout, class) order,
/// collected in parallel across rollouts.
std::vector<DiagnosisSample> collect_samples(const CollectionConfig& config,
                                             const sim::RobotSpec& spec,
                                             const sim::RewardConfig& reward,
                                             const ppo::GaussianPolicy& expert);

/// The single probe trial against a live environment with hidden damage.
DiagnosisSample run_probe(const sim::RobotSpec& spec, const sim::RewardConfig& reward,
                          sim::Env& live_env, const ppo::GaussianPolicy& expert,
                          int n_timesteps, std::uint64_t seed, Method method);

struct ClassifierConfig {
  int projection_dim = 512;
  int lstm_hidden = 32;
  std::vector<int> dense_sizes = {256, 128, 64};
  Real dropout_rate = 0.3;
  Real learning_rate = 1e-3;
  int minibatch_size = 32;
  int max_epochs = 50;
  int early_stop_patience = 5;
  Real train_split = 0.8;
};

/// Self-diagnose network: per-timestep linear projection, LSTM encoder, and
/// a dropout-regularized dense stack ending in a softmax over classes.
struct ClassifierModel {
  nn::DenseLayer projection;  // projection_dim x O, linear
  nn::LstmCell lstm;
  nn::Mlp head;               // lstm_hidden -> dense sizes -> D (softmax)
  Real dropout_rate = 0.3;

  ClassifierModel() = default;
  ClassifierModel(int input_dim, int n_classes, const ClassifierConfig& config, Rng& rng);

  int input_dim() const { return projection.in_size(); }
  int n_classes() const { return head.output_dim(); }

  /// Class posterior for one O x T series (dropout off, deterministic).
  Vector posterior(const Matrix& series) const;
  /// Batched logits used by training and evaluation.
  Matrix logits(const std::vector<Matrix>& timestep_columns) const;

  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);
};

/// Argmax of the posterior; ties break toward the lowest class id.
int diagnose(const ClassifierModel& model, const Matrix& probe, Vector* posterior = nullptr);

struct TrainReport {
  Real validation_accuracy = 0;
  Real train_accuracy = 0;
  std::vector<Real> validation_loss_history;
  std::vector<Real> validation_accuracy_history;
  int epochs_run = 0;
};

/// Minibatch Adam training with softmax cross-entropy, stratified
/// train/validation split, and early stopping on validation loss. Returns
/// the parameters of the best validation epoch.
ClassifierModel train_classifier(const std::vector<DiagnosisSample>& samples,
                                 int n_classes, const ClassifierConfig& config,
                                 std::uint64_t seed, TrainReport* report = nullptr);

nlohmann::json classifier_to_json(const ClassifierModel& model);
ClassifierModel classifier_from_json(const nlohmann::json& j);

/// Binary dataset container: header (O, T, D, method, seed_base) plus
/// per-sample label, truncation flag, and the row-major series.
void save_dataset(const std::filesystem::path& path, const std::vector<DiagnosisSample>& samples,
                  int n_classes, const CollectionConfig& config);
std::vector<DiagnosisSample> load_dataset(const std::filesystem::path& path, int* n_classes,
                                          CollectionConfig* config);

}  // namespace dappo::diag
