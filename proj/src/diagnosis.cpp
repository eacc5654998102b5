#include "dappo/diagnosis.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "dappo/damage.hpp"

namespace dappo::diag {

char method_code(Method m) { return m == Method::kDamagedOnly ? 'A' : 'B'; }

Method method_from_code(char c) {
  if (c == 'A') return Method::kDamagedOnly;
  if (c == 'B') return Method::kHealthyMinusDamaged;
  throw InvalidInputError(std::string("unknown diagnosis method '") + c + "'");
}

DiagnosisSample paired_rollout(sim::Env& env_healthy, sim::Env& env_other,
                               const ppo::GaussianPolicy& expert, int n_timesteps,
                               std::uint64_t seed, Method method) {
  if (n_timesteps < 1) throw InvalidInputError("paired_rollout: need at least one timestep");
  const int obs_dim = env_healthy.spec().observation_dim();
  if (expert.obs_dim() != obs_dim)
    throw ConfigurationError("paired_rollout: expert policy observation dimension mismatch");

  const Vector& obs_h0 = env_healthy.reset(seed);
  const Vector& obs_d0 = env_other.reset(seed);
  Vector obs_h = obs_h0, obs_d = obs_d0;

  DiagnosisSample sample;
  sample.series = Matrix::Zero(obs_dim, n_timesteps);
  for (int t = 0; t < n_timesteps; ++t) {
    if (env_healthy.done() || env_other.done()) {
      sample.truncated = true;
      break;
    }
    const Vector a_h = expert.mean(obs_h);
    const Vector a_d = expert.mean(obs_d);
    obs_d = env_other.step(a_d).observation;
    obs_h = env_healthy.step(a_h).observation;
    sample.series.col(t) =
        method == Method::kHealthyMinusDamaged ? Vector(obs_h - obs_d) : obs_d;
  }
  return sample;
}

std::vector<DiagnosisSample> collect_samples(const CollectionConfig& config,
                                             const sim::RobotSpec& spec,
                                             const sim::RewardConfig& reward,
                                             const ppo::GaussianPolicy& expert) {
  if (config.n_rollouts < 1) throw InvalidInputError("collect_samples: n_rollouts must be >= 1");
  if (expert.obs_dim() != spec.observation_dim())
    throw ConfigurationError("collect_samples: expert policy observation dimension mismatch");
  const int n_classes = static_cast<int>(damage::count_classes(spec.n_legs, 2));
  std::vector<DiagnosisSample> samples(
      static_cast<std::size_t>(config.n_rollouts) * static_cast<std::size_t>(n_classes));

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = static_cast<int>(std::min<unsigned>(hw, 8));

  auto worker = [&](int first_rollout, int step) {
    for (int r = first_rollout; r < config.n_rollouts; r += step) {
      const std::uint64_t seed = config.seed_base + static_cast<std::uint64_t>(r);
      for (int d = 0; d < n_classes; ++d) {
        sim::Env env_h(spec, damage::class_from_id(0, spec.n_legs, 2), reward);
        sim::Env env_d(spec, damage::class_from_id(d, spec.n_legs, 2), reward);
        DiagnosisSample sample =
            paired_rollout(env_h, env_d, expert, config.n_timesteps, seed, config.method);
        sample.label = d;
        samples[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_classes) +
                static_cast<std::size_t>(d)] = std::move(sample);
      }
    }
  };

  if (n_threads == 1 || config.n_rollouts == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t, n_threads);
    for (auto& t : pool) t.join();
  }
  return samples;
}

DiagnosisSample run_probe(const sim::RobotSpec& spec, const sim::RewardConfig& reward,
                          sim::Env& live_env, const ppo::GaussianPolicy& expert,
                          int n_timesteps, std::uint64_t seed, Method method) {
  sim::Env healthy_sim(spec, damage::class_from_id(0, spec.n_legs, 2), reward);
  return paired_rollout(healthy_sim, live_env, expert, n_timesteps, seed, method);
}

ClassifierModel::ClassifierModel(int input_dim, int n_classes_, const ClassifierConfig& config,
                                 Rng& rng)
    : projection(input_dim, config.projection_dim, nn::Activation::kLinear, rng),
      lstm(config.projection_dim, config.lstm_hidden, rng),
      head(config.lstm_hidden, config.dense_sizes, n_classes_, nn::Activation::kRelu,
           nn::Activation::kSoftmax, rng),
      dropout_rate(config.dropout_rate) {}

Matrix ClassifierModel::logits(const std::vector<Matrix>& timestep_columns) const {
  std::vector<Matrix> projected;
  projected.reserve(timestep_columns.size());
  for (const auto& x : timestep_columns) projected.push_back(projection.infer(x));
  Matrix hidden = lstm.infer(projected);
  for (std::size_t i = 0; i + 1 < head.layers.size(); ++i)
    hidden = head.layers[i].infer(hidden);
  // final layer logits (softmax applied by callers that need probabilities)
  Matrix out = head.layers.back().weights * hidden;
  out.colwise() += head.layers.back().bias;
  return out;
}

Vector ClassifierModel::posterior(const Matrix& series) const {
  if (series.rows() != input_dim())
    throw InvalidInputError("classifier: probe row count must match the observation dimension");
  std::vector<Matrix> cols;
  cols.reserve(static_cast<std::size_t>(series.cols()));
  for (Eigen::Index t = 0; t < series.cols(); ++t) cols.emplace_back(series.col(t));
  return nn::softmax(Vector(logits(cols).col(0)));
}

int ClassifierModel::parameter_count() const {
  return projection.parameter_count() + lstm.parameter_count() + head.parameter_count();
}

Vector ClassifierModel::parameters() const {
  Vector flat(parameter_count());
  flat.head(projection.parameter_count()) = projection.parameters();
  flat.segment(projection.parameter_count(), lstm.parameter_count()) = lstm.parameters();
  flat.tail(head.parameter_count()) = head.parameters();
  return flat;
}

void ClassifierModel::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw ConfigurationError("classifier set_parameters: size mismatch");
  projection.set_parameters(flat.head(projection.parameter_count()));
  lstm.set_parameters(flat.segment(projection.parameter_count(), lstm.parameter_count()));
  head.set_parameters(flat.tail(head.parameter_count()));
}

int diagnose(const ClassifierModel& model, const Matrix& probe, Vector* posterior_out) {
  const Vector p = model.posterior(probe);
  int best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p(i) > p(best)) best = static_cast<int>(i);
  if (posterior_out) *posterior_out = p;
  return best;
}

namespace {

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};

Split stratified_split(const std::vector<DiagnosisSample>& samples, int n_classes, Real fraction,
                       Rng& rng) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    const int label = samples[static_cast<std::size_t>(i)].label;
    if (label < 0 || label >= n_classes)
      throw InvalidInputError("train_classifier: sample label outside [0, n_classes)");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  Split split;
  for (auto& bucket : by_class) {
    if (bucket.empty()) continue;
    if (bucket.size() < 2)
      throw InvalidInputError("train_classifier: every class needs at least two samples");
    for (int i = static_cast<int>(bucket.size()) - 1; i > 0; --i)
      std::swap(bucket[static_cast<std::size_t>(i)],
                bucket[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    const int n = static_cast<int>(bucket.size());
    int n_train = static_cast<int>(std::lround(fraction * n));
    n_train = std::clamp(n_train, 1, n - 1);
    for (int i = 0; i < n; ++i)
      (i < n_train ? split.train : split.validation).push_back(bucket[static_cast<std::size_t>(i)]);
  }
  return split;
}

/// Gathers timestep t of the chosen samples into one column-per-sample block.
Matrix gather_timestep(const std::vector<DiagnosisSample>& samples, const std::vector<int>& idx,
                       int begin, int count, int t) {
  Matrix block(samples.front().series.rows(), count);
  for (int i = 0; i < count; ++i)
    block.col(i) = samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(begin + i)])]
                       .series.col(t);
  return block;
}

struct EvalResult {
  Real loss = 0;
  Real accuracy = 0;
};

EvalResult evaluate(const ClassifierModel& model, const std::vector<DiagnosisSample>& samples,
                    const std::vector<int>& idx, int minibatch) {
  const int T = static_cast<int>(samples.front().series.cols());
  EvalResult result;
  int correct = 0;
  Real loss_sum = 0;
  for (int begin = 0; begin < static_cast<int>(idx.size()); begin += minibatch) {
    const int count = std::min<int>(minibatch, static_cast<int>(idx.size()) - begin);
    std::vector<Matrix> cols;
    cols.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) cols.push_back(gather_timestep(samples, idx, begin, count, t));
    const Matrix logits = model.logits(cols);
    for (int i = 0; i < count; ++i) {
      const int label =
          samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(begin + i)])].label;
      loss_sum += nn::softmax_crossentropy(Vector(logits.col(i)), label);
      int best = 0;
      for (Eigen::Index r = 1; r < logits.rows(); ++r)
        if (logits(r, i) > logits(best, i)) best = static_cast<int>(r);
      if (best == label) ++correct;
    }
  }
  result.loss = loss_sum / static_cast<Real>(idx.size());
  result.accuracy = static_cast<Real>(correct) / static_cast<Real>(idx.size());
  return result;
}

}  // namespace

ClassifierModel train_classifier(const std::vector<DiagnosisSample>& samples, int n_classes,
                                 const ClassifierConfig& config, std::uint64_t seed,
                                 TrainReport* report) {
  if (samples.empty()) throw InvalidInputError("train_classifier: no samples");
  if (!(config.train_split > 0.0 && config.train_split < 1.0))
    throw InvalidInputError("train_classifier: split must lie in (0, 1)");
  const int input_dim = static_cast<int>(samples.front().series.rows());
  const int T = static_cast<int>(samples.front().series.cols());
  for (const auto& s : samples)
    if (s.series.rows() != input_dim || s.series.cols() != T)
      throw InvalidInputError("train_classifier: inconsistent sample shapes");

  Rng rng(seed);
  ClassifierModel model(input_dim, n_classes, config, rng);
  const Split split = stratified_split(samples, n_classes, config.train_split, rng);

  nn::AdamState adam = nn::AdamState::make(model.parameter_count(), config.learning_rate);

  Vector best_params = model.parameters();
  Real best_val_loss = std::numeric_limits<Real>::infinity();
  Real best_val_accuracy = 0;
  int stale_epochs = 0;
  TrainReport local_report;

  std::vector<int> order = split.train;
  const int n_hidden_layers = static_cast<int>(model.head.layers.size()) - 1;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

    for (int begin = 0; begin < static_cast<int>(order.size());
         begin += config.minibatch_size) {
      const int count =
          std::min<int>(config.minibatch_size, static_cast<int>(order.size()) - begin);

      // stacked projection over all timesteps, then batched BPTT
      Matrix stacked(input_dim, static_cast<Eigen::Index>(T) * count);
      for (int t = 0; t < T; ++t)
        stacked.middleCols(static_cast<Eigen::Index>(t) * count, count) =
            gather_timestep(samples, order, begin, count, t);
      const Matrix projected = model.projection.forward(stacked);
      std::vector<Matrix> sequence;
      sequence.reserve(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t)
        sequence.push_back(projected.middleCols(static_cast<Eigen::Index>(t) * count, count));
      Matrix hidden = model.lstm.forward(sequence);

      std::vector<Matrix> masks(static_cast<std::size_t>(n_hidden_layers));
      for (int l = 0; l < n_hidden_layers; ++l) {
        hidden = model.head.layers[static_cast<std::size_t>(l)].forward(hidden);
        masks[static_cast<std::size_t>(l)] =
            nn::dropout_mask(hidden.rows(), hidden.cols(), config.dropout_rate, rng);
        hidden = hidden.cwiseProduct(masks[static_cast<std::size_t>(l)]);
      }
      auto& out_layer = model.head.layers.back();
      const Matrix logits = out_layer.forward(hidden);

      std::vector<int> labels(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i)
        labels[static_cast<std::size_t>(i)] =
            samples[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])].label;
      Matrix grad_logits;
      nn::softmax_crossentropy(out_layer.preactivation, labels, &grad_logits);

      model.projection.zero_gradients();
      model.lstm.zero_gradients();
      model.head.zero_gradients();

      Matrix grad = out_layer.backward_preactivation(grad_logits);
      for (int l = n_hidden_layers - 1; l >= 0; --l) {
        grad = grad.cwiseProduct(masks[static_cast<std::size_t>(l)]);
        grad = model.head.layers[static_cast<std::size_t>(l)].backward(grad);
      }
      const std::vector<Matrix> grad_sequence = model.lstm.backward(grad);
      Matrix grad_projected(config.projection_dim, static_cast<Eigen::Index>(T) * count);
      for (int t = 0; t < T; ++t)
        grad_projected.middleCols(static_cast<Eigen::Index>(t) * count, count) =
            grad_sequence[static_cast<std::size_t>(t)];
      model.projection.backward(grad_projected);

      Vector params = model.parameters();
      Vector grads(model.parameter_count());
      grads.head(model.projection.parameter_count()) = model.projection.gradients();
      grads.segment(model.projection.parameter_count(), model.lstm.parameter_count()) =
          model.lstm.gradients();
      grads.tail(model.head.parameter_count()) = model.head.gradients();
      nn::adam_update(params, grads, adam);
      model.set_parameters(params);
    }

    const EvalResult val = evaluate(model, samples, split.validation, config.minibatch_size);
    local_report.validation_loss_history.push_back(val.loss);
    local_report.validation_accuracy_history.push_back(val.accuracy);
    local_report.epochs_run = epoch + 1;

    if (val.loss < best_val_loss) {
      best_val_loss = val.loss;
      best_val_accuracy = val.accuracy;
      best_params = model.parameters();
      stale_epochs = 0;
    } else if (++stale_epochs >= config.early_stop_patience) {
      break;
    }
  }

  model.set_parameters(best_params);
  local_report.validation_accuracy = best_val_accuracy;
  local_report.train_accuracy =
      evaluate(model, samples, split.train, config.minibatch_size).accuracy;
  if (report) *report = local_report;
  return model;
}

nlohmann::json classifier_to_json(const ClassifierModel& model) {
  return {{"format_version", 1},
          {"kind", "diagnosis_classifier"},
          {"dropout_rate", model.dropout_rate},
          {"projection", nn::to_json(model.projection)},
          {"lstm", nn::to_json(model.lstm)},
          {"head", nn::to_json(model.head)}};
}

ClassifierModel classifier_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw ConfigurationError("classifier checkpoint: unsupported format version");
  ClassifierModel model;
  model.dropout_rate = j.at("dropout_rate").get<Real>();
  model.projection = nn::dense_from_json(j.at("projection"));
  model.lstm = nn::lstm_from_json(j.at("lstm"));
  model.head = nn::mlp_from_json(j.at("head"));
  return model;
}

namespace {
constexpr char kDatasetMagic[8] = {'D', 'A', 'D', 'S', 'E', 'T', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InvalidInputError("dataset file: truncated");
}
}  // namespace

void save_dataset(const std::filesystem::path& path, const std::vector<DiagnosisSample>& samples,
                  int n_classes, const CollectionConfig& config) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot open dataset for writing: " + path.string());
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  const std::uint32_t O = samples.empty() ? 0u : static_cast<std::uint32_t>(samples[0].series.rows());
  const std::uint32_t T = samples.empty() ? 0u : static_cast<std::uint32_t>(samples[0].series.cols());
  write_pod(out, O);
  write_pod(out, T);
  write_pod(out, static_cast<std::uint32_t>(n_classes));
  write_pod(out, static_cast<std::uint8_t>(method_code(config.method)));
  write_pod(out, static_cast<std::uint64_t>(config.seed_base));
  write_pod(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    write_pod(out, static_cast<std::int32_t>(s.label));
    write_pod(out, static_cast<std::uint8_t>(s.truncated ? 1 : 0));
    for (Eigen::Index r = 0; r < s.series.rows(); ++r)
      for (Eigen::Index c = 0; c < s.series.cols(); ++c) write_pod(out, s.series(r, c));
  }
}

std::vector<DiagnosisSample> load_dataset(const std::filesystem::path& path, int* n_classes,
                                          CollectionConfig* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open dataset for reading: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw InvalidInputError("dataset file: bad magic");
  std::uint32_t O = 0, T = 0, D = 0, count = 0;
  std::uint8_t method = 0;
  std::uint64_t seed_base = 0;
  read_pod(in, O);
  read_pod(in, T);
  read_pod(in, D);
  read_pod(in, method);
  read_pod(in, seed_base);
  read_pod(in, count);
  if (n_classes) *n_classes = static_cast<int>(D);
  if (config) {
    config->n_timesteps = static_cast<int>(T);
    config->method = method_from_code(static_cast<char>(method));
    config->seed_base = seed_base;
    config->n_rollouts = D > 0 ? static_cast<int>(count / D) : 0;
  }
  std::vector<DiagnosisSample> samples(count);
  for (auto& s : samples) {
    std::int32_t label = 0;
    std::uint8_t truncated = 0;
    read_pod(in, label);
    read_pod(in, truncated);
    s.label = label;
    s.truncated = truncated != 0;
    s.series.resize(O, T);
    for (Eigen::Index r = 0; r < s.series.rows(); ++r)
      for (Eigen::Index c = 0; c < s.series.cols(); ++c) read_pod(in, s.series(r, c));
  }
  return samples;
}

}  // namespace dappo::diag
