#include "dappo/policy.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace dappo::ppo {

namespace {
constexpr Real kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
}

GaussianPolicy::GaussianPolicy(int obs_dim, const std::vector<int>& hidden, int action_dim,
                               Rng& rng)
    : trunk(obs_dim, hidden, action_dim, nn::Activation::kTanh, nn::Activation::kLinear, rng),
      log_std(Vector::Constant(action_dim, kLogStdInit)),
      grad_log_std(Vector::Zero(action_dim)) {}

Vector GaussianPolicy::mean(const Vector& obs) const {
  return trunk.infer(obs).array().tanh();
}

Matrix GaussianPolicy::mean(const Matrix& obs) const {
  return trunk.infer(obs).array().tanh();
}

Vector GaussianPolicy::sample(const Vector& obs, Rng& rng, Real* log_prob_out) const {
  const Vector mu = mean(obs);
  Vector action(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j)
    action(j) = mu(j) + std::exp(log_std(j)) * rng.normal();
  if (log_prob_out) *log_prob_out = gaussian_log_prob(mu, log_std, action);
  return action;
}

Real GaussianPolicy::log_prob(const Vector& obs, const Vector& action) const {
  return gaussian_log_prob(mean(obs), log_std, action);
}

Vector GaussianPolicy::log_prob(const Matrix& obs, const Matrix& actions) const {
  const Matrix mu = mean(obs);
  Vector out(obs.cols());
  for (Eigen::Index c = 0; c < obs.cols(); ++c)
    out(c) = gaussian_log_prob(mu.col(c), log_std, actions.col(c));
  return out;
}

Matrix GaussianPolicy::forward_mean(const Matrix& obs) {
  cached_mean_ = trunk.forward(obs).array().tanh();
  return cached_mean_;
}

void GaussianPolicy::backward_mean(const Matrix& grad_mean) {
  const Matrix grad_head =
      grad_mean.cwiseProduct((1.0 - cached_mean_.array().square()).matrix());
  trunk.backward(grad_head);
}

void GaussianPolicy::zero_gradients() {
  trunk.zero_gradients();
  grad_log_std.setZero();
}

int GaussianPolicy::parameter_count() const {
  return trunk.parameter_count() + static_cast<int>(log_std.size());
}

Vector GaussianPolicy::parameters() const {
  Vector flat(parameter_count());
  flat.head(trunk.parameter_count()) = trunk.parameters();
  flat.tail(log_std.size()) = log_std;
  return flat;
}

void GaussianPolicy::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw ConfigurationError("policy set_parameters: size mismatch");
  trunk.set_parameters(flat.head(trunk.parameter_count()));
  log_std = flat.tail(log_std.size());
}

Vector GaussianPolicy::gradients() const {
  Vector flat(parameter_count());
  flat.head(trunk.parameter_count()) = trunk.gradients();
  flat.tail(log_std.size()) = grad_log_std;
  return flat;
}

void GaussianPolicy::clamp_log_std() {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

Real gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& action) {
  if (mean.size() != action.size() || mean.size() != log_std.size())
    throw InvalidInputError("gaussian_log_prob: dimension mismatch");
  Real lp = 0;
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const Real z = (action(j) - mean(j)) * std::exp(-log_std(j));
    lp -= 0.5 * z * z + log_std(j) + kHalfLog2Pi;
  }
  return lp;
}

Real gaussian_kl(const Vector& mean_old, const Vector& log_std_old,
                 const Vector& mean_new, const Vector& log_std_new) {
  Real kl = 0;
  for (Eigen::Index j = 0; j < mean_old.size(); ++j) {
    const Real var_old = std::exp(2.0 * log_std_old(j));
    const Real var_new = std::exp(2.0 * log_std_new(j));
    const Real diff = mean_old(j) - mean_new(j);
    kl += log_std_new(j) - log_std_old(j) + (var_old + diff * diff) / (2.0 * var_new) - 0.5;
  }
  return kl;
}

ValueNet::ValueNet(int obs_dim, const std::vector<int>& hidden, Rng& rng)
    : net(obs_dim, hidden, 1, nn::Activation::kTanh, nn::Activation::kLinear, rng) {}

nlohmann::json policy_to_json(const GaussianPolicy& policy) {
  return {{"format_version", 1},
          {"kind", "gaussian_policy"},
          {"trunk", nn::to_json(policy.trunk)},
          {"log_std", nn::vector_to_json(policy.log_std)}};
}

GaussianPolicy policy_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw ConfigurationError("policy checkpoint: unsupported format version");
  if (j.at("kind").get<std::string>() != "gaussian_policy")
    throw ConfigurationError("policy checkpoint: wrong kind");
  GaussianPolicy policy;
  policy.trunk = nn::mlp_from_json(j.at("trunk"));
  policy.log_std = nn::vector_from_json(j.at("log_std"));
  policy.grad_log_std = Vector::Zero(policy.log_std.size());
  return policy;
}

nlohmann::json value_to_json(const ValueNet& value) {
  return {{"format_version", 1}, {"kind", "value_net"}, {"net", nn::to_json(value.net)}};
}

ValueNet value_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw ConfigurationError("value checkpoint: unsupported format version");
  ValueNet value;
  value.net = nn::mlp_from_json(j.at("net"));
  return value;
}

}  // namespace dappo::ppo
