#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dappo/nn.hpp"
#include "dappo/types.hpp"

namespace dappo::ppo {

/// Diagonal-Gaussian policy: tanh MLP trunk whose linear output is squashed
/// by tanh into the action mean in [-1, 1], plus a state-independent log-std
/// vector.
struct GaussianPolicy {
  nn::Mlp trunk;   // obs -> action_dim, linear output head
  Vector log_std;  // action_dim

  static constexpr Real kLogStdInit = -0.5;
  static constexpr Real kLogStdMin = -3.0;
  static constexpr Real kLogStdMax = 1.0;

  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, const std::vector<int>& hidden, int action_dim, Rng& rng);

  int obs_dim() const { return trunk.input_dim(); }
  int action_dim() const { return trunk.output_dim(); }

  Vector mean(const Vector& obs) const;
  Matrix mean(const Matrix& obs) const;

  /// Draws an action and reports its log-probability under the policy.
  Vector sample(const Vector& obs, Rng& rng, Real* log_prob = nullptr) const;

  Real log_prob(const Vector& obs, const Vector& action) const;
  Vector log_prob(const Matrix& obs, const Matrix& actions) const;

  /// Cached training forward; pair with backward_mean.
  Matrix forward_mean(const Matrix& obs);
  /// Backpropagates dL/dmean through the tanh squash and the trunk and adds
  /// dL/dlog_std into grad_log_std.
  void backward_mean(const Matrix& grad_mean);
  Vector grad_log_std;

  void zero_gradients();
  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Vector gradients() const;
  void clamp_log_std();

 private:
  Matrix cached_mean_;
};

/// Log-density of a diagonal Gaussian at `action`.
Real gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& action);

/// Closed-form KL(old || new) between diagonal Gaussians.
Real gaussian_kl(const Vector& mean_old, const Vector& log_std_old,
                 const Vector& mean_new, const Vector& log_std_new);

/// Scalar state-value network.
struct ValueNet {
  nn::Mlp net;  // obs -> 1, linear output

  ValueNet() = default;
  ValueNet(int obs_dim, const std::vector<int>& hidden, Rng& rng);

  int obs_dim() const { return net.input_dim(); }
  Real value(const Vector& obs) const { return net.infer(obs)(0); }
  Vector value(const Matrix& obs) const { return net.infer(obs).row(0).transpose(); }
};

nlohmann::json policy_to_json(const GaussianPolicy& policy);
GaussianPolicy policy_from_json(const nlohmann::json& j);
nlohmann::json value_to_json(const ValueNet& value);
ValueNet value_from_json(const nlohmann::json& j);

}  // namespace dappo::ppo
