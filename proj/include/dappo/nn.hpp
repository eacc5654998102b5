#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dappo/types.hpp"

namespace dappo::nn {

enum class Activation { kLinear, kTanh, kRelu, kSoftmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Column-wise softmax with max subtraction; rows are logits of one sample.
Vector softmax(const Vector& logits);
Matrix softmax_columns(const Matrix& logits);

Matrix apply_activation(Activation act, const Matrix& pre);

/// Fully connected layer with cached forward state for the backward pass.
/// Batched calls treat each column as one sample.
struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
  Activation activation = Activation::kLinear;

  // caches and gradient accumulators
  Matrix input, preactivation, output;
  Matrix grad_weights;
  Vector grad_bias;

  DenseLayer() = default;
  DenseLayer(int in_size, int out_size, Activation act, Rng& rng);

  int in_size() const { return static_cast<int>(weights.cols()); }
  int out_size() const { return static_cast<int>(weights.rows()); }

  Matrix forward(const Matrix& x);
  Vector forward(const Vector& x);
  /// Forward without touching caches; usable from const contexts and threads.
  Matrix infer(const Matrix& x) const;
  Vector infer(const Vector& x) const;

  /// Backward from the gradient w.r.t. the activated output. Accumulates
  /// parameter gradients and returns the gradient w.r.t. the input.
  Matrix backward(const Matrix& grad_output);
  /// Backward entry for gradients already taken w.r.t. the pre-activation
  /// (softmax/cross-entropy feeds the fused p - onehot term here).
  Matrix backward_preactivation(const Matrix& grad_pre);
  /// Backward for a shared-weight application on explicit input (no cache).
  Matrix backward_with_input(const Matrix& x, const Matrix& grad_pre);

  void zero_gradients();
  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Vector gradients() const;
};

/// Stack of dense layers. Softmax is permitted only on the final layer.
struct Mlp {
  std::vector<DenseLayer> layers;

  Mlp() = default;
  Mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
      Activation hidden_act, Activation output_act, Rng& rng);

  int input_dim() const;
  int output_dim() const;

  Matrix forward(const Matrix& x);
  Vector forward(const Vector& x);
  Matrix infer(const Matrix& x) const;
  Vector infer(const Vector& x) const;

  Matrix backward(const Matrix& grad_output);
  /// Backward seeded at the final layer's pre-activation (logits).
  Matrix backward_from_logits(const Matrix& grad_logits);

  void zero_gradients();
  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Vector gradients() const;
};

/// LSTM cell. Gate blocks are stacked [input; forget; candidate; output]
/// along the rows of w_input/w_hidden/bias. The forget-gate bias block is
/// initialized to 1.0.
struct LstmCell {
  int input_size = 0;
  int hidden_size = 0;
  Matrix w_input;   // 4H x In
  Matrix w_hidden;  // 4H x H
  Vector bias;      // 4H

  Matrix grad_w_input, grad_w_hidden;
  Vector grad_bias;

  LstmCell() = default;
  LstmCell(int in_size, int hid_size, Rng& rng);

  /// Single step (batched): updates hidden and cell states in place.
  void step(const Matrix& x, Matrix& hidden, Matrix& cell) const;

  /// Runs the whole sequence and returns the final hidden state, keeping
  /// per-step caches for backward(). One column per batch element.
  Matrix forward(const std::vector<Matrix>& sequence);
  Vector forward(const std::vector<Vector>& sequence);
  Matrix infer(const std::vector<Matrix>& sequence) const;

  /// BPTT from the gradient w.r.t. the final hidden state. Accumulates
  /// parameter gradients and returns per-step input gradients.
  std::vector<Matrix> backward(const Matrix& grad_final_hidden);

  void zero_gradients();
  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Vector gradients() const;

 private:
  struct StepTrace {
    Matrix x, i, f, g, o, c_prev, tanh_c;
  };
  std::vector<StepTrace> trace_;
};

/// Cross-entropy on raw logits. Returns the loss and, when grad is non-null,
/// softmax(logits) - onehot(label).
Real softmax_crossentropy(const Vector& logits, int label, Vector* grad = nullptr);
/// Batched variant; returns the mean loss, grad columns scaled by 1/batch.
Real softmax_crossentropy(const Matrix& logits, const std::vector<int>& labels,
                          Matrix* grad = nullptr);

/// Adam optimizer state over one flat parameter vector.
struct AdamState {
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
  long step = 0;
  Vector first_moment;
  Vector second_moment;

  static AdamState make(int parameter_count, Real learning_rate);
};

/// Standard Adam update with bias correction; increments state.step.
void adam_update(Vector& params, const Vector& grads, AdamState& state);

/// Inverted-dropout mask: entries are 1/keep with probability keep, else 0.
Matrix dropout_mask(long rows, long cols, Real rate, Rng& rng);

/// Max over parameters of |analytic - central difference| / max(1, |analytic|).
Real finite_diff_max_rel_error(const std::function<Real(const Vector&)>& loss,
                               const Vector& params, const Vector& analytic_grad,
                               Real epsilon);

// Checkpoint pieces (versioned JSON; weights serialized row-major with
// round-trip-exact reals).
nlohmann::json to_json(const DenseLayer& layer);
DenseLayer dense_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LstmCell& cell);
LstmCell lstm_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace dappo::nn
