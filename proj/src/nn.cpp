#include "dappo/nn.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace dappo::nn {
namespace {

void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw ConfigurationError(std::string("non-finite values in ") + where);
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSoftmax: return "softmax";
  }
  throw ConfigurationError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "softmax") return Activation::kSoftmax;
  throw ConfigurationError("unknown activation '" + name + "'");
}

Vector softmax(const Vector& logits) {
  Vector shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

Matrix apply_activation(Activation act, const Matrix& pre) {
  switch (act) {
    case Activation::kLinear: return pre;
    case Activation::kTanh: return pre.array().tanh();
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kSoftmax: return softmax_columns(pre);
  }
  throw ConfigurationError("unknown activation");
}

DenseLayer::DenseLayer(int in_size, int out_size, Activation act, Rng& rng) {
  if (in_size <= 0 || out_size <= 0) throw ConfigurationError("dense layer: sizes must be positive");
  activation = act;
  const Real limit = std::sqrt(6.0 / static_cast<Real>(in_size + out_size));
  weights.resize(out_size, in_size);
  for (int r = 0; r < out_size; ++r)
    for (int c = 0; c < in_size; ++c) weights(r, c) = rng.uniform(-limit, limit);
  bias = Vector::Zero(out_size);
  zero_gradients();
}

Matrix DenseLayer::infer(const Matrix& x) const {
  if (x.rows() != weights.cols())
    throw ConfigurationError("dense forward: input dimension mismatch");
  Matrix pre = weights * x;
  pre.colwise() += bias;
  return apply_activation(activation, pre);
}

Vector DenseLayer::infer(const Vector& x) const {
  return Vector(infer(Matrix(x)).col(0));
}

Matrix DenseLayer::forward(const Matrix& x) {
  if (x.rows() != weights.cols())
    throw ConfigurationError("dense forward: input dimension mismatch");
  input = x;
  preactivation.noalias() = weights * x;
  preactivation.colwise() += bias;
  output = apply_activation(activation, preactivation);
  check_finite(output, "dense forward");
  return output;
}

Vector DenseLayer::forward(const Vector& x) { return Vector(forward(Matrix(x)).col(0)); }

Matrix DenseLayer::backward(const Matrix& grad_output) {
  Matrix grad_pre;
  switch (activation) {
    case Activation::kLinear: grad_pre = grad_output; break;
    case Activation::kTanh:
      grad_pre = grad_output.cwiseProduct((1.0 - output.array().square()).matrix());
      break;
    case Activation::kRelu:
      grad_pre = grad_output.cwiseProduct((preactivation.array() > 0.0).cast<Real>().matrix());
      break;
    case Activation::kSoftmax:
      throw ConfigurationError("softmax backward must go through the fused cross-entropy path");
  }
  return backward_preactivation(grad_pre);
}

Matrix DenseLayer::backward_preactivation(const Matrix& grad_pre) {
  grad_weights.noalias() += grad_pre * input.transpose();
  grad_bias.noalias() += grad_pre.rowwise().sum();
  return weights.transpose() * grad_pre;
}

Matrix DenseLayer::backward_with_input(const Matrix& x, const Matrix& grad_pre) {
  grad_weights.noalias() += grad_pre * x.transpose();
  grad_bias.noalias() += grad_pre.rowwise().sum();
  return weights.transpose() * grad_pre;
}

void DenseLayer::zero_gradients() {
  grad_weights = Matrix::Zero(weights.rows(), weights.cols());
  grad_bias = Vector::Zero(bias.size());
}

int DenseLayer::parameter_count() const {
  return static_cast<int>(weights.size() + bias.size());
}

namespace {

void pack_matrix(const Matrix& m, Vector& flat, int& offset) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat(offset++) = m(r, c);
}

void pack_vector(const Vector& v, Vector& flat, int& offset) {
  flat.segment(offset, v.size()) = v;
  offset += static_cast<int>(v.size());
}

void unpack_matrix(Matrix& m, const Vector& flat, int& offset) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat(offset++);
}

void unpack_vector(Vector& v, const Vector& flat, int& offset) {
  v = flat.segment(offset, v.size());
  offset += static_cast<int>(v.size());
}

}  // namespace

Vector DenseLayer::parameters() const {
  Vector flat(parameter_count());
  int offset = 0;
  pack_matrix(weights, flat, offset);
  pack_vector(bias, flat, offset);
  return flat;
}

void DenseLayer::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw ConfigurationError("dense set_parameters: size mismatch");
  int offset = 0;
  unpack_matrix(weights, flat, offset);
  unpack_vector(bias, flat, offset);
}

Vector DenseLayer::gradients() const {
  Vector flat(parameter_count());
  int offset = 0;
  pack_matrix(grad_weights, flat, offset);
  pack_vector(grad_bias, flat, offset);
  return flat;
}

Mlp::Mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
         Activation hidden_act, Activation output_act, Rng& rng) {
  if (hidden_act == Activation::kSoftmax)
    throw ConfigurationError("softmax is allowed only as the final classifier layer");
  int in = input_dim;
  for (const int h : hidden) {
    layers.emplace_back(in, h, hidden_act, rng);
    in = h;
  }
  layers.emplace_back(in, output_dim, output_act, rng);
}

int Mlp::input_dim() const { return layers.front().in_size(); }
int Mlp::output_dim() const { return layers.back().out_size(); }

Matrix Mlp::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers) h = layer.forward(h);
  return h;
}

Vector Mlp::forward(const Vector& x) { return Vector(forward(Matrix(x)).col(0)); }

Matrix Mlp::infer(const Matrix& x) const {
  Matrix h = x;
  for (const auto& layer : layers) h = layer.infer(h);
  return h;
}

Vector Mlp::infer(const Vector& x) const { return Vector(infer(Matrix(x)).col(0)); }

Matrix Mlp::backward(const Matrix& grad_output) {
  Matrix g = grad_output;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = it->backward(g);
  return g;
}

Matrix Mlp::backward_from_logits(const Matrix& grad_logits) {
  Matrix g = layers.back().backward_preactivation(grad_logits);
  for (auto it = layers.rbegin() + 1; it != layers.rend(); ++it) g = it->backward(g);
  return g;
}

void Mlp::zero_gradients() {
  for (auto& layer : layers) layer.zero_gradients();
}

int Mlp::parameter_count() const {
  int n = 0;
  for (const auto& layer : layers) n += layer.parameter_count();
  return n;
}

Vector Mlp::parameters() const {
  Vector flat(parameter_count());
  int offset = 0;
  for (const auto& layer : layers) {
    pack_matrix(layer.weights, flat, offset);
    pack_vector(layer.bias, flat, offset);
  }
  return flat;
}

void Mlp::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw ConfigurationError("mlp set_parameters: size mismatch");
  int offset = 0;
  for (auto& layer : layers) {
    unpack_matrix(layer.weights, flat, offset);
    unpack_vector(layer.bias, flat, offset);
  }
}

Vector Mlp::gradients() const {
  Vector flat(parameter_count());
  int offset = 0;
  for (const auto& layer : layers) {
    pack_matrix(layer.grad_weights, flat, offset);
    pack_vector(layer.grad_bias, flat, offset);
  }
  return flat;
}

LstmCell::LstmCell(int in_size, int hid_size, Rng& rng)
    : input_size(in_size), hidden_size(hid_size) {
  if (in_size <= 0 || hid_size <= 0) throw ConfigurationError("lstm: sizes must be positive");
  const Real limit = 1.0 / std::sqrt(static_cast<Real>(hid_size));
  w_input.resize(4 * hid_size, in_size);
  w_hidden.resize(4 * hid_size, hid_size);
  for (Eigen::Index r = 0; r < w_input.rows(); ++r)
    for (Eigen::Index c = 0; c < w_input.cols(); ++c) w_input(r, c) = rng.uniform(-limit, limit);
  for (Eigen::Index r = 0; r < w_hidden.rows(); ++r)
    for (Eigen::Index c = 0; c < w_hidden.cols(); ++c) w_hidden(r, c) = rng.uniform(-limit, limit);
  bias = Vector::Zero(4 * hid_size);
  bias.segment(hid_size, hid_size).setConstant(1.0);  // forget gate
  zero_gradients();
}

namespace {
inline Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }
}  // namespace

void LstmCell::step(const Matrix& x, Matrix& hidden, Matrix& cell) const {
  const int H = hidden_size;
  Matrix pre = w_input * x + w_hidden * hidden;
  pre.colwise() += bias;
  const Matrix i = sigmoid(pre.topRows(H));
  const Matrix f = sigmoid(pre.middleRows(H, H));
  const Matrix g = pre.middleRows(2 * H, H).array().tanh().matrix();
  const Matrix o = sigmoid(pre.bottomRows(H));
  cell = f.cwiseProduct(cell) + i.cwiseProduct(g);
  hidden = o.cwiseProduct(cell.array().tanh().matrix());
}

Matrix LstmCell::forward(const std::vector<Matrix>& sequence) {
  if (sequence.empty()) throw InvalidInputError("lstm forward: empty sequence");
  const int H = hidden_size;
  const Eigen::Index batch = sequence.front().cols();
  trace_.clear();
  trace_.reserve(sequence.size());
  Matrix h = Matrix::Zero(H, batch);
  Matrix c = Matrix::Zero(H, batch);
  for (const auto& x : sequence) {
    if (x.rows() != input_size || x.cols() != batch)
      throw InvalidInputError("lstm forward: sequence element shape mismatch");
    StepTrace t;
    t.x = x;
    t.c_prev = c;
    Matrix pre = w_input * x + w_hidden * h;
    pre.colwise() += bias;
    t.i = sigmoid(pre.topRows(H));
    t.f = sigmoid(pre.middleRows(H, H));
    t.g = pre.middleRows(2 * H, H).array().tanh().matrix();
    t.o = sigmoid(pre.bottomRows(H));
    c = t.f.cwiseProduct(c) + t.i.cwiseProduct(t.g);
    t.tanh_c = c.array().tanh().matrix();
    h = t.o.cwiseProduct(t.tanh_c);
    trace_.push_back(std::move(t));
  }
  check_finite(h, "lstm forward");
  return h;
}

Vector LstmCell::forward(const std::vector<Vector>& sequence) {
  std::vector<Matrix> cols;
  cols.reserve(sequence.size());
  for (const auto& v : sequence) cols.emplace_back(v);
  return Vector(forward(cols).col(0));
}

Matrix LstmCell::infer(const std::vector<Matrix>& sequence) const {
  if (sequence.empty()) throw InvalidInputError("lstm infer: empty sequence");
  const Eigen::Index batch = sequence.front().cols();
  Matrix h = Matrix::Zero(hidden_size, batch);
  Matrix c = Matrix::Zero(hidden_size, batch);
  for (const auto& x : sequence) {
    if (x.rows() != input_size || x.cols() != batch)
      throw InvalidInputError("lstm infer: sequence element shape mismatch");
    step(x, h, c);
  }
  return h;
}

std::vector<Matrix> LstmCell::backward(const Matrix& grad_final_hidden) {
  if (trace_.empty()) throw ConfigurationError("lstm backward: no cached forward pass");
  const int H = hidden_size;
  const Eigen::Index batch = grad_final_hidden.cols();
  std::vector<Matrix> grad_inputs(trace_.size());
  Matrix dh = grad_final_hidden;
  Matrix dc = Matrix::Zero(H, batch);
  Matrix pre_grad(4 * H, batch);
  for (int t = static_cast<int>(trace_.size()) - 1; t >= 0; --t) {
    const StepTrace& tr = trace_[static_cast<std::size_t>(t)];
    const Matrix do_ = dh.cwiseProduct(tr.tanh_c);
    dc += dh.cwiseProduct(tr.o).cwiseProduct((1.0 - tr.tanh_c.array().square()).matrix());
    const Matrix di = dc.cwiseProduct(tr.g);
    const Matrix df = dc.cwiseProduct(tr.c_prev);
    const Matrix dg = dc.cwiseProduct(tr.i);
    pre_grad.topRows(H) = di.cwiseProduct(tr.i).cwiseProduct((1.0 - tr.i.array()).matrix());
    pre_grad.middleRows(H, H) = df.cwiseProduct(tr.f).cwiseProduct((1.0 - tr.f.array()).matrix());
    pre_grad.middleRows(2 * H, H) = dg.cwiseProduct((1.0 - tr.g.array().square()).matrix());
    pre_grad.bottomRows(H) = do_.cwiseProduct(tr.o).cwiseProduct((1.0 - tr.o.array()).matrix());
    grad_w_input.noalias() += pre_grad * tr.x.transpose();
    grad_bias.noalias() += pre_grad.rowwise().sum();
    if (t > 0) {
      // h_{t-1} = o_{t-1} * tanh(c_{t-1})
      const StepTrace& prev = trace_[static_cast<std::size_t>(t - 1)];
      grad_w_hidden.noalias() += pre_grad * prev.o.cwiseProduct(prev.tanh_c).transpose();
    }
    grad_inputs[static_cast<std::size_t>(t)] = w_input.transpose() * pre_grad;
    dh.noalias() = w_hidden.transpose() * pre_grad;
    dc = dc.cwiseProduct(tr.f);
  }
  return grad_inputs;
}

void LstmCell::zero_gradients() {
  grad_w_input = Matrix::Zero(w_input.rows(), w_input.cols());
  grad_w_hidden = Matrix::Zero(w_hidden.rows(), w_hidden.cols());
  grad_bias = Vector::Zero(bias.size());
}

int LstmCell::parameter_count() const {
  return static_cast<int>(w_input.size() + w_hidden.size() + bias.size());
}

Vector LstmCell::parameters() const {
  Vector flat(parameter_count());
  int offset = 0;
  pack_matrix(w_input, flat, offset);
  pack_matrix(w_hidden, flat, offset);
  pack_vector(bias, flat, offset);
  return flat;
}

void LstmCell::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw ConfigurationError("lstm set_parameters: size mismatch");
  int offset = 0;
  unpack_matrix(w_input, flat, offset);
  unpack_matrix(w_hidden, flat, offset);
  unpack_vector(bias, flat, offset);
}

Vector LstmCell::gradients() const {
  Vector flat(parameter_count());
  int offset = 0;
  pack_matrix(grad_w_input, flat, offset);
  pack_matrix(grad_w_hidden, flat, offset);
  pack_vector(grad_bias, flat, offset);
  return flat;
}

Real softmax_crossentropy(const Vector& logits, int label, Vector* grad) {
  if (label < 0 || label >= logits.size())
    throw InvalidInputError("softmax_crossentropy: label out of range");
  const Real m = logits.maxCoeff();
  const Vector shifted = (logits.array() - m).exp();
  const Real sum = shifted.sum();
  const Real loss = std::log(sum) - (logits(label) - m);
  if (grad) {
    *grad = shifted / sum;
    (*grad)(label) -= 1.0;
  }
  return loss;
}

Real softmax_crossentropy(const Matrix& logits, const std::vector<int>& labels, Matrix* grad) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
    throw InvalidInputError("softmax_crossentropy: one label per column required");
  const Real scale = 1.0 / static_cast<Real>(labels.size());
  Real total = 0;
  if (grad) grad->resize(logits.rows(), logits.cols());
  Vector g;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    total += softmax_crossentropy(logits.col(c), labels[static_cast<std::size_t>(c)],
                                  grad ? &g : nullptr);
    if (grad) grad->col(c) = g * scale;
  }
  return total * scale;
}

AdamState AdamState::make(int parameter_count, Real learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  state.first_moment = Vector::Zero(parameter_count);
  state.second_moment = Vector::Zero(parameter_count);
  return state;
}

void adam_update(Vector& params, const Vector& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ConfigurationError("adam_update: parameter/gradient/state shape mismatch");
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment.array() + (1.0 - state.beta2) * grads.array().square();
  const Real c1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.step));
  const Real c2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

Matrix dropout_mask(long rows, long cols, Real rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw InvalidInputError("dropout rate must be in [0, 1)");
  const Real keep = 1.0 - rate;
  Matrix mask(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

Real finite_diff_max_rel_error(const std::function<Real(const Vector&)>& loss,
                               const Vector& params, const Vector& analytic_grad,
                               Real epsilon) {
  if (!(epsilon > 1e-8 && epsilon < 1e-3))
    throw InvalidInputError("finite_diff: epsilon must lie in (1e-8, 1e-3)");
  if (params.size() != analytic_grad.size())
    throw ConfigurationError("finite_diff: gradient size mismatch");
  Real worst = 0;
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe(i) = params(i) + epsilon;
    const Real up = loss(probe);
    probe(i) = params(i) - epsilon;
    const Real down = loss(probe);
    probe(i) = params(i);
    const Real fd = (up - down) / (2.0 * epsilon);
    const Real a = analytic_grad(i);
    worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigurationError("matrix json: data length does not match shape");
  Matrix m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(k++)].get<Real>();
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  return data;
}

Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<Real>();
  return v;
}

nlohmann::json to_json(const DenseLayer& layer) {
  return {{"kind", "dense"},
          {"activation", activation_name(layer.activation)},
          {"weights", matrix_to_json(layer.weights)},
          {"bias", vector_to_json(layer.bias)}};
}

DenseLayer dense_from_json(const nlohmann::json& j) {
  DenseLayer layer;
  layer.activation = activation_from_name(j.at("activation").get<std::string>());
  layer.weights = matrix_from_json(j.at("weights"));
  layer.bias = vector_from_json(j.at("bias"));
  layer.zero_gradients();
  return layer;
}

nlohmann::json to_json(const Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers) layers.push_back(to_json(layer));
  return {{"kind", "mlp"}, {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp mlp;
  for (const auto& layer : j.at("layers")) mlp.layers.push_back(dense_from_json(layer));
  return mlp;
}

nlohmann::json to_json(const LstmCell& cell) {
  return {{"kind", "lstm"},
          {"input_size", cell.input_size},
          {"hidden_size", cell.hidden_size},
          {"w_input", matrix_to_json(cell.w_input)},
          {"w_hidden", matrix_to_json(cell.w_hidden)},
          {"bias", vector_to_json(cell.bias)}};
}

LstmCell lstm_from_json(const nlohmann::json& j) {
  LstmCell cell;
  cell.input_size = j.at("input_size").get<int>();
  cell.hidden_size = j.at("hidden_size").get<int>();
  cell.w_input = matrix_from_json(j.at("w_input"));
  cell.w_hidden = matrix_from_json(j.at("w_hidden"));
  cell.bias = vector_from_json(j.at("bias"));
  cell.zero_gradients();
  return cell;
}

nlohmann::json to_json(const AdamState& state) {
  return {{"learning_rate", state.learning_rate},
          {"beta1", state.beta1},
          {"beta2", state.beta2},
          {"epsilon", state.epsilon},
          {"step", state.step},
          {"first_moment", vector_to_json(state.first_moment)},
          {"second_moment", vector_to_json(state.second_moment)}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState state;
  state.learning_rate = j.at("learning_rate").get<Real>();
  state.beta1 = j.at("beta1").get<Real>();
  state.beta2 = j.at("beta2").get<Real>();
  state.epsilon = j.at("epsilon").get<Real>();
  state.step = j.at("step").get<long>();
  state.first_moment = vector_from_json(j.at("first_moment"));
  state.second_moment = vector_from_json(j.at("second_moment"));
  return state;
}

}  // namespace dappo::nn
