#include "stefnet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "stefnet/error.hpp"

namespace stefnet {

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Tensor uniform_parameter(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor fan_in_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  return uniform_parameter(std::move(shape), -s, s, rng);
}

namespace {

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw DimensionError(std::string(what) + ": expected " + shape_str(expected) + ", got " + shape_str(t.shape()));
  }
}

// Gate activations from a pre-activation tensor whose last axis is
// [i | f | o | candidate].
LstmState lstm_update(const Tensor& gates, const Tensor& c, std::size_t axis, std::size_t units) {
  auto i = sigmoid(narrow(gates, axis, 0, units));
  auto f = sigmoid(narrow(gates, axis, units, units));
  auto o = sigmoid(narrow(gates, axis, 2 * units, units));
  auto g = stefnet::tanh(narrow(gates, axis, 3 * units, units));
  auto c_next = add(mul(f, c), mul(i, g));
  auto h_next = mul(o, stefnet::tanh(c_next));
  return {h_next, c_next};
}

void set_forget_bias(Tensor& bias, std::size_t units) {
  auto b = bias.mutable_data();
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(units), b.begin() + static_cast<std::ptrdiff_t>(2 * units), 1.0);
}

}  // namespace

// ---- ConvLSTM ------------------------------------------------------------------

ConvLstmCell::ConvLstmCell(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel_size,
                           std::mt19937_64& rng)
    : in_channels_(in_channels), hidden_(hidden_channels) {
  if (kernel_size % 2 == 0) throw ConfigError("ConvLSTM kernel size must be odd, got " + std::to_string(kernel_size));
  const std::size_t stacked = in_channels + hidden_channels;
  const std::size_t fan_in = kernel_size * kernel_size * stacked;
  kernel = fan_in_parameter({kernel_size, kernel_size, stacked, 4 * hidden_channels}, fan_in, rng);
  bias = fan_in_parameter({4 * hidden_channels}, fan_in, rng);
  set_forget_bias(bias, hidden_channels);
}

LstmState ConvLstmCell::zero_state(std::size_t width, std::size_t height) const {
  return {Tensor::zeros({width, height, hidden_}), Tensor::zeros({width, height, hidden_})};
}

LstmState ConvLstmCell::step(const Tensor& x, const LstmState& state) const {
  if (x.rank() != 3 || x.dim(2) != in_channels_) {
    throw DimensionError("ConvLSTM input must be [W,H," + std::to_string(in_channels_) + "], got " + shape_str(x.shape()));
  }
  const Shape state_shape{x.dim(0), x.dim(1), hidden_};
  require_shape(state.h, state_shape, "ConvLSTM hidden state");
  require_shape(state.c, state_shape, "ConvLSTM cell state");
  auto gates = conv2d(concat({x, state.h}, 2), kernel, bias);
  return lstm_update(gates, state.c, 2, hidden_);
}

void ConvLstmCell::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".bias", bias});
}

StackedConvLstm::StackedConvLstm(std::size_t layers, std::size_t filters, std::size_t kernel_size, bool projection,
                                 std::mt19937_64& rng) {
  if (layers == 0) throw ConfigError("stacked ConvLSTM needs at least one layer");
  if (filters == 0) throw ConfigError("ConvLSTM filters must be positive");
  cells_.reserve(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = k == 0 ? 1 : filters;
    const std::size_t hidden = (k + 1 == layers && !projection) ? 1 : filters;
    cells_.emplace_back(in, hidden, kernel_size, rng);
  }
  if (projection) {
    const std::size_t fan_in = kernel_size * kernel_size * filters;
    projection_kernel_ = fan_in_parameter({kernel_size, kernel_size, filters, 1}, fan_in, rng);
    projection_bias_ = fan_in_parameter({1}, fan_in, rng);
  }
}

Tensor StackedConvLstm::forward(const Tensor& sequence) const {
  if (sequence.rank() != 4 || sequence.dim(3) != 1) {
    throw DimensionError("demand sequence must be [T,W,H,1], got " + shape_str(sequence.shape()));
  }
  if (sequence.dim(0) == 0) throw UsageError("demand sequence is empty");
  const std::size_t W = sequence.dim(1), H = sequence.dim(2);
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < sequence.dim(0); ++t) frames.push_back(reshape(narrow(sequence, 0, t, 1), {W, H, 1}));
  return stack(forward_steps(frames));
}

std::vector<Tensor> StackedConvLstm::forward_steps(const std::vector<Tensor>& frames) const {
  if (frames.empty()) throw UsageError("demand sequence is empty");
  const std::size_t W = frames[0].dim(0), H = frames[0].dim(1);
  std::vector<LstmState> states;
  for (const auto& cell : cells_) states.push_back(cell.zero_state(W, H));
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) {
    Tensor x = frame;
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      states[k] = cells_[k].step(x, states[k]);
      x = states[k].h;
    }
    out.push_back(has_projection() ? conv2d(x, projection_kernel_, projection_bias_) : x);
  }
  return out;
}

void StackedConvLstm::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t k = 0; k < cells_.size(); ++k) cells_[k].collect(prefix + ".cell" + std::to_string(k), out);
  if (has_projection()) {
    out.push_back({prefix + ".projection.kernel", projection_kernel_});
    out.push_back({prefix + ".projection.bias", projection_bias_});
  }
}

// ---- fuzzy ----------------------------------------------------------------------

FuzzyLayer::FuzzyLayer(std::size_t inputs, std::size_t rules, std::mt19937_64& rng) {
  if (inputs == 0 || rules == 0) throw ConfigError("fuzzy layer needs positive input and rule counts");
  centers = uniform_parameter({inputs, rules}, 0.0, 1.0, rng);
  widths = uniform_parameter({inputs, rules}, 0.0, 1.0, rng);
  for (auto& w : widths.mutable_data()) w = std::max(w, kInitWidthFloor);
}

Tensor FuzzyLayer::forward(const Tensor& x) const {
  const std::size_t n = inputs();
  require_shape(x, {n}, "fuzzy layer input");
  auto diff = sub(reshape(x, {n, 1}), centers);
  auto z = div(square(diff), clamp_min(square(widths), kMinWidthSquared));
  auto membership = stefnet::exp(neg(z));
  return prod(membership, 0);
}

void FuzzyLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".centers", centers});
  out.push_back({prefix + ".widths", widths});
}

// ---- fusion ---------------------------------------------------------------------

Tensor fuse_conv(const Tensor& demand, const Tensor& external, const Tensor& kernel, const Tensor& bias) {
  if (demand.rank() != 2) throw DimensionError("fusion input must be [W,H], got " + shape_str(demand.shape()));
  require_shape(external, demand.shape(), "fusion external map");
  if (kernel.rank() != 4 || kernel.dim(2) != 2 || kernel.dim(3) != 1) {
    throw DimensionError("fusion kernel must be [k,k,2,1], got " + shape_str(kernel.shape()));
  }
  const std::size_t W = demand.dim(0), H = demand.dim(1);
  auto stacked = concat({reshape(demand, {W, H, 1}), reshape(external, {W, H, 1})}, 2);
  return reshape(conv2d(stacked, kernel, bias), {W, H});
}

Tensor fuse_weighted_addition(const Tensor& demand, const Tensor& external, const Tensor& weight_demand,
                              const Tensor& weight_external) {
  if (demand.rank() != 2) throw DimensionError("fusion input must be [W,H], got " + shape_str(demand.shape()));
  require_shape(external, demand.shape(), "fusion external map");
  require_shape(weight_demand, demand.shape(), "fusion demand weights");
  require_shape(weight_external, demand.shape(), "fusion external weights");
  return add(mul(weight_demand, demand), mul(weight_external, external));
}

ConvFusion::ConvFusion(std::size_t kernel_size, std::mt19937_64& rng) {
  if (kernel_size % 2 == 0) throw ConfigError("fusion kernel size must be odd, got " + std::to_string(kernel_size));
  const std::size_t fan_in = kernel_size * kernel_size * 2;
  kernel = fan_in_parameter({kernel_size, kernel_size, 2, 1}, fan_in, rng);
  bias = fan_in_parameter({1}, fan_in, rng);
}

void ConvFusion::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".bias", bias});
}

WeightedAdditionFusion::WeightedAdditionFusion(std::size_t width, std::size_t height, std::mt19937_64& rng) {
  weight_demand = fan_in_parameter({width, height}, 2, rng);
  weight_external = fan_in_parameter({width, height}, 2, rng);
}

void WeightedAdditionFusion::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight_demand", weight_demand});
  out.push_back({prefix + ".weight_external", weight_external});
}

// ---- recurrent head ---------------------------------------------------------------

Lstm::Lstm(std::size_t inputs, std::size_t units, std::mt19937_64& rng) : units_(units) {
  if (units == 0) throw ConfigError("LSTM needs at least one unit");
  weight = fan_in_parameter({inputs + units, 4 * units}, inputs + units, rng);
  bias = fan_in_parameter({4 * units}, inputs + units, rng);
  set_forget_bias(bias, units);
}

LstmState Lstm::zero_state() const { return {Tensor::zeros({1, units_}), Tensor::zeros({1, units_})}; }

LstmState Lstm::step(const Tensor& x, const LstmState& state) const {
  const std::size_t inputs = weight.dim(0) - units_;
  require_shape(x, {1, inputs}, "LSTM input");
  require_shape(state.h, {1, units_}, "LSTM hidden state");
  auto gates = add(matmul(concat({x, state.h}, 1), weight), bias);
  return lstm_update(gates, state.c, 1, units_);
}

void Lstm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BiLstm::BiLstm(std::size_t units, std::mt19937_64& rng) : forward_lstm(units, units, rng), backward_lstm(units, units, rng) {}

std::vector<Tensor> BiLstm::forward(const std::vector<Tensor>& sequence) const {
  if (sequence.empty()) throw UsageError("BiLSTM sequence is empty");
  const std::size_t T = sequence.size();
  std::vector<Tensor> fwd(T), bwd(T);
  auto state = forward_lstm.zero_state();
  for (std::size_t t = 0; t < T; ++t) {
    state = forward_lstm.step(sequence[t], state);
    fwd[t] = state.h;
  }
  state = backward_lstm.zero_state();
  for (std::size_t t = T; t-- > 0;) {
    state = backward_lstm.step(sequence[t], state);
    bwd[t] = state.h;
  }
  std::vector<Tensor> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = add(fwd[t], bwd[t]);
  return out;
}

void BiLstm::collect(const std::string& prefix, ParamList& out) const {
  forward_lstm.collect(prefix + ".forward", out);
  backward_lstm.collect(prefix + ".backward", out);
}

TemporalAttention::TemporalAttention(std::size_t steps, std::mt19937_64& rng) {
  if (steps == 0) throw ConfigError("attention needs at least one time step");
  score = fan_in_parameter({steps}, steps, rng);
}

TemporalAttention::Output TemporalAttention::forward(const Tensor& hidden) const {
  const std::size_t T = score.dim(0);
  if (hidden.rank() != 2 || hidden.dim(0) != T) {
    throw DimensionError("attention input must be [" + std::to_string(T) + ",u], got " + shape_str(hidden.shape()));
  }
  auto scores = mul(hidden, reshape(score, {T, 1}));
  auto weights = softmax(scores, 0);
  return {sum(mul(weights, hidden), 0), weights};
}

void TemporalAttention::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".score", score});
}

AttendOutput bilstm_attend(const BiLstm& bilstm, const TemporalAttention* attention, const std::vector<Tensor>& fused) {
  auto hs = bilstm.forward(fused);
  const std::size_t T = hs.size();
  const std::size_t u = hs[0].numel();
  auto hidden = reshape(stack(hs), {T, u});
  if (attention == nullptr) return {mean(hidden, 0), Tensor()};
  auto out = attention->forward(hidden);
  return {out.context, out.weights};
}

// ---- dense ------------------------------------------------------------------------

DenseStack::DenseStack(std::size_t inputs, const std::vector<std::size_t>& sizes, std::mt19937_64& rng) {
  if (sizes.empty()) throw ConfigError("dense stack needs at least one layer");
  std::size_t in = inputs;
  for (auto size : sizes) {
    if (size == 0) throw ConfigError("dense layer sizes must be positive");
    weights.push_back(fan_in_parameter({in, size}, in, rng));
    biases.push_back(fan_in_parameter({size}, in, rng));
    in = size;
  }
}

Tensor DenseStack::forward(const Tensor& x) const {
  require_shape(x, {1, weights.front().dim(0)}, "dense stack input");
  Tensor y = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    y = add(matmul(y, weights[l]), biases[l]);
    if (l + 1 < weights.size()) y = relu(y);
  }
  return y;
}

void DenseStack::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", weights[l]});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", biases[l]});
  }
}

}  // namespace stefnet
