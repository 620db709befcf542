#pragma once

// Building blocks of the forecaster: ConvLSTM cells and stack, the Gaussian
// fuzzy layer, the two fusion operators, the bidirectional LSTM with temporal
// attention, and the dense head.
//
// Every layer owns its parameters as leaf tensors and registers them under a
// stable dotted name via collect(); the model, optimizer and checkpoint code
// all work from that list.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "stefnet/tensor.hpp"

namespace stefnet {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_parameters(const ParamList& params);

// Uniform in [lo, hi], trainable.
Tensor uniform_parameter(Shape shape, double lo, double hi, std::mt19937_64& rng);
// Uniform in [-s, s] with s = 1 / sqrt(fan_in).
Tensor fan_in_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// ConvLSTM

struct LstmState {
  Tensor h;
  Tensor c;
};

// Gates i, f, o and the candidate all come from one convolution over the
// channel-concatenated [x_t, h_{t-1}]; the kernel's output channels are laid
// out as [i | f | o | candidate], each `hidden` wide. No peephole terms.
class ConvLstmCell {
 public:
  ConvLstmCell(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel_size, std::mt19937_64& rng);

  std::size_t in_channels() const { return in_channels_; }
  std::size_t hidden_channels() const { return hidden_; }

  LstmState zero_state(std::size_t width, std::size_t height) const;
  // x [W,H,in] with state [W,H,hidden] -> next state.
  LstmState step(const Tensor& x, const LstmState& state) const;

  void collect(const std::string& prefix, ParamList& out) const;

  Tensor kernel;  // [k,k,in+hidden,4*hidden]
  Tensor bias;    // [4*hidden]

 private:
  std::size_t in_channels_;
  std::size_t hidden_;
};

// Stacked ConvLSTM over a [T,W,H,1] demand sequence. With a projection the
// last layer keeps `filters` channels and a 1-filter convolution maps each
// step to one channel; without it the last layer itself has one channel.
class StackedConvLstm {
 public:
  StackedConvLstm(std::size_t layers, std::size_t filters, std::size_t kernel_size, bool projection,
                  std::mt19937_64& rng);

  // [T,W,H,1] -> [T,W,H,1]
  Tensor forward(const Tensor& sequence) const;
  // Per-step variant: T tensors of [W,H,1] -> T tensors of [W,H,1].
  std::vector<Tensor> forward_steps(const std::vector<Tensor>& frames) const;

  const std::vector<ConvLstmCell>& cells() const { return cells_; }
  bool has_projection() const { return projection_kernel_.defined(); }
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  std::vector<ConvLstmCell> cells_;
  Tensor projection_kernel_;  // [k,k,filters,1]
  Tensor projection_bias_;    // [1]
};

// ---------------------------------------------------------------------------
// Fuzzy layer

// Membership h[i,j] = exp(-(x_i - mu[i,j])^2 / max(delta[i,j]^2, 1e-6)) and
// rule activation o[j] = prod_i h[i,j].
class FuzzyLayer {
 public:
  static constexpr double kMinWidthSquared = 1e-6;
  static constexpr double kInitWidthFloor = 0.05;

  FuzzyLayer(std::size_t inputs, std::size_t rules, std::mt19937_64& rng);

  std::size_t inputs() const { return centers.dim(0); }
  std::size_t rules() const { return centers.dim(1); }

  // x [n] -> o [m]
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor centers;  // [n,m]
  Tensor widths;   // [n,m]
};

// ---------------------------------------------------------------------------
// Fusion

// Channel-concatenate two [W,H] maps and convolve with one filter.
// kernel [k,k,2,1], bias [1].
Tensor fuse_conv(const Tensor& demand, const Tensor& external, const Tensor& kernel, const Tensor& bias);
// weight_demand * demand + weight_external * external, all [W,H].
Tensor fuse_weighted_addition(const Tensor& demand, const Tensor& external, const Tensor& weight_demand,
                              const Tensor& weight_external);

class ConvFusion {
 public:
  ConvFusion(std::size_t kernel_size, std::mt19937_64& rng);
  Tensor forward(const Tensor& demand, const Tensor& external) const { return fuse_conv(demand, external, kernel, bias); }
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor kernel;
  Tensor bias;
};

class WeightedAdditionFusion {
 public:
  WeightedAdditionFusion(std::size_t width, std::size_t height, std::mt19937_64& rng);
  Tensor forward(const Tensor& demand, const Tensor& external) const {
    return fuse_weighted_addition(demand, external, weight_demand, weight_external);
  }
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight_demand;
  Tensor weight_external;
};

// ---------------------------------------------------------------------------
// Recurrent head

// Dense LSTM over row vectors: gates = [x, h] * weight + bias, with the
// columns of weight laid out as [i | f | o | candidate].
class Lstm {
 public:
  Lstm(std::size_t inputs, std::size_t units, std::mt19937_64& rng);

  LstmState zero_state() const;
  // x [1,inputs] -> state with h, c [1,units]
  LstmState step(const Tensor& x, const LstmState& state) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // [inputs+units, 4*units]
  Tensor bias;    // [4*units]

 private:
  std::size_t units_;
};

// Forward and backward LSTMs over the same sequence; outputs are added.
class BiLstm {
 public:
  BiLstm(std::size_t units, std::mt19937_64& rng);

  // T tensors of [1,u] -> T tensors of [1,u]
  std::vector<Tensor> forward(const std::vector<Tensor>& sequence) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Lstm forward_lstm;
  Lstm backward_lstm;
};

// Per-grid attention over time: scores[t,g] = score[t] * H[t,g],
// a = softmax over t, context[g] = sum_t a[t,g] * H[t,g].
class TemporalAttention {
 public:
  TemporalAttention(std::size_t steps, std::mt19937_64& rng);

  struct Output {
    Tensor context;  // [u]
    Tensor weights;  // [T,u]
  };
  Output forward(const Tensor& hidden) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor score;  // [T]
};

struct AttendOutput {
  Tensor context;  // [u]
  Tensor weights;  // [T,u]; undefined when attention is disabled
};

// BiLSTM over T fused [1,u] steps, stacked into H [T,u], then temporal
// attention. With attention == nullptr the context is the mean over t.
AttendOutput bilstm_attend(const BiLstm& bilstm, const TemporalAttention* attention, const std::vector<Tensor>& fused);

// ---------------------------------------------------------------------------
// Dense head

// Affine layers with ReLU between them; the last layer is linear.
class DenseStack {
 public:
  DenseStack(std::size_t inputs, const std::vector<std::size_t>& sizes, std::mt19937_64& rng);

  // x [1,inputs] -> [1,sizes.back()]
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

}  // namespace stefnet
