#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stefnet/data.hpp"
#include "stefnet/layers.hpp"
#include "stefnet/model.hpp"

namespace stefnet {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// (1/m) * sum_i ||pred_i - target_i||^2. Rank-3 inputs are [m,W,H]; rank-2
// inputs are a single sample.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

AdamState adam_init(const ParamList& params);
// One bias-corrected Adam update from the gradients stored on `params`.
// Parameters without a gradient buffer are treated as having zero gradient.
void adam_step(const ParamList& params, AdamState& state, const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-sample loss over the epoch
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<double> loss_history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch training with per-epoch seeded shuffling. Throws NumericError
// with epoch, batch and parameter norms when a batch loss is not finite.
TrainResult train(StefNet& net, const Dataset& data, std::span<const Sample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;  // grid cells compared
};

// Accumulates absolute and squared errors over grid cells.
class MetricsAccumulator {
 public:
  void add(std::span<const double> predicted, std::span<const double> actual);
  Metrics result() const;

 private:
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::size_t count_ = 0;
};

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> actual);

// Predictions in demand units: inverse-scaled and clamped at zero.
std::vector<double> predict_counts(const StefNet& net, const Dataset& data, const Sample& sample);

Metrics evaluate(const StefNet& net, const Dataset& data, std::span<const Sample> samples);
// Predicts D^{t+1} = D^t.
Metrics persistence_baseline(const Dataset& data, std::span<const Sample> samples);

}  // namespace stefnet
