#include "stefnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace stefnet {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const Tensor total = sum_all(square(sub(pred, target)));
  if (pred.rank() == 3) return scale(total, 1.0 / static_cast<double>(pred.dim(0)));
  if (pred.rank() == 2) return total;
  throw DimensionError("mse_loss expects [W,H] or [m,W,H], got " + shape_str(pred.shape()));
}

AdamState adam_init(const ParamList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(const ParamList& params, AdamState& state, const TrainConfig& config) {
  if (state.first_moment.size() != params.size()) throw UsageError("Adam state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor tensor = params[p].tensor;
    auto value = tensor.mutable_data();
    const auto grad = tensor.grad();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      value[k] -= config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
    }
  }
}

namespace {

std::string parameter_norms(const ParamList& params) {
  std::ostringstream out;
  for (const auto& p : params) {
    double value_sq = 0.0;
    double grad_sq = 0.0;
    for (double v : p.tensor.data()) value_sq += v * v;
    for (double g : p.tensor.grad()) grad_sq += g * g;
    out << "\n  " << p.name << ": |w|=" << std::sqrt(value_sq) << " |g|=" << std::sqrt(grad_sq);
  }
  return out.str();
}

}  // namespace

TrainResult train(StefNet& net, const Dataset& data, std::span<const Sample> samples, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  if (config.epochs == 0) return result;
  if (samples.empty()) throw InputError("no training samples");

  const auto& params = net.parameters();
  AdamState adam = adam_init(params);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv_m = 1.0 / static_cast<double>(end - begin);
      net.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto s = materialize(data, samples[order[k]]);
        const Tensor loss = mse_loss(net.forward(s.demands, s.externals).grid, s.target);
        batch_loss += loss.item();
        // Each sample's share of the batch mean; gradients accumulate across the batch.
        scale(loss, inv_m).backward();
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + parameter_norms(params));
      }
      for (const auto& p : params) {
        for (double g : p.tensor.grad()) {
          if (!std::isfinite(g)) {
            throw NumericError("non-finite gradient for " + p.name + " at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index) + parameter_norms(params));
          }
        }
      }
      adam_step(params, adam, config);
      epoch_loss += batch_loss;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(order.size());
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.loss_history.push_back(stats.loss);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

void MetricsAccumulator::add(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw DimensionError("metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(actual.size()) + " targets");
  }
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double e = predicted[k] - actual[k];
    abs_sum_ += std::abs(e);
    sq_sum_ += e * e;
  }
  count_ += predicted.size();
}

Metrics MetricsAccumulator::result() const {
  if (count_ == 0) return {};
  const double n = static_cast<double>(count_);
  return {abs_sum_ / n, std::sqrt(sq_sum_ / n), count_};
}

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
  MetricsAccumulator acc;
  acc.add(predicted, actual);
  return acc.result();
}

std::vector<double> predict_counts(const StefNet& net, const Dataset& data, const Sample& sample) {
  const auto s = materialize(data, sample);
  const auto pred = net.forward(s.demands, s.externals).grid.detach();
  return inverse_scale(pred.data(), data.scaling.demand);
}

Metrics evaluate(const StefNet& net, const Dataset& data, std::span<const Sample> samples) {
  MetricsAccumulator acc;
  for (const auto& s : samples) acc.add(predict_counts(net, data, s), data.counts.at(s.target));
  return acc.result();
}

Metrics persistence_baseline(const Dataset& data, std::span<const Sample> samples) {
  MetricsAccumulator acc;
  for (const auto& s : samples) acc.add(data.counts.at(s.last_input()), data.counts.at(s.target));
  return acc.result();
}

}  // namespace stefnet
