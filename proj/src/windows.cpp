#include "stefnet/data.hpp"

namespace stefnet {

std::vector<Sample> make_windows(std::size_t frames, std::size_t externals, std::size_t history) {
  if (externals != frames) {
    throw AlignmentError("external sequence has " + std::to_string(externals) + " intervals but demand series has " +
                         std::to_string(frames));
  }
  if (history == 0) throw UsageError("history length must be at least 1");
  if (frames < history + 1) {
    throw InputError("series of " + std::to_string(frames) + " frames is too short for history " +
                     std::to_string(history));
  }
  std::vector<Sample> samples;
  samples.reserve(frames - history);
  for (std::size_t target = history; target < frames; ++target) samples.push_back({target - history, target});
  return samples;
}

SplitSamples split_chronological(std::span<const Sample> samples, std::size_t boundary) {
  SplitSamples out;
  for (const auto& s : samples) (s.target < boundary ? out.train : out.test).push_back(s);
  return out;
}

SampleTensors materialize(const Dataset& data, const Sample& sample) {
  const std::size_t T = sample.target - sample.first;
  const std::size_t cells = data.grid.cells();
  if (sample.target >= data.frames() || data.externals.size() != data.frames()) {
    throw AlignmentError("sample target " + std::to_string(sample.target) + " outside dataset of " +
                         std::to_string(data.frames()) + " frames");
  }
  std::vector<double> demands;
  demands.reserve(T * cells);
  std::vector<double> externals;
  externals.reserve(T * feature::kCount);
  for (std::size_t t = sample.first; t < sample.target; ++t) {
    demands.insert(demands.end(), data.scaled[t].begin(), data.scaled[t].end());
    externals.insert(externals.end(), data.externals[t].begin(), data.externals[t].end());
  }
  return {Tensor::from({T, data.grid.width, data.grid.height}, std::move(demands)),
          Tensor::from({T, feature::kCount}, std::move(externals)),
          Tensor::from({data.grid.width, data.grid.height}, data.scaled[sample.target])};
}

}  // namespace stefnet
