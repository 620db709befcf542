#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stefnet/layers.hpp"
#include "stefnet/tensor.hpp"

namespace stefnet {

enum class FusionMode { Conv, WeightedAddition };
// Projection: ConvLSTM layers all keep `filters` channels and a 1-filter
// convolution maps each step to one channel. SingleChannel: the last ConvLSTM
// layer itself outputs one channel.
enum class DemandHead { Projection, SingleChannel };

std::string_view to_string(FusionMode mode);
std::string_view to_string(DemandHead head);
FusionMode parse_fusion_mode(std::string_view text);
DemandHead parse_demand_head(std::string_view text);

inline constexpr std::size_t kExternalFeatureCount = 24;

struct ModelConfig {
  std::size_t width = 20;
  std::size_t height = 20;
  std::size_t history = 8;  // k = T
  std::size_t convlstm_layers = 3;
  std::size_t convlstm_filters = 64;
  std::size_t convlstm_kernel = 3;
  DemandHead demand_head = DemandHead::Projection;
  std::size_t fuzzy_inputs = kExternalFeatureCount;
  std::size_t fuzzy_rules = 400;
  std::size_t external_kernel = 3;
  FusionMode fusion = FusionMode::Conv;
  std::size_t fusion_kernel = 3;
  bool attention = true;
  bool external = true;
  std::vector<std::size_t> dense_sizes{100, 200, 400};
  std::uint64_t init_seed = 1;

  std::size_t cells() const { return width * height; }

  // Resizes everything tied to the grid: rule count and the last dense layer.
  void set_grid(std::size_t w, std::size_t h);
  // Throws ConfigError when fields are inconsistent.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class Ablation { WeightedAddition, NoAttention, NoExternal };
Ablation parse_ablation(std::string_view name);
ModelConfig ablate(ModelConfig config, Ablation variant);

// Parameter counts per component, computed from the config alone.
struct ParameterCensus {
  std::size_t demand = 0;
  std::size_t fuzzy = 0;
  std::size_t external_conv = 0;
  std::size_t fusion = 0;
  std::size_t bilstm = 0;
  std::size_t attention = 0;
  std::size_t dense = 0;
  std::size_t total() const { return demand + fuzzy + external_conv + fusion + bilstm + attention + dense; }
};
ParameterCensus parameter_census(const ModelConfig& config);

struct Prediction {
  Tensor grid;       // [W,H], scaled demand space
  Tensor attention;  // [T,W*H]; undefined without attention
};

class StefNet {
 public:
  explicit StefNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // demands [T,W,H] scaled to [0,1]; externals [T,24] encoded features.
  Prediction forward(const Tensor& demands, const Tensor& externals) const;

  // All trainable tensors in a fixed order with stable names.
  const ParamList& parameters() const { return params_; }
  ParameterCensus census() const;
  void zero_grad();

  // Versioned binary checkpoint. See docs in README for the layout.
  void save(std::ostream& out) const;
  std::vector<std::uint8_t> save_bytes() const;
  static StefNet load(std::istream& in);
  static StefNet load_bytes(const std::vector<std::uint8_t>& bytes);
  void save_file(const std::string& path) const;
  static StefNet load_file(const std::string& path);

 private:
  ModelConfig config_;
  StackedConvLstm demand_;
  std::optional<FuzzyLayer> fuzzy_;
  Tensor external_kernel_;  // [k,k,1,1]
  Tensor external_bias_;    // [1]
  std::optional<ConvFusion> conv_fusion_;
  std::optional<WeightedAdditionFusion> weighted_fusion_;
  BiLstm bilstm_;
  std::optional<TemporalAttention> attention_;
  DenseStack dense_;
  ParamList params_;
};

}  // namespace stefnet
