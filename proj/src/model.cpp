#include "stefnet/model.hpp"

#include <random>

#include "stefnet/error.hpp"

namespace stefnet {

std::string_view to_string(FusionMode mode) { return mode == FusionMode::Conv ? "conv" : "weighted-addition"; }

std::string_view to_string(DemandHead head) {
  return head == DemandHead::Projection ? "projection" : "single-channel";
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "conv") return FusionMode::Conv;
  if (text == "weighted-addition") return FusionMode::WeightedAddition;
  throw ConfigError("unknown fusion mode '" + std::string(text) + "' (expected conv or weighted-addition)");
}

DemandHead parse_demand_head(std::string_view text) {
  if (text == "projection") return DemandHead::Projection;
  if (text == "single-channel") return DemandHead::SingleChannel;
  throw ConfigError("unknown demand head '" + std::string(text) + "' (expected projection or single-channel)");
}

void ModelConfig::set_grid(std::size_t w, std::size_t h) {
  width = w;
  height = h;
  fuzzy_rules = w * h;
  if (dense_sizes.empty()) dense_sizes.push_back(w * h);
  dense_sizes.back() = w * h;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (width == 0 || height == 0) fail("grid width and height must be positive");
  if (history == 0) fail("history length must be at least 1");
  if (convlstm_layers == 0) fail("need at least one ConvLSTM layer");
  if (convlstm_filters == 0) fail("ConvLSTM filters must be positive");
  for (auto [name, k] : {std::pair{"convlstm_kernel", convlstm_kernel}, std::pair{"external_kernel", external_kernel},
                         std::pair{"fusion_kernel", fusion_kernel}}) {
    if (k % 2 == 0) fail(std::string(name) + " must be odd, got " + std::to_string(k));
    if (k > width || k > height) fail(std::string(name) + " " + std::to_string(k) + " exceeds the grid");
  }
  if (fuzzy_inputs != kExternalFeatureCount) {
    fail("fuzzy_inputs must be " + std::to_string(kExternalFeatureCount) + ", got " + std::to_string(fuzzy_inputs));
  }
  if (fuzzy_rules != cells()) {
    fail("fuzzy_rules (" + std::to_string(fuzzy_rules) + ") must equal width*height (" + std::to_string(cells()) + ")");
  }
  if (dense_sizes.empty()) fail("dense_sizes must not be empty");
  for (auto s : dense_sizes)
    if (s == 0) fail("dense_sizes entries must be positive");
  if (dense_sizes.back() != cells()) {
    fail("last dense size (" + std::to_string(dense_sizes.back()) + ") must equal width*height (" +
         std::to_string(cells()) + ")");
  }
}

Ablation parse_ablation(std::string_view name) {
  if (name == "weighted-addition") return Ablation::WeightedAddition;
  if (name == "no-attention") return Ablation::NoAttention;
  if (name == "no-external") return Ablation::NoExternal;
  throw UsageError("unknown ablation variant '" + std::string(name) +
                   "' (expected weighted-addition, no-attention or no-external)");
}

ModelConfig ablate(ModelConfig config, Ablation variant) {
  switch (variant) {
    case Ablation::WeightedAddition:
      config.fusion = FusionMode::WeightedAddition;
      break;
    case Ablation::NoAttention:
      config.attention = false;
      break;
    case Ablation::NoExternal:
      config.external = false;
      break;
  }
  return config;
}

ParameterCensus parameter_census(const ModelConfig& c) {
  ParameterCensus census;
  const std::size_t k2 = c.convlstm_kernel * c.convlstm_kernel;
  const bool projection = c.demand_head == DemandHead::Projection;
  for (std::size_t layer = 0; layer < c.convlstm_layers; ++layer) {
    const std::size_t in = layer == 0 ? 1 : c.convlstm_filters;
    const std::size_t hidden = (layer + 1 == c.convlstm_layers && !projection) ? 1 : c.convlstm_filters;
    census.demand += k2 * (in + hidden) * 4 * hidden + 4 * hidden;
  }
  if (projection) census.demand += k2 * c.convlstm_filters + 1;

  if (c.external) {
    census.fuzzy = 2 * c.fuzzy_inputs * c.fuzzy_rules;
    census.external_conv = c.external_kernel * c.external_kernel + 1;
    census.fusion = c.fusion == FusionMode::Conv ? c.fusion_kernel * c.fusion_kernel * 2 + 1 : 2 * c.cells();
  }
  const std::size_t u = c.cells();
  census.bilstm = 2 * ((u + u) * 4 * u + 4 * u);
  census.attention = c.attention ? c.history : 0;
  std::size_t in = u;
  for (auto size : c.dense_sizes) {
    census.dense += in * size + size;
    in = size;
  }
  return census;
}

namespace {

// Each component draws from its own stream so that toggling one component
// leaves the initialisation of the others unchanged.
std::mt19937_64 component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return std::mt19937_64(seq);
}

enum Component : std::uint64_t { kDemand = 1, kFuzzy, kExternalConv, kFusion, kBiLstm, kAttention, kDense };

const ModelConfig& validated(const ModelConfig& config) {
  config.validate();
  return config;
}

template <typename Layer, typename... Args>
Layer build(std::uint64_t seed, Component component, Args&&... args) {
  auto rng = component_rng(seed, component);
  return Layer(std::forward<Args>(args)..., rng);
}

}  // namespace

StefNet::StefNet(ModelConfig config)
    : config_(validated(config)),
      demand_(build<StackedConvLstm>(config_.init_seed, kDemand, config_.convlstm_layers, config_.convlstm_filters,
                                     config_.convlstm_kernel, config_.demand_head == DemandHead::Projection)),
      bilstm_(build<BiLstm>(config_.init_seed, kBiLstm, config_.cells())),
      dense_(build<DenseStack>(config_.init_seed, kDense, config_.cells(), config_.dense_sizes)) {
  if (config_.external) {
    fuzzy_.emplace(build<FuzzyLayer>(config_.init_seed, kFuzzy, config_.fuzzy_inputs, config_.fuzzy_rules));
    auto rng = component_rng(config_.init_seed, kExternalConv);
    const std::size_t k = config_.external_kernel;
    external_kernel_ = fan_in_parameter({k, k, 1, 1}, k * k, rng);
    external_bias_ = fan_in_parameter({1}, k * k, rng);
    if (config_.fusion == FusionMode::Conv) {
      conv_fusion_.emplace(build<ConvFusion>(config_.init_seed, kFusion, config_.fusion_kernel));
    } else {
      weighted_fusion_.emplace(build<WeightedAdditionFusion>(config_.init_seed, kFusion, config_.width, config_.height));
    }
  }
  if (config_.attention) attention_.emplace(build<TemporalAttention>(config_.init_seed, kAttention, config_.history));

  demand_.collect("demand", params_);
  if (fuzzy_) {
    fuzzy_->collect("external.fuzzy", params_);
    params_.push_back({"external.conv.kernel", external_kernel_});
    params_.push_back({"external.conv.bias", external_bias_});
  }
  if (conv_fusion_) conv_fusion_->collect("fusion", params_);
  if (weighted_fusion_) weighted_fusion_->collect("fusion", params_);
  bilstm_.collect("bilstm", params_);
  if (attention_) attention_->collect("attention", params_);
  dense_.collect("dense", params_);
}

ParameterCensus StefNet::census() const {
  // Counted from the constructed tensors, grouped by name prefix.
  ParameterCensus c;
  for (const auto& p : params_) {
    const auto n = p.tensor.numel();
    const std::string_view name = p.name;
    if (name.starts_with("demand.")) c.demand += n;
    else if (name.starts_with("external.fuzzy.")) c.fuzzy += n;
    else if (name.starts_with("external.conv.")) c.external_conv += n;
    else if (name.starts_with("fusion.")) c.fusion += n;
    else if (name.starts_with("bilstm.")) c.bilstm += n;
    else if (name.starts_with("attention.")) c.attention += n;
    else if (name.starts_with("dense.")) c.dense += n;
  }
  return c;
}

void StefNet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Prediction StefNet::forward(const Tensor& demands, const Tensor& externals) const {
  const std::size_t T = config_.history, W = config_.width, H = config_.height, u = config_.cells();
  if (demands.shape() != Shape{T, W, H}) {
    throw DimensionError("demand input must be " + shape_str({T, W, H}) + ", got " + shape_str(demands.shape()));
  }
  if (config_.external && externals.shape() != Shape{T, config_.fuzzy_inputs}) {
    throw DimensionError("external input must be " + shape_str({T, config_.fuzzy_inputs}) + ", got " +
                         (externals.defined() ? shape_str(externals.shape()) : std::string("undefined")));
  }

  std::vector<Tensor> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) frames.push_back(reshape(narrow(demands, 0, t, 1), {W, H, 1}));
  const auto demand_maps = demand_.forward_steps(frames);

  // Fusion stays within each time step.
  std::vector<Tensor> fused;
  fused.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto demand_map = reshape(demand_maps[t], {W, H});
    Tensor step = demand_map;
    if (config_.external) {
      auto features = reshape(narrow(externals, 0, t, 1), {config_.fuzzy_inputs});
      auto rules = fuzzy_->forward(features);
      auto external_map = reshape(conv2d(reshape(rules, {W, H, 1}), external_kernel_, external_bias_), {W, H});
      step = conv_fusion_ ? conv_fusion_->forward(demand_map, external_map)
                          : weighted_fusion_->forward(demand_map, external_map);
    }
    fused.push_back(reshape(step, {1, u}));
  }

  auto attended = bilstm_attend(bilstm_, attention_ ? &*attention_ : nullptr, fused);
  auto out = dense_.forward(reshape(attended.context, {1, u}));
  return {reshape(out, {W, H}), attended.weights};
}

}  // namespace stefnet
