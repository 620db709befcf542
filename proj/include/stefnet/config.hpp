#pragma once

// JSON (de)serialisation of every configuration block. Parsing is strict:
// unknown keys and wrongly typed values raise ConfigError.

#include <string>

#include "json.hpp"
#include "stefnet/data.hpp"
#include "stefnet/model.hpp"
#include "stefnet/training.hpp"

namespace stefnet {

using json = nlohmann::json;

json to_json(const GridSpec& grid);
GridSpec grid_from_json(const json& j, GridSpec base = {});

// Full model description, as embedded in checkpoints.
json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const json& j);

json to_json(const ParameterCensus& census);

json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const json& j, SynthConfig base = {});

// Everything a CLI run can be configured with.
struct RunConfig {
  GridSpec grid;
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  IngestOptions ingest;
  std::string requests_path;
  std::string externals_path;
  std::string out_dir;
};

// Top-level keys: grid, model, train, synth, data, out. Inside "model" the
// grid-derived fields (width, height, fuzzy_rules, the output dense layer) are
// not accepted; hidden dense layers are given as "dense_hidden".
RunConfig run_config_from_json(const json& j, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});
json to_json(const RunConfig& config);

// The desk-scale configuration used for the synthetic learning benchmark.
RunConfig benchmark_run_config();

}  // namespace stefnet
