#include "stefnet/config.hpp"

#include <fstream>
#include <set>

#include "stefnet/error.hpp"

namespace stefnet {
namespace {

// Reads keys of one JSON object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void get(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::int64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      out = v->get<std::int64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  [[noreturn]] void fail(const char* key, const std::string& msg) const {
    throw ConfigError("config: " + name_ + "." + key + ": " + msg);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_model_fields(Section& s, ModelConfig& c) {
  s.get("history", c.history);
  s.get("convlstm_layers", c.convlstm_layers);
  s.get("convlstm_filters", c.convlstm_filters);
  s.get("convlstm_kernel", c.convlstm_kernel);
  if (const json* v = s.take("demand_head")) {
    if (!v->is_string()) s.fail("demand_head", "expected a string");
    c.demand_head = parse_demand_head(v->get<std::string>());
  }
  s.get("external_kernel", c.external_kernel);
  if (const json* v = s.take("fusion")) {
    if (!v->is_string()) s.fail("fusion", "expected a string");
    c.fusion = parse_fusion_mode(v->get<std::string>());
  }
  s.get("fusion_kernel", c.fusion_kernel);
  s.get("attention", c.attention);
  s.get("external", c.external);
  s.get("init_seed", c.init_seed);
}

}  // namespace

json to_json(const GridSpec& g) {
  return {{"min_lon", g.min_lon}, {"max_lon", g.max_lon}, {"min_lat", g.min_lat},       {"max_lat", g.max_lat},
          {"width", g.width},     {"height", g.height},   {"interval_seconds", g.interval_seconds}};
}

GridSpec grid_from_json(const json& j, GridSpec g) {
  Section s(j, "grid");
  s.get("min_lon", g.min_lon);
  s.get("max_lon", g.max_lon);
  s.get("min_lat", g.min_lat);
  s.get("max_lat", g.max_lat);
  s.get("width", g.width);
  s.get("height", g.height);
  s.get("interval_seconds", g.interval_seconds);
  s.finish();
  g.validate();
  return g;
}

json to_json(const ModelConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"history", c.history},
          {"convlstm_layers", c.convlstm_layers},
          {"convlstm_filters", c.convlstm_filters},
          {"convlstm_kernel", c.convlstm_kernel},
          {"demand_head", std::string(to_string(c.demand_head))},
          {"fuzzy_inputs", c.fuzzy_inputs},
          {"fuzzy_rules", c.fuzzy_rules},
          {"external_kernel", c.external_kernel},
          {"fusion", std::string(to_string(c.fusion))},
          {"fusion_kernel", c.fusion_kernel},
          {"attention", c.attention},
          {"external", c.external},
          {"dense_sizes", c.dense_sizes},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  Section s(j, "model");
  s.get("width", c.width);
  s.get("height", c.height);
  s.get("fuzzy_inputs", c.fuzzy_inputs);
  s.get("fuzzy_rules", c.fuzzy_rules);
  s.get("dense_sizes", c.dense_sizes);
  read_model_fields(s, c);
  s.finish();
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
}

json to_json(const ParameterCensus& c) {
  return {{"demand", c.demand}, {"fuzzy", c.fuzzy}, {"external_conv", c.external_conv}, {"fusion", c.fusion},
          {"bilstm", c.bilstm}, {"attention", c.attention}, {"dense", c.dense}, {"total", c.total()}};
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},           {"beta2", c.beta2},   {"epsilon", c.epsilon},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  Section s(j, "train");
  s.get("batch_size", c.batch_size);
  s.get("epochs", c.epochs);
  s.get("learning_rate", c.learning_rate);
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("epsilon", c.epsilon);
  s.get("seed", c.seed);
  s.finish();
  c.validate();
  return c;
}

json to_json(const SynthConfig& c) {
  json script = json::array();
  for (const auto& spell : c.weather_script) script.push_back({spell.first_interval, spell.end_interval});
  json j = {{"seed", c.seed},
            {"days", c.days},
            {"train_days", c.train_days},
            {"start_epoch", c.start_epoch},
            {"peak_rate", c.peak_rate},
            {"bumps", c.bumps},
            {"bump_sigma", c.bump_sigma},
            {"drift", c.drift},
            {"rain_probability", c.rain_probability},
            {"rain_factor", c.rain_factor}};
  if (c.explicit_script) j["weather_script"] = script;
  return j;
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  Section s(j, "synth");
  s.get("seed", c.seed);
  s.get("days", c.days);
  s.get("train_days", c.train_days);
  s.get("start_epoch", c.start_epoch);
  s.get("peak_rate", c.peak_rate);
  s.get("bumps", c.bumps);
  s.get("bump_sigma", c.bump_sigma);
  s.get("drift", c.drift);
  s.get("rain_probability", c.rain_probability);
  s.get("rain_factor", c.rain_factor);
  if (const json* v = s.take("weather_script")) {
    const char* expect = "expected an array of [first_interval, end_interval] pairs";
    if (!v->is_array()) s.fail("weather_script", expect);
    c.weather_script.clear();
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
        s.fail("weather_script", expect);
      }
      c.weather_script.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    c.explicit_script = true;
  }
  s.finish();
  if (c.days == 0) throw ConfigError("synth.days is 0: the dataset would be empty");
  if (c.train_days > c.days) throw ConfigError("synth.train_days exceeds synth.days");
  if (c.peak_rate < 0.0 || c.bump_sigma <= 0.0) throw ConfigError("synth.peak_rate must be >= 0 and bump_sigma > 0");
  if (c.rain_probability < 0.0 || c.rain_probability > 1.0) throw ConfigError("synth.rain_probability outside [0, 1]");
  if (c.rain_factor < 0.0 || c.rain_factor > 1.0) throw ConfigError("synth.rain_factor outside [0, 1]");
  return c;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  Section top(j, "config");
  if (const json* v = top.take("grid")) c.grid = grid_from_json(*v, c.grid);
  if (const json* v = top.take("model")) {
    Section s(*v, "model");
    read_model_fields(s, c.model);
    if (const json* hidden = s.take("dense_hidden")) {
      std::vector<std::size_t> sizes;
      if (!hidden->is_array()) s.fail("dense_hidden", "expected an array of positive integers");
      for (const auto& e : *hidden) {
        if (!e.is_number_unsigned() || e.get<std::size_t>() == 0) {
          s.fail("dense_hidden", "expected an array of positive integers");
        }
        sizes.push_back(e.get<std::size_t>());
      }
      sizes.push_back(c.grid.cells());
      c.model.dense_sizes = sizes;
    }
    s.finish();
  }
  if (const json* v = top.take("train")) c.train = train_config_from_json(*v, c.train);
  if (const json* v = top.take("synth")) c.synth = synth_config_from_json(*v, c.synth);
  if (const json* v = top.take("data")) {
    Section s(*v, "data");
    s.get("requests", c.requests_path);
    s.get("externals", c.externals_path);
    if (s.has("start_interval") || s.has("intervals")) c.ingest.explicit_range = true;
    if (s.has("train_intervals")) c.ingest.explicit_split = true;
    s.get("start_interval", c.ingest.start_interval);
    s.get("intervals", c.ingest.intervals);
    s.get("train_intervals", c.ingest.train_intervals);
    s.finish();
  }
  top.get("out", c.out_dir);
  top.finish();
  c.model.set_grid(c.grid.width, c.grid.height);
  if (top.has("model")) c.model.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

json to_json(const RunConfig& c) {
  json model = to_json(c.model);
  for (const char* derived : {"width", "height", "fuzzy_inputs", "fuzzy_rules", "dense_sizes"}) model.erase(derived);
  std::vector<std::size_t> hidden(c.model.dense_sizes.begin(), c.model.dense_sizes.end() - 1);
  model["dense_hidden"] = hidden;
  json data = {{"requests", c.requests_path}, {"externals", c.externals_path}};
  if (c.ingest.explicit_range) {
    data["start_interval"] = c.ingest.start_interval;
    data["intervals"] = c.ingest.intervals;
  }
  if (c.ingest.explicit_split) data["train_intervals"] = c.ingest.train_intervals;
  return {{"grid", to_json(c.grid)}, {"model", model},  {"train", to_json(c.train)},
          {"synth", to_json(c.synth)}, {"data", data}, {"out", c.out_dir}};
}

RunConfig benchmark_run_config() {
  RunConfig c;
  c.grid.width = 10;
  c.grid.height = 10;
  c.synth.days = 5;
  c.synth.train_days = 4;
  c.model.history = 8;
  c.model.convlstm_filters = 8;
  c.model.dense_sizes = {100, 200, 100};
  c.model.set_grid(c.grid.width, c.grid.height);
  c.train.batch_size = 16;
  c.train.epochs = 30;
  c.train.learning_rate = 1e-3;
  return c;
}

}  // namespace stefnet
