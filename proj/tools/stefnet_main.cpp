// stefnet command-line front end: ingest, synth, train, eval.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "stefnet/config.hpp"
#include "stefnet/data.hpp"
#include "stefnet/model.hpp"
#include "stefnet/training.hpp"

namespace fs = std::filesystem;
using namespace stefnet;

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kInput = 3, kNumeric = 4, kFormat = 5 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const CommonOptions& common) {
  RunConfig config;
  if (!common.config_path.empty()) config = load_run_config(common.config_path, config);
  if (!common.out.empty()) config.out_dir = common.out;
  return config;
}

std::string require_out(const RunConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("no output directory: pass --out or set \"out\" in the config");
  return config.out_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void fail_on_row_errors(const std::vector<RowError>& errors, const std::string& source) {
  if (errors.empty()) return;
  std::ostringstream msg;
  msg << errors.size() << " malformed row(s) in " << source;
  for (std::size_t k = 0; k < std::min<std::size_t>(errors.size(), 20); ++k) {
    msg << "\n  " << source << ":" << errors[k].line << ": " << errors[k].message;
  }
  throw InputError(msg.str());
}

json metrics_json(const Metrics& m) { return {{"mae", m.mae}, {"rmse", m.rmse}, {"cells", m.count}}; }

void print_ingest_summary(const Dataset& d, const std::string& dir) {
  std::cout << "dataset: " << dir << "\n"
            << "frames: " << d.frames() << " (train " << d.split << ")\n"
            << "requests: " << d.total_requests << "\n"
            << "discarded: " << d.discarded << "\n";
}

Dataset run_ingest(const RunConfig& config, const std::string& requests_path, const std::string& externals_path) {
  std::ifstream req(requests_path);
  if (!req) throw InputError("cannot open requests file '" + requests_path + "'");
  std::ifstream ext(externals_path);
  if (!ext) throw InputError("cannot open externals file '" + externals_path + "'");
  const auto requests = read_requests_csv(req, requests_path);
  fail_on_row_errors(requests.errors, requests_path);
  const auto externals = read_externals_csv(ext, externals_path);
  fail_on_row_errors(externals.errors, externals_path);
  return ingest(requests, externals, config.grid, config.ingest).dataset;
}

int cmd_ingest(const CommonOptions& common, const std::string& requests_flag, const std::string& externals_flag) {
  RunConfig config = load_config(common);
  if (!requests_flag.empty()) config.requests_path = requests_flag;
  if (!externals_flag.empty()) config.externals_path = externals_flag;
  if (config.requests_path.empty() || config.externals_path.empty()) {
    throw ConfigError("ingest needs --requests and --externals (or data.requests / data.externals in the config)");
  }
  const auto out = require_out(config);
  const auto dataset = run_ingest(config, config.requests_path, config.externals_path);
  write_dataset_dir(dataset, out);
  print_ingest_summary(dataset, out);
  return kOk;
}

int cmd_synth(const CommonOptions& common) {
  RunConfig config = load_config(common);
  if (common.seed) config.synth.seed = *common.seed;
  const auto out = require_out(config);
  if (config.synth.days == 0) throw ConfigError("synth.days is 0: the dataset would be empty");
  if (config.synth.train_days == 0 || config.synth.train_days > config.synth.days) {
    throw ConfigError("synth.train_days must lie in [1, synth.days]");
  }
  const auto generated = synth_generate(config.synth, config.grid);
  const fs::path raw = fs::path(out) / "raw";
  fs::create_directories(raw);
  {
    std::ofstream f(raw / "requests.csv");
    write_requests_csv(f, generated.requests);
  }
  {
    std::ofstream f(raw / "externals.csv");
    write_externals_csv(f, generated.externals);
  }
  if (!config.ingest.explicit_split) {
    config.ingest.explicit_split = true;
    config.ingest.train_intervals =
        config.synth.train_days * static_cast<std::size_t>(86400 / config.grid.interval_seconds);
  }
  const auto dataset = run_ingest(config, (raw / "requests.csv").string(), (raw / "externals.csv").string());
  write_dataset_dir(dataset, out);
  print_ingest_summary(dataset, out);
  return kOk;
}

struct TrainFlags {
  std::string data;
  std::string fusion;
  bool no_attention = false;
  bool no_external = false;
  std::optional<std::size_t> epochs;
};

int cmd_train(const CommonOptions& common, const TrainFlags& flags) {
  RunConfig config = load_config(common);
  if (common.seed) {
    config.train.seed = *common.seed;
    config.model.init_seed = *common.seed;
  }
  if (!flags.fusion.empty()) config.model.fusion = parse_fusion_mode(flags.fusion);
  if (flags.no_attention) config.model.attention = false;
  if (flags.no_external) config.model.external = false;
  if (flags.epochs) config.train.epochs = *flags.epochs;
  if (flags.data.empty()) throw ConfigError("train needs --data DIR");
  const auto out = require_out(config);
  config.train.validate();

  const Dataset data = read_dataset_dir(flags.data);
  config.model.set_grid(data.grid.width, data.grid.height);
  config.model.validate();
  const auto samples = make_windows(data.frames(), data.externals.size(), config.model.history);
  const auto split = split_chronological(samples, data.split);
  if (split.train.empty()) throw InputError("dataset has no training samples for history " +
                                            std::to_string(config.model.history));

  StefNet net(config.model);
  fs::create_directories(out);
  std::ofstream log(fs::path(out) / "train_log.csv");
  log << "epoch,train_loss,wall_seconds\n" << std::setprecision(17);
  const auto result = train(net, data, split.train, config.train, [&](const EpochStats& s) {
    log << s.epoch << ',' << s.loss << ',' << s.wall_seconds << '\n' << std::flush;
    std::cout << "epoch " << s.epoch << " loss " << s.loss << "\n" << std::flush;
  });
  net.save_file((fs::path(out) / "checkpoint.bin").string());

  const auto census = net.census();
  json report = {{"train_samples", split.train.size()},
                 {"test_samples", split.test.size()},
                 {"epochs", config.train.epochs},
                 {"loss_history", result.loss_history},
                 {"parameters", census.total()},
                 {"census", to_json(census)},
                 {"train", {{"model", metrics_json(evaluate(net, data, split.train))},
                            {"persistence", metrics_json(persistence_baseline(data, split.train))}}},
                 {"model", to_json(config.model)},
                 {"optimizer", to_json(config.train)}};
  write_text(fs::path(out) / "train_report.json", report.dump(2) + "\n");
  std::cout << "parameters: " << census.total() << "\n"
            << "checkpoint: " << (fs::path(out) / "checkpoint.bin").string() << "\n";
  return kOk;
}

void export_attention(const StefNet& net, const Dataset& data, std::span<const Sample> samples, std::size_t count,
                      const fs::path& dir) {
  const auto& mc = net.config();
  if (!mc.attention) throw UsageError("--export-attention needs a model trained with attention");
  fs::create_directories(dir);
  std::ofstream csv(dir / "attention.csv");
  csv << "sample,step,i,j,weight\n" << std::setprecision(17);
  for (std::size_t n = 0; n < std::min(count, samples.size()); ++n) {
    const auto s = materialize(data, samples[n]);
    const auto weights = net.forward(s.demands, s.externals).attention.detach();
    const auto w = weights.data();
    for (std::size_t t = 0; t < mc.history; ++t) {
      double peak = 0.0;
      for (std::size_t c = 0; c < mc.width * mc.height; ++c) peak = std::max(peak, w[t * mc.width * mc.height + c]);
      std::ostringstream name;
      name << "attention_s" << samples[n].target << "_t" << t << ".pgm";
      std::ofstream pgm(dir / name.str(), std::ios::binary);
      // Columns run along i (longitude), rows along j with north at the top.
      pgm << "P5\n" << mc.width << ' ' << mc.height << "\n255\n";
      for (std::size_t jj = mc.height; jj-- > 0;) {
        for (std::size_t i = 0; i < mc.width; ++i) {
          const double v = w[t * mc.width * mc.height + i * mc.height + jj];
          pgm.put(static_cast<char>(peak > 0.0 ? std::lround(255.0 * v / peak) : 0));
        }
      }
      for (std::size_t i = 0; i < mc.width; ++i) {
        for (std::size_t j = 0; j < mc.height; ++j) {
          csv << samples[n].target << ',' << t << ',' << i << ',' << j << ','
              << w[t * mc.width * mc.height + i * mc.height + j] << '\n';
        }
      }
    }
  }
}

int cmd_eval(const CommonOptions& common, const std::string& data_dir, const std::string& checkpoint,
             std::size_t export_count) {
  RunConfig config = load_config(common);
  if (data_dir.empty()) throw ConfigError("eval needs --data DIR");
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint PATH");
  const auto out = require_out(config);
  const Dataset data = read_dataset_dir(data_dir);
  const StefNet net = StefNet::load_file(checkpoint);
  const auto& mc = net.config();
  if (mc.width != data.grid.width || mc.height != data.grid.height) {
    throw ConfigError("checkpoint grid " + std::to_string(mc.width) + "x" + std::to_string(mc.height) +
                      " does not match dataset grid " + std::to_string(data.grid.width) + "x" +
                      std::to_string(data.grid.height));
  }
  const auto samples = make_windows(data.frames(), data.externals.size(), mc.history);
  const auto split = split_chronological(samples, data.split);
  if (split.test.empty()) throw InputError("dataset has no test samples");
  const auto model = evaluate(net, data, split.test);
  const auto baseline = persistence_baseline(data, split.test);
  json report = {{"test_samples", split.test.size()},
                 {"model", metrics_json(model)},
                 {"persistence", metrics_json(baseline)}};
  fs::create_directories(out);
  write_text(fs::path(out) / "eval_report.json", report.dump(2) + "\n");
  if (export_count > 0) export_attention(net, data, split.test, export_count, fs::path(out) / "attention");
  std::cout << std::setprecision(6) << "test samples: " << split.test.size() << "\n"
            << "model        MAE " << model.mae << "  RMSE " << model.rmse << "\n"
            << "persistence  MAE " << baseline.mae << "  RMSE " << baseline.rmse << "\n";
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kConfig;
  if (dynamic_cast<const FormatError*>(&e)) return kFormat;
  if (dynamic_cast<const InputError*>(&e)) return kInput;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stefnet: spatio-temporal demand forecasting"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool seed) {
    sub->add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    if (seed) sub->add_option("--seed", common.seed, "seed overriding the config file");
    sub->add_option("--out", common.out, "output directory");
  };

  std::string requests, externals;
  auto* ingest_cmd = app.add_subcommand("ingest", "grid raw requests and externals into a dataset directory");
  add_common(ingest_cmd, false);
  ingest_cmd->add_option("--requests", requests, "requests CSV");
  ingest_cmd->add_option("--externals", externals, "externals CSV");

  auto* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic dataset directory");
  add_common(synth_cmd, true);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", train_flags.data, "dataset directory")->required();
  train_cmd->add_option("--fusion", train_flags.fusion, "conv or weighted-addition");
  train_cmd->add_flag("--no-attention", train_flags.no_attention, "mean over time instead of attention");
  train_cmd->add_flag("--no-external", train_flags.no_external, "drop the external-factor branch");
  train_cmd->add_option("--epochs", train_flags.epochs, "override train.epochs");

  std::string eval_data, checkpoint;
  std::size_t export_count = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--export-attention", export_count, "export attention maps for the first N test samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(common, requests, externals);
    if (*synth_cmd) return cmd_synth(common);
    if (*train_cmd) return cmd_train(common, train_flags);
    if (*eval_cmd) return cmd_eval(common, eval_data, checkpoint, export_count);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOther;
}
