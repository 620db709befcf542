#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "detail/csv.hpp"
#include "stefnet/config.hpp"
#include "stefnet/data.hpp"

namespace stefnet {
namespace {

constexpr int kDatasetVersion = 1;
constexpr std::array<const char*, kNumericWeather> kWeatherNames = {"temperature", "dew_point", "humidity", "pressure",
                                                                    "wind_speed"};

void rescale(Dataset& d) {
  d.scaled.clear();
  d.scaled.reserve(d.counts.size());
  for (const auto& f : d.counts) d.scaled.push_back(scale(f, d.scaling.demand));
}

}  // namespace

IngestReport ingest(const RequestFile& requests, const ExternalFile& externals, const GridSpec& grid,
                    const IngestOptions& options) {
  grid.validate();
  IngestReport report;
  report.request_errors = requests.errors;
  report.external_errors = externals.errors;

  IntervalRange range{options.start_interval, options.intervals};
  if (!options.explicit_range) {
    if (externals.records.empty()) throw InputError("no external records to derive the interval range from");
    std::int64_t lo = grid.interval_of(externals.records.front().interval_epoch);
    std::int64_t hi = lo;
    for (const auto& r : externals.records) {
      lo = std::min(lo, grid.interval_of(r.interval_epoch));
      hi = std::max(hi, grid.interval_of(r.interval_epoch));
    }
    range = {lo, static_cast<std::size_t>(hi - lo + 1)};
  }
  if (range.count == 0) throw InputError("dataset covers no intervals");
  const std::size_t split = options.explicit_split
                                ? options.train_intervals
                                : static_cast<std::size_t>(std::llround(static_cast<double>(range.count) * 23.0 / 30.0));
  if (split == 0 || split > range.count) {
    throw ConfigError("training split of " + std::to_string(split) + " intervals must lie in [1, " +
                      std::to_string(range.count) + "]");
  }

  Dataset& d = report.dataset;
  d.grid = grid;
  d.start_interval = range.start;
  d.split = split;
  d.total_requests = requests.requests.size();

  auto series = grid_demands(requests.requests, grid, range);
  d.discarded = series.discarded;
  d.counts = std::move(series.frames);

  // Scaling comes from the training split only.
  std::vector<double> train_values;
  train_values.reserve(split * grid.cells());
  for (std::size_t t = 0; t < split; ++t) train_values.insert(train_values.end(), d.counts[t].begin(), d.counts[t].end());
  d.scaling.demand = fit_minmax(train_values);
  d.scaling.weather = fit_weather_scaling(externals.records, grid, {range.start, split});
  d.externals = encode_externals(externals.records, grid, range, d.scaling);
  rescale(d);
  return report;
}

void write_dataset_dir(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json weather = json::array();
  for (std::size_t k = 0; k < kNumericWeather; ++k) {
    weather.push_back({{"name", kWeatherNames[k]}, {"min", d.scaling.weather[k].min}, {"max", d.scaling.weather[k].max}});
  }
  double total = 0.0;
  for (const auto& f : d.counts)
    for (double v : f) total += v;
  json manifest = {{"format", "stefnet-dataset"},
                   {"version", kDatasetVersion},
                   {"grid", to_json(d.grid)},
                   {"start_interval", d.start_interval},
                   {"frames", d.frames()},
                   {"split", d.split},
                   {"total_requests", d.total_requests},
                   {"gridded_requests", total},
                   {"discarded", d.discarded},
                   {"scaling", {{"demand", {{"min", d.scaling.demand.min}, {"max", d.scaling.demand.max}}},
                                {"weather", weather}}}};
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw InputError("cannot write " + (fs::path(dir) / "manifest.json").string());
  }
  {
    std::ofstream out(fs::path(dir) / "demands.csv");
    out << "t";
    for (std::size_t c = 0; c < d.grid.cells(); ++c) out << ",c" << c;
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < d.frames(); ++t) {
      out << t;
      for (double v : d.counts[t]) out << ',' << v;
      out << '\n';
    }
    if (!out) throw InputError("cannot write demands.csv in " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "externals.csv");
    out << "t";
    for (std::size_t k = 0; k < feature::kCount; ++k) out << ",f" << k;
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < d.externals.size(); ++t) {
      out << t;
      for (double v : d.externals[t]) out << ',' << v;
      out << '\n';
    }
    if (!out) throw InputError("cannot write externals.csv in " + dir);
  }
}

namespace {

std::vector<std::vector<double>> read_table(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != columns + 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns + 1) +
                        " fields");
    }
    auto t = csv::parse_number<std::size_t>(f[0]);
    if (!t || *t != rows.size()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad row index");
    std::vector<double> row(columns);
    for (std::size_t k = 0; k < columns; ++k) {
      auto v = csv::parse_number<double>(f[k + 1]);
      if (!v) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      row[k] = *v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset read_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw InputError("no dataset manifest at " + manifest_path.string());
  Dataset d;
  try {
    const json m = json::parse(in);
    if (m.at("format") != "stefnet-dataset" || m.at("version") != kDatasetVersion) {
      throw FormatError(manifest_path.string() + ": unsupported dataset format");
    }
    d.grid = grid_from_json(m.at("grid"));
    d.start_interval = m.at("start_interval").get<std::int64_t>();
    d.split = m.at("split").get<std::size_t>();
    d.total_requests = m.at("total_requests").get<std::size_t>();
    d.discarded = m.at("discarded").get<std::size_t>();
    d.scaling.demand = {m.at("scaling").at("demand").at("min").get<double>(),
                        m.at("scaling").at("demand").at("max").get<double>()};
    const auto& weather = m.at("scaling").at("weather");
    if (weather.size() != kNumericWeather) throw FormatError(manifest_path.string() + ": bad weather scaling");
    for (std::size_t k = 0; k < kNumericWeather; ++k) {
      d.scaling.weather[k] = {weather[k].at("min").get<double>(), weather[k].at("max").get<double>()};
    }
    const auto frames = m.at("frames").get<std::size_t>();
    d.counts = read_table(fs::path(dir) / "demands.csv", d.grid.cells());
    const auto ext = read_table(fs::path(dir) / "externals.csv", feature::kCount);
    if (d.counts.size() != frames || ext.size() != frames) {
      throw FormatError(dir + ": manifest lists " + std::to_string(frames) + " frames but tables disagree");
    }
    for (const auto& row : ext) {
      FeatureVector v{};
      std::copy(row.begin(), row.end(), v.begin());
      d.externals.push_back(v);
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (d.split == 0 || d.split > d.frames()) throw FormatError(manifest_path.string() + ": split outside the series");
  rescale(d);
  return d;
}

}  // namespace stefnet
