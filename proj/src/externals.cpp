#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>

#include "detail/csv.hpp"
#include "stefnet/data.hpp"

namespace stefnet {
namespace {

constexpr std::string_view kExternalHeader =
    "interval_epoch,condition_code,temperature,dew_point,humidity,pressure,wind_speed,sunrise_hour,sunset_hour";

constexpr std::int64_t kSecondsPerDay = 86400;

}  // namespace

int day_of_week(std::int64_t epoch) {
  std::int64_t days = epoch / kSecondsPerDay;
  if (epoch % kSecondsPerDay != 0 && epoch < 0) --days;
  // 1970-01-01 was a Thursday, slot 3 when Monday is slot 0.
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

ExternalFile read_externals_csv(std::istream& in, const std::string& source) {
  ExternalFile file;
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(source + ": empty file, expected header '" + std::string(kExternalHeader) + "'");
  }
  if (csv::trim(line) != kExternalHeader) {
    throw InputError(source + ":1: expected header '" + std::string(kExternalHeader) + "'");
  }
  std::size_t line_no = 1;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    ++data_rows;
    const auto f = csv::split(line);
    if (f.size() != 9) {
      file.errors.push_back({line_no, "expected 9 fields, got " + std::to_string(f.size())});
      continue;
    }
    ExternalRecord r;
    auto epoch = csv::parse_number<std::int64_t>(f[0]);
    auto code = csv::parse_number<int>(f[1]);
    std::array<double, 7> numbers{};
    bool ok = epoch && code;
    for (std::size_t k = 0; ok && k < numbers.size(); ++k) {
      auto v = csv::parse_number<double>(f[2 + k]);
      ok = v && std::isfinite(*v);
      if (ok) numbers[k] = *v;
    }
    if (!ok) {
      file.errors.push_back({line_no, "malformed external row"});
      continue;
    }
    if (*code < 1 || *code > static_cast<int>(kWeatherConditions)) {
      file.errors.push_back({line_no, "condition_code " + std::to_string(*code) + " outside 1..10"});
      continue;
    }
    r.interval_epoch = *epoch;
    r.condition_code = *code;
    r.temperature = numbers[0];
    r.dew_point = numbers[1];
    r.humidity = numbers[2];
    r.pressure = numbers[3];
    r.wind_speed = numbers[4];
    r.sunrise_hour = numbers[5];
    r.sunset_hour = numbers[6];
    file.records.push_back(r);
  }
  if (data_rows > 0 && file.records.empty()) {
    throw InputError(source + ": none of " + std::to_string(data_rows) + " rows could be parsed");
  }
  return file;
}

void write_externals_csv(std::ostream& out, std::span<const ExternalRecord> records) {
  out << kExternalHeader << '\n' << std::setprecision(17);
  for (const auto& r : records) {
    out << r.interval_epoch << ',' << r.condition_code << ',' << r.temperature << ',' << r.dew_point << ','
        << r.humidity << ',' << r.pressure << ',' << r.wind_speed << ',' << r.sunrise_hour << ',' << r.sunset_hour
        << '\n';
  }
}

namespace {

// Interval index -> record; later duplicates are ignored.
std::map<std::int64_t, const ExternalRecord*> index_records(std::span<const ExternalRecord> records,
                                                            const GridSpec& grid) {
  std::map<std::int64_t, const ExternalRecord*> by_interval;
  for (const auto& r : records) by_interval.emplace(grid.interval_of(r.interval_epoch), &r);
  return by_interval;
}

}  // namespace

std::array<MinMax, kNumericWeather> fit_weather_scaling(std::span<const ExternalRecord> records, const GridSpec& grid,
                                                        IntervalRange training) {
  std::array<std::vector<double>, kNumericWeather> columns;
  for (const auto& r : records) {
    const auto t = grid.interval_of(r.interval_epoch) - training.start;
    if (t < 0 || t >= static_cast<std::int64_t>(training.count)) continue;
    const auto values = r.numeric();
    for (std::size_t k = 0; k < kNumericWeather; ++k) columns[k].push_back(values[k]);
  }
  std::array<MinMax, kNumericWeather> out;
  for (std::size_t k = 0; k < kNumericWeather; ++k) out[k] = fit_minmax(columns[k]);
  return out;
}

std::vector<FeatureVector> encode_externals(std::span<const ExternalRecord> records, const GridSpec& grid,
                                            IntervalRange range, const ScalingParams& params) {
  const auto by_interval = index_records(records, grid);
  std::vector<FeatureVector> encoded;
  encoded.reserve(range.count);
  std::vector<std::int64_t> missing;
  for (std::size_t t = 0; t < range.count; ++t) {
    const std::int64_t interval = range.start + static_cast<std::int64_t>(t);
    auto it = by_interval.find(interval);
    if (it == by_interval.end()) {
      missing.push_back(interval);
      continue;
    }
    const ExternalRecord& r = *it->second;
    if (r.condition_code < 1 || r.condition_code > static_cast<int>(kWeatherConditions)) {
      throw InputError("condition_code " + std::to_string(r.condition_code) + " outside 1.." +
                       std::to_string(kWeatherConditions) + " at interval " + std::to_string(interval));
    }
    FeatureVector v{};
    v[feature::kCondition + static_cast<std::size_t>(r.condition_code - 1)] = 1.0;
    v[feature::kDayOfWeek + static_cast<std::size_t>(day_of_week(interval * grid.interval_seconds))] = 1.0;
    const auto numeric = r.numeric();
    for (std::size_t k = 0; k < kNumericWeather; ++k) v[feature::kNumeric + k] = params.weather[k].scale(numeric[k]);
    v[feature::kSunrise] = r.sunrise_hour / 24.0;
    v[feature::kSunset] = r.sunset_hour / 24.0;
    encoded.push_back(v);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t k = 0; k < missing.size() && k < 20; ++k) list += (k ? ", " : "") + std::to_string(missing[k]);
    if (missing.size() > 20) list += ", ...";
    throw GapError("external records missing for " + std::to_string(missing.size()) + " interval(s): " + list,
                   std::move(missing));
  }
  return encoded;
}

}  // namespace stefnet
