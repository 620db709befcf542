#pragma once

// Data pipeline: gridding raw service requests into demand snapshots,
// encoding external factors, min-max scaling, windowing into samples, and a
// seeded synthetic generator standing in for proprietary trip records.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stefnet/error.hpp"
#include "stefnet/tensor.hpp"

namespace stefnet {

// Missing external intervals; `missing` holds absolute interval indices.
class GapError : public InputError {
 public:
  GapError(const std::string& what, std::vector<std::int64_t> missing)
      : InputError(what), missing(std::move(missing)) {}
  std::vector<std::int64_t> missing;
};

class AlignmentError : public InputError {
 public:
  using InputError::InputError;
};

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

// ---- grid ----------------------------------------------------------------------

// Equal-size cells in degrees. Cell i runs along longitude (W), j along
// latitude (H); both axes are half-open, so a point on a cell's max edge
// belongs to the next cell and points on the box's max edge are outside.
struct GridSpec {
  double min_lon = 104.0420;
  double max_lon = 104.1290;
  double min_lat = 30.6520;
  double max_lat = 30.7270;
  std::size_t width = 20;
  std::size_t height = 20;
  std::int64_t interval_seconds = 1800;

  std::size_t cells() const { return width * height; }
  void validate() const;
  // Flat index i*height + j, or -1 when outside the box.
  std::int64_t cell_of(double lon, double lat) const;
  std::int64_t interval_of(std::int64_t epoch) const;

  bool operator==(const GridSpec&) const = default;
};

struct ServiceRequest {
  std::string id;
  std::int64_t pickup_epoch = 0;
  double lon = 0.0;
  double lat = 0.0;
};

struct RequestFile {
  std::vector<ServiceRequest> requests;
  std::vector<RowError> errors;
};

// Header `id,pickup_epoch,lon,lat`. Malformed rows are collected in `errors`;
// a wrong header or a file where no data row parses throws InputError.
RequestFile read_requests_csv(std::istream& in, const std::string& source);
void write_requests_csv(std::ostream& out, std::span<const ServiceRequest> requests);

// Absolute interval indices [start, start + count).
struct IntervalRange {
  std::int64_t start = 0;
  std::size_t count = 0;
};

using Frame = std::vector<double>;  // W*H values, row-major over (i, j)

struct DemandSeries {
  GridSpec grid;
  std::int64_t start_interval = 0;
  std::vector<Frame> frames;
  std::size_t discarded = 0;  // out-of-box or out-of-range requests

  double total() const;
};

// Counts requests per (interval, cell). Counting is split across OpenMP
// threads with private frames merged by addition.
DemandSeries grid_demands(std::span<const ServiceRequest> requests, const GridSpec& grid, IntervalRange range);

// ---- externals -------------------------------------------------------------------

inline constexpr std::size_t kWeatherConditions = 10;
inline constexpr std::size_t kNumericWeather = 5;

struct ExternalRecord {
  std::int64_t interval_epoch = 0;
  int condition_code = 1;  // 1..10
  double temperature = 0.0;
  double dew_point = 0.0;
  double humidity = 0.0;
  double pressure = 0.0;
  double wind_speed = 0.0;
  double sunrise_hour = 6.0;
  double sunset_hour = 18.0;

  std::array<double, kNumericWeather> numeric() const {
    return {temperature, dew_point, humidity, pressure, wind_speed};
  }
};

struct ExternalFile {
  std::vector<ExternalRecord> records;
  std::vector<RowError> errors;
};

// Header `interval_epoch,condition_code,temperature,dew_point,humidity,
// pressure,wind_speed,sunrise_hour,sunset_hour`. Condition codes outside 1..10
// are row errors.
ExternalFile read_externals_csv(std::istream& in, const std::string& source);
void write_externals_csv(std::ostream& out, std::span<const ExternalRecord> records);

// Encoded layout of the 24 external features.
namespace feature {
inline constexpr std::size_t kCondition = 0;   // 10-way one-hot, code c -> slot c-1
inline constexpr std::size_t kDayOfWeek = 10;  // 7-way one-hot, Monday first
inline constexpr std::size_t kNumeric = 17;    // temperature, dew point, humidity, pressure, wind speed
inline constexpr std::size_t kSunrise = 22;    // fraction of day
inline constexpr std::size_t kSunset = 23;     // fraction of day
inline constexpr std::size_t kCount = 24;
}  // namespace feature

using FeatureVector = std::array<double, feature::kCount>;

// 0 = Monday ... 6 = Sunday, UTC.
int day_of_week(std::int64_t epoch);

// ---- scaling ----------------------------------------------------------------------

// Affine map [min, max] -> [0, 1]; a degenerate range maps everything to 0.
struct MinMax {
  double min = 0.0;
  double max = 0.0;

  double scale(double x) const;
  // Inverse map, clamped below at 0. Degenerate ranges return min.
  double inverse(double y) const;
};

MinMax fit_minmax(std::span<const double> values);

struct ScalingParams {
  MinMax demand;
  std::array<MinMax, kNumericWeather> weather;
};

std::vector<double> scale(std::span<const double> values, const MinMax& params);
std::vector<double> inverse_scale(std::span<const double> values, const MinMax& params);

// Aligns records to every interval in `range` and encodes them. Numeric
// weather uses `params.weather`. Throws GapError listing intervals without a
// record.
std::vector<FeatureVector> encode_externals(std::span<const ExternalRecord> records, const GridSpec& grid,
                                            IntervalRange range, const ScalingParams& params);

// Weather min/max over the records whose interval lies in `training`.
std::array<MinMax, kNumericWeather> fit_weather_scaling(std::span<const ExternalRecord> records,
                                                        const GridSpec& grid, IntervalRange training);

// ---- windows -------------------------------------------------------------------------

// Inputs are frames [target - history, target); the target frame follows the
// last input.
struct Sample {
  std::size_t first = 0;
  std::size_t target = 0;
  std::size_t last_input() const { return target - 1; }
};

// One sample per target index in [history, frames). Throws AlignmentError when
// the external sequence length differs from the demand sequence.
std::vector<Sample> make_windows(std::size_t frames, std::size_t externals, std::size_t history);

struct SplitSamples {
  std::vector<Sample> train;
  std::vector<Sample> test;
};
// Chronological: samples whose target precedes `boundary` train, the rest test.
SplitSamples split_chronological(std::span<const Sample> samples, std::size_t boundary);

// ---- dataset -------------------------------------------------------------------------------

struct Dataset {
  GridSpec grid;
  std::int64_t start_interval = 0;
  std::size_t split = 0;  // frames [0, split) are the training split
  std::size_t discarded = 0;
  std::size_t total_requests = 0;
  ScalingParams scaling;
  std::vector<Frame> counts;                // raw demand counts
  std::vector<Frame> scaled;                // counts scaled with scaling.demand
  std::vector<FeatureVector> externals;     // encoded, aligned with frames

  std::size_t frames() const { return counts.size(); }
};

struct SampleTensors {
  Tensor demands;    // [T,W,H] scaled
  Tensor externals;  // [T,24]
  Tensor target;     // [W,H] scaled
};
SampleTensors materialize(const Dataset& data, const Sample& sample);

struct IngestOptions {
  // Defaults to the span covered by the external records.
  std::int64_t start_interval = 0;
  std::size_t intervals = 0;
  // Defaults to round(intervals * 23 / 30).
  std::size_t train_intervals = 0;
  bool explicit_range = false;
  bool explicit_split = false;
};

struct IngestReport {
  Dataset dataset;
  std::vector<RowError> request_errors;
  std::vector<RowError> external_errors;
};

IngestReport ingest(const RequestFile& requests, const ExternalFile& externals, const GridSpec& grid,
                    const IngestOptions& options);

// Dataset directory: manifest.json, demands.csv, externals.csv.
void write_dataset_dir(const Dataset& data, const std::string& dir);
Dataset read_dataset_dir(const std::string& dir);

// ---- synthetic generator ------------------------------------------------------------------

struct RainSpell {
  std::size_t first_interval = 0;  // relative to the generated range
  std::size_t end_interval = 0;    // exclusive
};

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t days = 5;
  std::size_t train_days = 4;
  std::int64_t start_epoch = 1477958400;  // 2016-11-01 00:00 UTC
  double peak_rate = 12.0;                // expected requests per cell per interval at a bump's centre
  std::size_t bumps = 3;
  double bump_sigma = 0.15;  // fraction of the grid side
  double drift = 0.18;       // sinusoidal drift amplitude, fraction of the grid side
  double rain_probability = 0.4;
  double rain_factor = 0.6;  // demand multiplier while it rains
  // Explicit rain spells; when empty a seeded daily script is drawn.
  std::vector<RainSpell> weather_script;
  bool explicit_script = false;
};

struct SynthOutput {
  std::vector<ServiceRequest> requests;
  std::vector<ExternalRecord> externals;
  std::vector<bool> rain;  // per interval
};

SynthOutput synth_generate(const SynthConfig& config, const GridSpec& grid);

// Expected requests over the whole grid in relative interval t.
double synth_expected_total(const SynthConfig& config, const GridSpec& grid, std::size_t interval, bool rainy);

}  // namespace stefnet
