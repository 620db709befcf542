#include <omp.h>

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>

#include "detail/csv.hpp"
#include "stefnet/data.hpp"

namespace stefnet {

void GridSpec::validate() const {
  if (width == 0 || height == 0) throw ConfigError("grid: width and height must be at least 1");
  if (!(max_lon > min_lon) || !(max_lat > min_lat)) throw ConfigError("grid: bounding box is degenerate");
  if (interval_seconds <= 0) throw ConfigError("grid: interval_seconds must be positive");
}

std::int64_t GridSpec::cell_of(double lon, double lat) const {
  if (!(lon >= min_lon && lon < max_lon && lat >= min_lat && lat < max_lat)) return -1;
  auto i = static_cast<std::int64_t>(std::floor((lon - min_lon) / (max_lon - min_lon) * static_cast<double>(width)));
  auto j = static_cast<std::int64_t>(std::floor((lat - min_lat) / (max_lat - min_lat) * static_cast<double>(height)));
  // Rounding can push a point just below the max edge onto the edge.
  if (i >= static_cast<std::int64_t>(width)) i = static_cast<std::int64_t>(width) - 1;
  if (j >= static_cast<std::int64_t>(height)) j = static_cast<std::int64_t>(height) - 1;
  return i * static_cast<std::int64_t>(height) + j;
}

std::int64_t GridSpec::interval_of(std::int64_t epoch) const {
  std::int64_t q = epoch / interval_seconds;
  if (epoch % interval_seconds != 0 && epoch < 0) --q;
  return q;
}

double DemandSeries::total() const {
  double t = 0.0;
  for (const auto& f : frames)
    for (double v : f) t += v;
  return t;
}

RequestFile read_requests_csv(std::istream& in, const std::string& source) {
  static constexpr std::string_view kHeader = "id,pickup_epoch,lon,lat";
  RequestFile file;
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty file, expected header '" + std::string(kHeader) + "'");
  if (csv::trim(line) != kHeader) {
    throw InputError(source + ":1: expected header '" + std::string(kHeader) + "', got '" + std::string(csv::trim(line)) + "'");
  }
  std::size_t line_no = 1;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    ++data_rows;
    const auto f = csv::split(line);
    if (f.size() != 4) {
      file.errors.push_back({line_no, "expected 4 fields, got " + std::to_string(f.size())});
      continue;
    }
    auto epoch = csv::parse_number<std::int64_t>(f[1]);
    auto lon = csv::parse_number<double>(f[2]);
    auto lat = csv::parse_number<double>(f[3]);
    if (f[0].empty() || !epoch || !lon || !lat || !std::isfinite(*lon) || !std::isfinite(*lat)) {
      file.errors.push_back({line_no, "malformed request row"});
      continue;
    }
    file.requests.push_back({std::string(f[0]), *epoch, *lon, *lat});
  }
  if (data_rows > 0 && file.requests.empty()) {
    throw InputError(source + ": none of " + std::to_string(data_rows) + " rows could be parsed");
  }
  return file;
}

void write_requests_csv(std::ostream& out, std::span<const ServiceRequest> requests) {
  out << "id,pickup_epoch,lon,lat\n";
  out << std::setprecision(17);
  for (const auto& r : requests) out << r.id << ',' << r.pickup_epoch << ',' << r.lon << ',' << r.lat << '\n';
}

DemandSeries grid_demands(std::span<const ServiceRequest> requests, const GridSpec& grid, IntervalRange range) {
  grid.validate();
  if (range.count == 0) throw UsageError("gridding needs a nonempty interval range");
  DemandSeries series;
  series.grid = grid;
  series.start_interval = range.start;
  const std::size_t cells = grid.cells();
  const std::size_t total_cells = range.count * cells;
  std::vector<double> counts(total_cells, 0.0);
  std::size_t discarded = 0;
  const long n = static_cast<long>(requests.size());

#pragma omp parallel if (n > 100000)
  {
    std::vector<double> local(total_cells, 0.0);
    std::size_t local_discarded = 0;
#pragma omp for schedule(static) nowait
    for (long k = 0; k < n; ++k) {
      const auto& r = requests[static_cast<std::size_t>(k)];
      const std::int64_t cell = grid.cell_of(r.lon, r.lat);
      const std::int64_t t = grid.interval_of(r.pickup_epoch) - range.start;
      if (cell < 0 || t < 0 || t >= static_cast<std::int64_t>(range.count)) {
        ++local_discarded;
        continue;
      }
      local[static_cast<std::size_t>(t) * cells + static_cast<std::size_t>(cell)] += 1.0;
    }
    // Integer-valued sums, so the merge order does not matter.
#pragma omp critical
    {
      for (std::size_t i = 0; i < total_cells; ++i) counts[i] += local[i];
      discarded += local_discarded;
    }
  }

  series.frames.resize(range.count);
  for (std::size_t t = 0; t < range.count; ++t) {
    series.frames[t].assign(counts.begin() + static_cast<std::ptrdiff_t>(t * cells),
                            counts.begin() + static_cast<std::ptrdiff_t>((t + 1) * cells));
  }
  series.discarded = discarded;
  return series;
}

}  // namespace stefnet
