#include <cmath>
#include <numbers>
#include <random>

#include "stefnet/data.hpp"

namespace stefnet {
namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

struct Bump {
  double x = 0.5;  // fraction of the grid width
  double y = 0.5;
  double phase = 0.0;
  double weight = 1.0;
};

std::vector<Bump> draw_bumps(const SynthConfig& config) {
  std::seed_seq seq{config.seed, std::uint64_t{1}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> centre(0.2, 0.8);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> weight(0.6, 1.0);
  std::vector<Bump> bumps(config.bumps);
  for (auto& b : bumps) {
    b.x = centre(rng);
    b.y = centre(rng);
    b.phase = phase(rng);
    b.weight = weight(rng);
  }
  return bumps;
}

std::size_t intervals_per_day(const GridSpec& grid) {
  return static_cast<std::size_t>(kSecondsPerDay / grid.interval_seconds);
}

// Morning and evening peaks over a low night floor, peak value about 1.
double daily_profile(double hour) {
  const double morning = std::exp(-(hour - 8.5) * (hour - 8.5) / (2.0 * 1.5 * 1.5));
  const double evening = std::exp(-(hour - 18.0) * (hour - 18.0) / (2.0 * 2.0 * 2.0));
  return 0.25 + 0.75 * std::max(morning, evening);
}

double weekday_multiplier(int dow) {
  if (dow >= 5) return 0.8;
  if (dow == 4) return 1.1;
  return 1.0;
}

struct Clock {
  double hour = 0.0;
  double day_fraction = 0.0;
  int dow = 0;
};

Clock clock_at(const SynthConfig& config, const GridSpec& grid, std::size_t interval) {
  const std::int64_t epoch = config.start_epoch + static_cast<std::int64_t>(interval) * grid.interval_seconds;
  const std::int64_t second_of_day = ((epoch % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay;
  Clock c;
  c.hour = (static_cast<double>(second_of_day) + 0.5 * static_cast<double>(grid.interval_seconds)) / 3600.0;
  c.day_fraction = c.hour / 24.0;
  c.dow = day_of_week(epoch);
  return c;
}

// Expected requests per cell for one interval, flat index i*H + j.
std::vector<double> intensity(const SynthConfig& config, const GridSpec& grid, const std::vector<Bump>& bumps,
                              std::size_t interval, bool rainy) {
  const Clock c = clock_at(config, grid, interval);
  const double level = config.peak_rate * daily_profile(c.hour) * weekday_multiplier(c.dow) *
                       (rainy ? config.rain_factor : 1.0);
  const double two_sigma_sq = 2.0 * config.bump_sigma * config.bump_sigma;
  std::vector<double> rate(grid.cells(), 0.0);
  for (const auto& b : bumps) {
    const double angle = 2.0 * std::numbers::pi * c.day_fraction + b.phase;
    const double bx = b.x + config.drift * std::sin(angle);
    const double by = b.y + config.drift * std::cos(angle);
    for (std::size_t i = 0; i < grid.width; ++i) {
      const double dx = (static_cast<double>(i) + 0.5) / static_cast<double>(grid.width) - bx;
      for (std::size_t j = 0; j < grid.height; ++j) {
        const double dy = (static_cast<double>(j) + 0.5) / static_cast<double>(grid.height) - by;
        rate[i * grid.height + j] += level * b.weight * std::exp(-(dx * dx + dy * dy) / two_sigma_sq);
      }
    }
  }
  return rate;
}

std::vector<bool> rain_flags(const SynthConfig& config, const GridSpec& grid, std::size_t total,
                             std::mt19937_64& rng) {
  std::vector<bool> rain(total, false);
  auto mark = [&](std::size_t first, std::size_t end) {
    for (std::size_t t = first; t < std::min(end, total); ++t) rain[t] = true;
  };
  if (config.explicit_script) {
    for (const auto& spell : config.weather_script) mark(spell.first_interval, spell.end_interval);
    return rain;
  }
  const std::size_t per_day = intervals_per_day(grid);
  const double per_hour = 3600.0 / static_cast<double>(grid.interval_seconds);
  std::bernoulli_distribution wet(config.rain_probability);
  std::uniform_int_distribution<int> start_hour(6, 16);
  std::uniform_int_distribution<int> duration(3, 8);
  for (std::size_t day = 0; day < config.days; ++day) {
    if (!wet(rng)) continue;
    const auto first = day * per_day + static_cast<std::size_t>(start_hour(rng) * per_hour);
    mark(first, first + static_cast<std::size_t>(duration(rng) * per_hour));
  }
  return rain;
}

}  // namespace

double synth_expected_total(const SynthConfig& config, const GridSpec& grid, std::size_t interval, bool rainy) {
  const auto rate = intensity(config, grid, draw_bumps(config), interval, rainy);
  double total = 0.0;
  for (double r : rate) total += r;
  return total;
}

SynthOutput synth_generate(const SynthConfig& config, const GridSpec& grid) {
  grid.validate();
  if (kSecondsPerDay % grid.interval_seconds != 0) {
    throw ConfigError("interval length must divide a day for synthetic data");
  }
  const std::size_t total = config.days * intervals_per_day(grid);
  const auto bumps = draw_bumps(config);
  std::seed_seq seq{config.seed, std::uint64_t{2}};
  std::mt19937_64 rng(seq);

  SynthOutput out;
  out.rain = rain_flags(config, grid, total, rng);

  const double cell_w = (grid.max_lon - grid.min_lon) / static_cast<double>(grid.width);
  const double cell_h = (grid.max_lat - grid.min_lat) / static_cast<double>(grid.height);
  std::uniform_real_distribution<double> inside(0.001, 0.999);
  std::uniform_int_distribution<std::int64_t> second(0, grid.interval_seconds - 1);
  std::size_t next_id = 0;
  for (std::size_t t = 0; t < total; ++t) {
    const auto rate = intensity(config, grid, bumps, t, out.rain[t]);
    const std::int64_t base = config.start_epoch + static_cast<std::int64_t>(t) * grid.interval_seconds;
    for (std::size_t i = 0; i < grid.width; ++i) {
      for (std::size_t j = 0; j < grid.height; ++j) {
        const double lambda = rate[i * grid.height + j];
        if (lambda <= 0.0) continue;
        std::poisson_distribution<int> draw(lambda);
        const int n = draw(rng);
        for (int r = 0; r < n; ++r) {
          ServiceRequest req;
          req.id = "r" + std::to_string(next_id++);
          req.pickup_epoch = base + second(rng);
          req.lon = grid.min_lon + (static_cast<double>(i) + inside(rng)) * cell_w;
          req.lat = grid.min_lat + (static_cast<double>(j) + inside(rng)) * cell_h;
          out.requests.push_back(std::move(req));
        }
      }
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < total; ++t) {
    const Clock c = clock_at(config, grid, t);
    const std::size_t day = t / intervals_per_day(grid);
    const bool rainy = out.rain[t];
    ExternalRecord r;
    r.interval_epoch = config.start_epoch + static_cast<std::int64_t>(t) * grid.interval_seconds;
    const double u = unit(rng);
    r.condition_code = rainy ? (u < 0.5 ? 6 : 7) : (u < 0.5 ? 1 : (u < 0.8 ? 2 : 4));
    r.temperature = 14.0 + 5.0 * std::sin(2.0 * std::numbers::pi * (c.hour - 9.0) / 24.0) - (rainy ? 3.0 : 0.0) +
                    0.5 * noise(rng);
    r.dew_point = r.temperature - (rainy ? 1.5 : 6.0) + 0.5 * noise(rng);
    r.humidity = std::clamp((rainy ? 92.0 : 62.0) + 4.0 * noise(rng), 0.0, 100.0);
    r.pressure = 1016.0 - (rainy ? 6.0 : 0.0) + 1.5 * noise(rng);
    r.wind_speed = std::max(0.0, (rainy ? 5.0 : 2.5) + 1.0 * noise(rng));
    r.sunrise_hour = 7.2 + 0.02 * static_cast<double>(day);
    r.sunset_hour = 18.1 - 0.02 * static_cast<double>(day);
    out.externals.push_back(r);
  }
  return out;
}

}  // namespace stefnet
