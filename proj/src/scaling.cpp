#include <algorithm>

#include "stefnet/data.hpp"

namespace stefnet {

double MinMax::scale(double x) const {
  if (!(max > min)) return 0.0;
  return (x - min) / (max - min);
}

double MinMax::inverse(double y) const {
  const double x = max > min ? min + y * (max - min) : min;
  return x < 0.0 ? 0.0 : x;
}

MinMax fit_minmax(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

std::vector<double> scale(std::span<const double> values, const MinMax& params) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double x) { return params.scale(x); });
  return out;
}

std::vector<double> inverse_scale(std::span<const double> values, const MinMax& params) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double y) { return params.inverse(y); });
  return out;
}

}  // namespace stefnet
