#include "tsseg/series.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsseg {

std::string_view to_string(NominalFamily f) {
  switch (f) {
    case NominalFamily::smooth: return "smooth";
    case NominalFamily::piecewise_linear: return "piecewise_linear";
    case NominalFamily::piecewise_constant: return "piecewise_constant";
    case NominalFamily::pulse: return "pulse";
  }
  return "?";
}

std::string_view to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::additive_outlier: return "additive_outlier";
    case AnomalyKind::volatility_change: return "volatility_change";
    case AnomalyKind::cyclic_violation: return "cyclic_violation";
    case AnomalyKind::unusual_shape: return "unusual_shape";
  }
  return "?";
}

NominalFamily parse_family(std::string_view s) {
  for (auto f : kAllFamilies)
    if (to_string(f) == s) return f;
  throw DataError("unknown nominal family '" + std::string(s) + "'");
}

AnomalyKind parse_anomaly_kind(std::string_view s) {
  for (auto k : kAllAnomalyKinds)
    if (to_string(k) == s) return k;
  throw DataError("unknown anomaly kind '" + std::string(s) + "'");
}

LabeledSeries LabeledSeries::zeros(std::size_t length, std::size_t channels, std::size_t classes) {
  LabeledSeries s;
  s.length = length;
  s.channels = channels;
  s.classes = classes;
  s.values.assign(length * channels, 0.0);
  s.mask.assign(length * classes, 0);
  return s;
}

bool LabeledSeries::mask_empty() const {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m == 0; });
}

std::vector<std::uint8_t> LabeledSeries::mask_from_meta() const {
  std::vector<std::uint8_t> out(length * classes, 0);
  for (const auto& a : meta.anomalies) {
    for (std::size_t t = a.begin; t < a.end && t < length; ++t) out[t * classes + a.label] = 1;
  }
  return out;
}

std::vector<double> LabeledSeries::channel(std::size_t c) const {
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) out[t] = value(t, c);
  return out;
}

void LabeledSeries::check() const {
  if (values.size() != length * channels) throw DataError("series value count does not match length x channels");
  if (mask.size() != length * classes) throw DataError("series mask size does not match length x classes");
  for (auto m : mask)
    if (m > 1) throw DataError("mask entries must be 0 or 1");
  for (const auto& a : meta.anomalies) {
    if (a.label >= classes || a.begin >= a.end || a.end > length) throw DataError("anomaly descriptor out of range");
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double local_scale(const LabeledSeries& s, std::size_t begin, std::size_t end, std::size_t radius, std::size_t c) {
  const std::size_t lo = begin > radius ? begin - radius : 0;
  const std::size_t hi = std::min(s.length, end + radius);
  std::vector<double> window;
  window.reserve(hi - lo);
  for (std::size_t t = lo; t < hi; ++t) window.push_back(s.value(t, c));
  return std::max(stddev_of(window), 1e-3);
}

}  // namespace tsseg
