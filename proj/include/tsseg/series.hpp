#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tsseg {

/// Bad generation / augmentation request (window does not fit, wrong family...).
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class NominalFamily : std::uint8_t { smooth, piecewise_linear, piecewise_constant, pulse };
inline constexpr NominalFamily kAllFamilies[] = {NominalFamily::smooth, NominalFamily::piecewise_linear,
                                                 NominalFamily::piecewise_constant, NominalFamily::pulse};

/// The three pretraining anomaly types, plus the segment-shape task.
enum class AnomalyKind : std::uint8_t { additive_outlier, volatility_change, cyclic_violation, unusual_shape };
inline constexpr AnomalyKind kAllAnomalyKinds[] = {AnomalyKind::additive_outlier, AnomalyKind::volatility_change,
                                                   AnomalyKind::cyclic_violation, AnomalyKind::unusual_shape};

std::string_view to_string(NominalFamily f);
std::string_view to_string(AnomalyKind k);
NominalFamily parse_family(std::string_view s);
AnomalyKind parse_anomaly_kind(std::string_view s);

/// One labelled interval [begin, end) in mask column `label`.
struct AnomalyDescriptor {
  AnomalyKind kind = AnomalyKind::additive_outlier;
  std::size_t label = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double intensity = 0.0;
  std::string variant;  // e.g. cyclic break style or inserted family

  bool operator==(const AnomalyDescriptor&) const = default;
};

struct SeriesMeta {
  NominalFamily family = NominalFamily::smooth;
  bool cyclic = false;
  std::size_t period = 0;  // 0 when not cyclic
  std::size_t knots = 0;   // piece count for piecewise families
  std::uint64_t seed = 0;
  std::vector<AnomalyDescriptor> anomalies;
  std::vector<std::string> augmentations;

  bool operator==(const SeriesMeta&) const = default;
};

/// Values [length x channels] with a binary mask [length x classes].
struct LabeledSeries {
  std::size_t length = 0;
  std::size_t channels = 1;
  std::size_t classes = 1;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  SeriesMeta meta;

  static LabeledSeries zeros(std::size_t length, std::size_t channels, std::size_t classes);

  double& value(std::size_t t, std::size_t c = 0) { return values[t * channels + c]; }
  double value(std::size_t t, std::size_t c = 0) const { return values[t * channels + c]; }
  std::uint8_t& label(std::size_t t, std::size_t m = 0) { return mask[t * classes + m]; }
  std::uint8_t label(std::size_t t, std::size_t m = 0) const { return mask[t * classes + m]; }

  bool mask_empty() const;
  /// Mask rebuilt from meta.anomalies alone.
  std::vector<std::uint8_t> mask_from_meta() const;
  /// Channel c as a contiguous vector.
  std::vector<double> channel(std::size_t c = 0) const;
  void check() const;

  bool operator==(const LabeledSeries&) const = default;
};

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);
double median_of(std::vector<double> v);

/// Standard deviation of channel c over [begin - radius, end + radius),
/// floored at 1e-3 so flat series still get a usable scale.
double local_scale(const LabeledSeries& s, std::size_t begin, std::size_t end, std::size_t radius = 64,
                   std::size_t c = 0);

}  // namespace tsseg
