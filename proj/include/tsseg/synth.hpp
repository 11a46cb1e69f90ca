#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsseg/series.hpp"

namespace tsseg {

/// Bumped whenever a recipe below changes its output for a given seed.
inline constexpr int kRecipeVersion = 1;

/// Duration and intensity ranges for one injected anomaly. Intensity is in
/// multiples of the local scale (additive_outlier), a variance factor
/// (volatility_change) or unused (cyclic_violation).
struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::additive_outlier;
  std::size_t label = 0;  // mask column
  std::size_t min_duration = 1;
  std::size_t max_duration = 5;
  double min_intensity = 4.0;
  double max_intensity = 8.0;

  /// Default ranges, labelled in the column matching the kind's position.
  static AnomalySpec defaults(AnomalyKind kind);
};

/// A nominal series of one channel with `classes` empty mask columns.
///   smooth: 2-5 sinusoids plus cubic spline drift
///   piecewise_linear: 3-10 pieces, linear between random knots
///   piecewise_constant: 2-8 levels, no noise
///   pulse: rectangular/triangular pulses on a flat baseline
/// Cyclic series tile one period of the recipe; the period is drawn from
/// [32, length/4] (shorter for length < 128).
LabeledSeries gen_nominal(NominalFamily family, std::size_t length, std::uint64_t seed, bool cyclic = false,
                          std::size_t classes = 1);

/// Injects one anomaly in a random window that does not touch existing
/// descriptors. Values outside the window are left bit-identical.
LabeledSeries inject_anomaly(const LabeledSeries& series, const AnomalySpec& spec, std::uint64_t seed);
/// Same, at an explicit window [begin, begin + duration).
LabeledSeries inject_anomaly_at(const LabeledSeries& series, const AnomalySpec& spec, std::size_t begin,
                                std::size_t duration, std::uint64_t seed);

struct Dataset {
  std::string task;  // "pretrain", "shapes", "crops", ...
  int recipe_version = kRecipeVersion;
  std::uint64_t seed = 0;
  std::size_t length = 0;
  std::size_t channels = 1;
  std::size_t classes = 1;
  std::vector<AnomalyKind> class_kinds;  // anomaly kind of each mask column
  std::vector<LabeledSeries> samples;

  /// Throws DataError if any sample disagrees with the header.
  void check() const;
  /// Deterministic split of sample indices into (train, held-out).
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(double held_out_fraction,
                                                                      std::uint64_t seed) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct PretrainOptions {
  double anomaly_free_fraction = 0.1;
  double cyclic_fraction = 0.6;
  double p_additive = 0.6;
  double p_volatility = 0.5;
  double p_cyclic_violation = 0.6;  // among cyclic series
  bool nominal_augmentation = true;
};

/// Multi-label set over (additive_outlier, volatility_change, cyclic_violation).
Dataset make_pretraining_set(std::size_t n, std::size_t length, std::uint64_t seed, const PretrainOptions& opts = {});

/// Single-class set: 1-3 windows whose shape comes from a family different
/// from the base series, then a couple of augmentations per sample.
Dataset make_shape_task_set(std::size_t n, std::size_t length, std::uint64_t seed);

/// Random length-`length` crops of a long labelled series (external data).
Dataset make_crops(const LabeledSeries& source, std::size_t n, std::size_t length, std::uint64_t seed,
                   std::vector<AnomalyKind> class_kinds = {});

}  // namespace tsseg
