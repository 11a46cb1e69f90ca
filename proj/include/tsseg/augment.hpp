#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsseg/series.hpp"

namespace tsseg {

enum class AugmentKind : std::uint8_t {
  crop_resample,
  jitter,
  time_warp,
  zoom,
  add_trend,
  reverse,
  linear_op,
  mutate_pair,
};
inline constexpr AugmentKind kAllAugmentKinds[] = {
    AugmentKind::crop_resample, AugmentKind::jitter,  AugmentKind::time_warp, AugmentKind::zoom,
    AugmentKind::add_trend,     AugmentKind::reverse, AugmentKind::linear_op, AugmentKind::mutate_pair};

std::string_view to_string(AugmentKind k);
AugmentKind parse_augment_kind(std::string_view s);

/// True for ops that move time indices (the mask follows the same mapping).
bool is_index_mapping(AugmentKind k);
/// True for ops that only touch values and leave the mask alone.
bool is_value_only(AugmentKind k);

/// Smallest additive-outlier intensity (multiples of local scale) the
/// generators inject. Jitter must stay well below it.
inline constexpr double kOutlierIntensityFloor = 4.0;
inline constexpr double kOutlierIntensityCeil = 8.0;
/// Largest jitter sigma (same units) that keeps additive outliers labelled
/// truthfully: a 4-sigma noise excursion stays under the intensity floor.
constexpr double jitter_sigma_cap(double outlier_intensity_floor) { return outlier_intensity_floor / 4.0; }

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

/// An augmentation with parameter ranges. Keys per kind:
///   crop_resample: fraction          jitter: sigma (x series std)
///   time_warp: strength, segments    zoom: factor, center (optional)
///   add_trend: slope, curvature      reverse: (none)
///   linear_op: scale, offset         mutate_pair: fraction
struct AugmentOp {
  AugmentKind kind = AugmentKind::jitter;
  std::map<std::string, Range> params;
  double weight = 1.0;

  /// Op with its default ranges.
  static AugmentOp make(AugmentKind kind);
  Range param(const std::string& key) const;
  bool has(const std::string& key) const { return params.count(key) != 0; }
  /// Sets a range, rejecting keys the kind does not understand.
  AugmentOp& set(const std::string& key, Range r);
};

/// Applies `op` to values and mask together. Index-mapping ops produce a
/// series of `target_length` (0 keeps the input length); the mask travels
/// through the same temporal map and is re-binarized. mutate_pair needs a
/// partner of identical layout.
LabeledSeries apply(const AugmentOp& op, const LabeledSeries& sample, std::uint64_t seed,
                    const LabeledSeries* partner = nullptr, std::size_t target_length = 0);

/// Resamples through an explicit monotone map. Output cell i covers source
/// interval [edges[i], edges[i+1]) in cell coordinates. A mask cell is set
/// when the covered label fraction is >= 0.5 or the interval contains the
/// centre of a labelled source cell, so every labelled source index lands
/// on a labelled output index.
LabeledSeries remap(const LabeledSeries& sample, std::span<const double> edges);

/// Which (op, anomaly kind) pairs are label invariant. Plain data so
/// policies can override entries.
class InvarianceTable {
 public:
  static InvarianceTable defaults();
  bool allowed(AugmentKind op, AnomalyKind kind) const;
  void set(AugmentKind op, AnomalyKind kind, bool allowed);

 private:
  std::array<std::array<bool, 4>, 8> table_{};
};

/// Table lookup plus parameter caps (jitter amplitude under the outlier floor).
bool check_invariance(const AugmentOp& op, AnomalyKind kind,
                      const InvarianceTable& table = InvarianceTable::defaults(),
                      double outlier_intensity_floor = kOutlierIntensityFloor);

class InvarianceError : public DataError {
 public:
  using DataError::DataError;
};

struct AugmentPolicy {
  std::vector<AugmentOp> ops;
  InvarianceTable table = InvarianceTable::defaults();
  std::size_t passes = 1;  // ops drawn per sample
};

AugmentPolicy parse_policy(std::string_view json_text);
AugmentPolicy load_policy(const std::filesystem::path& path);
std::string policy_to_json(const AugmentPolicy& policy);

/// Throws InvarianceError listing every disallowed (op, kind) pair unless forced.
void validate_policy(const AugmentPolicy& policy, std::span<const AnomalyKind> kinds, bool force = false);

/// Draws `passes` ops by weight and applies them in turn. Partners for
/// mutate_pair come from `pool`.
LabeledSeries augment_sample(const AugmentPolicy& policy, const LabeledSeries& sample,
                             std::span<const LabeledSeries> pool, std::span<const AnomalyKind> kinds,
                             std::uint64_t seed, bool force = false);

}  // namespace tsseg
