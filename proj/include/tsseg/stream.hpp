#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tsseg/model.hpp"
#include "tsseg/series.hpp"

namespace tsseg {

struct SnapshotPlan {
  std::size_t snapshot_length = 4096;
  std::size_t stride = 1366;
  std::size_t model_input_length = 1024;

  /// stride = snapshot_length / coverage (integer division, at least 1).
  static SnapshotPlan with_coverage(std::size_t snapshot_length, std::size_t coverage,
                                    std::size_t model_input_length = 1024);
  /// Throws DataError for stride 0, or stride > snapshot_length unless forced.
  void validate(bool force = false) const;
};

/// Half-open window [begin, end) in stream coordinates.
struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Window&) const = default;
};

/// Windows at 0, stride, 2 * stride, ... while they fit, plus one final
/// window ending at the stream end when the last regular one falls short.
std::vector<Window> plan_snapshots(std::size_t stream_length, const SnapshotPlan& plan, bool force = false);

/// How many windows cover each point.
std::vector<std::uint32_t> coverage_counts(std::span<const Window> windows, std::size_t stream_length);

/// Row-major [len x channels] -> [target_len x channels]. Shrinking takes
/// overlap-weighted bin means (plain means over equal bins when target_len
/// divides len); growing interpolates linearly with both endpoints aligned.
std::vector<double> resample(std::span<const double> x, std::size_t len, std::size_t channels,
                             std::size_t target_len);
/// Masks: max over each bin when shrinking, nearest sample when growing.
std::vector<std::uint8_t> resample_mask(std::span<const std::uint8_t> mask, std::size_t len, std::size_t classes,
                                        std::size_t target_len);

enum class NormMode { fixed_scale, per_snapshot };

/// fixed_scale: (x - center) / scale per channel; `center` and `scale` hold
/// one entry (shared) or one per channel. per_snapshot: (x - mean) / (std + 1e-8).
struct NormalizationSpec {
  NormMode mode = NormMode::fixed_scale;
  std::vector<double> center{0.0};
  std::vector<double> scale{1.0};

  void validate(std::size_t channels) const;
};

void normalize(std::span<double> x, std::size_t len, std::size_t channels, const NormalizationSpec& spec);

enum class EnsembleRule { mean, max };

struct EnsembleResult {
  std::vector<double> probs;              // [stream_length x K], NaN where uncovered
  std::vector<std::uint32_t> coverage;    // windows per point
  std::size_t uncovered = 0;
};

/// `window_probs[w]` is [window length x K] for windows[w].
EnsembleResult ensemble(const std::vector<std::vector<double>>& window_probs, std::span<const Window> windows,
                        std::size_t stream_length, std::size_t K, EnsembleRule rule = EnsembleRule::mean);

/// Inclusive interval [start, end] of class `cls`.
struct AnomalyEvent {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t cls = 0;
  double score = 0.0;
  bool operator==(const AnomalyEvent&) const = default;
};

struct EventRule {
  double threshold = 0.5;
  std::size_t min_len = 2;
  std::size_t merge_gap = 2;
};

/// Runs with p > threshold per class, merged across gaps of at most
/// merge_gap points, then dropped if shorter than min_len. The score is the
/// mean probability over the merged interval. Sorted by (class, start).
/// NaN points never count as above threshold.
std::vector<AnomalyEvent> extract_events(std::span<const double> probs, std::size_t length, std::size_t K,
                                         const EventRule& rule = {});

/// Maximal runs of a binary [length x M] mask as events with score 1.
std::vector<AnomalyEvent> events_from_mask(std::span<const std::uint8_t> mask, std::size_t length, std::size_t M);

/// A predicted event is a hit when it overlaps a true event of its class;
/// a true event is found when some prediction of its class overlaps it.
struct EventScore {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
};
EventScore score_events(std::span<const AnomalyEvent> predicted, std::span<const AnomalyEvent> truth);

/// Fills NaN values by linear interpolation per channel (edge gaps take the
/// nearest observed value) and flags each point that had any gap.
struct Imputed {
  std::vector<double> values;
  std::vector<std::uint8_t> imputed;
  std::size_t count = 0;
};
Imputed impute_missing(std::span<const double> values, std::size_t length, std::size_t channels);

struct DetectConfig {
  SnapshotPlan plan;
  NormalizationSpec norm;
  EnsembleRule rule = EnsembleRule::mean;
  EventRule events;
  std::size_t batch_size = 8;
  std::size_t threads = 1;
  bool force_gaps = false;
};

struct DetectResult {
  std::size_t length = 0;
  std::size_t classes = 0;
  std::vector<double> probs;  // [length x classes]
  std::vector<std::uint32_t> coverage;
  std::vector<std::uint8_t> imputed;
  std::size_t uncovered = 0;
  std::vector<Window> windows;
  std::vector<AnomalyEvent> events;
};

/// Sliding-window inference over a raw stream [length x channels] that may
/// contain NaN gaps. The result is independent of `threads`.
template <typename T>
DetectResult detect(const Model<T>& model, std::span<const double> values, std::size_t length, std::size_t channels,
                    const DetectConfig& config);

}  // namespace tsseg
