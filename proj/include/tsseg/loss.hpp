#pragma once

#include <cstdint>
#include <vector>

#include "tsseg/model.hpp"
#include "tsseg/series.hpp"
#include "tsseg/tensor.hpp"

namespace tsseg {

/// 1 - mean over (batch, class) of (2 sum(p g) + eps) / (sum p + sum g + eps),
/// sums running over time. Writes d loss / d probs into `grad` when given.
/// Accumulates in double for both precisions.
template <typename T>
double soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& target, double eps = 1.0, Tensor<T>* grad = nullptr);

/// Binary predictions [B, L, M] from head output [B, L, K]: threshold 0.5
/// for sigmoid heads, argmax over the M + 1 columns for softmax heads (a
/// nominal argmax predicts nothing).
template <typename T>
std::vector<std::uint8_t> predict_mask(const Tensor<T>& probs, LabelMode mode, double threshold = 0.5);

/// Pooled intersection / union counts per class.
class IouAccumulator {
 public:
  explicit IouAccumulator(std::size_t classes) : inter_(classes, 0), union_(classes, 0) {}

  /// pred and truth are [N x classes] row-major binary masks.
  void add(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth);

  std::size_t classes() const { return inter_.size(); }
  /// A class absent from both prediction and truth scores 1.
  std::vector<double> per_class() const;
  /// Classes that appeared in prediction or truth.
  std::vector<bool> present() const;
  /// Mean over present classes; 1 when no class is present anywhere.
  double mean() const;

 private:
  std::vector<std::uint64_t> inter_;
  std::vector<std::uint64_t> union_;
};

/// Target tensor for one head: the mask for sigmoid heads, the mask plus a
/// nominal column (one-hot on the lowest labelled class) for softmax heads.
template <typename T>
Tensor<T> make_target(const std::vector<const LabeledSeries*>& batch, LabelMode mode);
/// Values [B, L, C] for a batch.
template <typename T>
Tensor<T> make_input(const std::vector<const LabeledSeries*>& batch);

/// Truth mask for IoU in the same convention as predict_mask (single-label
/// keeps only the lowest labelled class per point).
std::vector<std::uint8_t> truth_mask(const LabeledSeries& s, LabelMode mode);

}  // namespace tsseg
