#include "tsseg/loss.hpp"

namespace tsseg {

template <typename T>
double soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& target, double eps, Tensor<T>* grad) {
  if (probs.shape() != target.shape() || probs.rank() != 3) {
    throw ShapeError("soft_dice_loss: probs " + shape_to_string(probs.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  const std::size_t B = probs.dim(0), L = probs.dim(1), K = probs.dim(2);
  std::vector<double> inter(B * K, 0.0), total(B * K, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const double p = probs.at(b, t, k), g = target.at(b, t, k);
        inter[b * K + k] += p * g;
        total[b * K + k] += p + g;
      }
    }
  }
  const double n = static_cast<double>(B * K);
  double score = 0.0;
  for (std::size_t i = 0; i < B * K; ++i) score += (2.0 * inter[i] + eps) / (total[i] + eps);
  if (grad) {
    *grad = Tensor<T>(probs.shape());
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t k = 0; k < K; ++k) {
          const double I = inter[b * K + k], S = total[b * K + k];
          const double g = target.at(b, t, k);
          const double d = (2.0 * g * (S + eps) - (2.0 * I + eps)) / ((S + eps) * (S + eps));
          grad->at(b, t, k) = static_cast<T>(-d / n);
        }
      }
    }
  }
  return 1.0 - score / n;
}

template <typename T>
std::vector<std::uint8_t> predict_mask(const Tensor<T>& probs, LabelMode mode, double threshold) {
  const std::size_t B = probs.dim(0), L = probs.dim(1), K = probs.dim(2);
  const std::size_t M = mode == LabelMode::multi_label ? K : K - 1;
  std::vector<std::uint8_t> out(B * L * M, 0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t row = b * L + t;
      if (mode == LabelMode::multi_label) {
        for (std::size_t k = 0; k < K; ++k) out[row * M + k] = probs.at(b, t, k) >= threshold ? 1 : 0;
      } else {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (probs.at(b, t, k) > probs.at(b, t, best)) best = k;
        if (best < M) out[row * M + best] = 1;
      }
    }
  }
  return out;
}

void IouAccumulator::add(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth) {
  const std::size_t M = classes();
  if (pred.size() != truth.size() || pred.size() % M != 0) throw ShapeError("iou: mask sizes differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t k = i % M;
    const bool p = pred[i] != 0, g = truth[i] != 0;
    if (p && g) ++inter_[k];
    if (p || g) ++union_[k];
  }
}

std::vector<double> IouAccumulator::per_class() const {
  std::vector<double> out(classes());
  for (std::size_t k = 0; k < classes(); ++k) {
    out[k] = union_[k] == 0 ? 1.0 : static_cast<double>(inter_[k]) / static_cast<double>(union_[k]);
  }
  return out;
}

std::vector<bool> IouAccumulator::present() const {
  std::vector<bool> out(classes());
  for (std::size_t k = 0; k < classes(); ++k) out[k] = union_[k] != 0;
  return out;
}

double IouAccumulator::mean() const {
  const auto iou = per_class();
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < classes(); ++k) {
    if (union_[k] == 0) continue;
    acc += iou[k];
    ++n;
  }
  return n == 0 ? 1.0 : acc / static_cast<double>(n);
}

std::vector<std::uint8_t> truth_mask(const LabeledSeries& s, LabelMode mode) {
  if (mode == LabelMode::multi_label) return s.mask;
  std::vector<std::uint8_t> out(s.mask.size(), 0);
  for (std::size_t t = 0; t < s.length; ++t) {
    for (std::size_t m = 0; m < s.classes; ++m) {
      if (s.label(t, m)) {
        out[t * s.classes + m] = 1;
        break;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> make_target(const std::vector<const LabeledSeries*>& batch, LabelMode mode) {
  if (batch.empty()) throw ShapeError("make_target: empty batch");
  const std::size_t L = batch[0]->length, M = batch[0]->classes;
  const std::size_t K = mode == LabelMode::multi_label ? M : M + 1;
  Tensor<T> out(Shape{batch.size(), L, K});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const LabeledSeries& s = *batch[b];
    if (s.length != L || s.classes != M) throw ShapeError("make_target: samples differ in layout");
    const auto truth = truth_mask(s, mode);
    for (std::size_t t = 0; t < L; ++t) {
      bool any = false;
      for (std::size_t m = 0; m < M; ++m) {
        out.at(b, t, m) = static_cast<T>(truth[t * M + m]);
        any = any || truth[t * M + m];
      }
      if (mode == LabelMode::single_label) out.at(b, t, M) = any ? T{0} : T{1};
    }
  }
  return out;
}

template <typename T>
Tensor<T> make_input(const std::vector<const LabeledSeries*>& batch) {
  if (batch.empty()) throw ShapeError("make_input: empty batch");
  const std::size_t L = batch[0]->length, C = batch[0]->channels;
  Tensor<T> out(Shape{batch.size(), L, C});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->length != L || batch[b]->channels != C) throw ShapeError("make_input: samples differ in layout");
    for (std::size_t i = 0; i < L * C; ++i) out[b * L * C + i] = static_cast<T>(batch[b]->values[i]);
  }
  return out;
}

#define TSSEG_INSTANTIATE_LOSS(T)                                                                             \
  template double soft_dice_loss<T>(const Tensor<T>&, const Tensor<T>&, double, Tensor<T>*);                 \
  template std::vector<std::uint8_t> predict_mask<T>(const Tensor<T>&, LabelMode, double);                   \
  template Tensor<T> make_target<T>(const std::vector<const LabeledSeries*>&, LabelMode);                     \
  template Tensor<T> make_input<T>(const std::vector<const LabeledSeries*>&);

TSSEG_INSTANTIATE_LOSS(float)
TSSEG_INSTANTIATE_LOSS(double)

}  // namespace tsseg
