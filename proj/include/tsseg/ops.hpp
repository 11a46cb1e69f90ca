#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tsseg/tensor.hpp"

namespace tsseg {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// "Same" 1-D convolution, stride 1, zero padding (K-1)/2 on both sides.
/// input [B, L, Cin], kernel [K, Cin, F], bias [F] -> [B, L, F].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

/// Accumulates kernel/bias gradients and returns d(input).
template <typename T>
Tensor<T> conv1d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_output,
                          Tensor<T>& grad_kernel, Tensor<T>& grad_bias);

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Param<T>& kernel, const Param<T>& bias) {
  return conv1d(input, kernel.value, bias.value);
}

template <typename T>
Tensor<T> conv1d_backward(const Tensor<T>& input, Param<T>& kernel, Param<T>& bias, const Tensor<T>& grad_output) {
  return conv1d_backward(input, kernel.value, grad_output, kernel.grad, bias.grad);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-channel batch norm over batch x length, with running statistics.
/// Before any training step the running stats are mean 0 / var 1, so
/// inference on a fresh layer is well defined.
template <typename T>
struct BatchNorm {
  Param<T> gamma;
  Param<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = kBatchNormMomentum;
  double eps = kBatchNormEps;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  Tensor<T> normalized;      // x_hat, pre-affine
  std::vector<T> inv_std;    // per channel
};

/// Train mode normalizes with batch statistics and updates the running
/// stats; infer mode uses the running stats only. `cache` may be null.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNorm<T>& bn, Mode mode, BatchNormCache<T>* cache);

/// Inference-only overload that leaves the layer untouched.
template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& input, const BatchNorm<T>& bn);

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& grad_output, BatchNorm<T>& bn, const BatchNormCache<T>& cache);

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& input);
/// Gradient gate is (input > 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

/// Softmax across the channel axis for each (b, t).
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input);
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& output, const Tensor<T>& grad_output);

// ---------------------------------------------------------------------------
// Resolution changes
// ---------------------------------------------------------------------------

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // source time index per output element
};

/// Non-overlapping max pooling along time. Ties resolve to the first index.
template <typename T>
PoolResult<T> max_pool1d(const Tensor<T>& input, std::size_t pool);

template <typename T>
Tensor<T> max_pool1d_backward(const Tensor<T>& grad_output, std::span<const std::uint32_t> argmax,
                              std::size_t input_length);

/// Nearest-neighbour repetition: output[t] = input[t / rate].
template <typename T>
Tensor<T> upsample1d(const Tensor<T>& input, std::size_t rate);

/// Sums gradients over each repeat group.
template <typename T>
Tensor<T> upsample1d_backward(const Tensor<T>& grad_output, std::size_t rate);

/// Channel concatenation: a-channels first, then b-channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Concatenates any number of [B, L, Ci] tensors in order.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

/// Splits grad of a concatenation back into the given channel widths.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& grad, std::span<const std::size_t> widths);

/// Copies channel `c` of a [B, L, C] tensor into a [B, L, 1] tensor.
template <typename T>
Tensor<T> slice_channel(const Tensor<T>& input, std::size_t c);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step with bias correction. Effective lr is
/// base_lr * lr_multiplier; frozen params are skipped entirely.
template <typename T>
void adam_step(std::span<Param<T>* const> params, const AdamConfig& config);

}  // namespace tsseg
