#include "tsseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsseg {
namespace {

template <typename T>
void require_rank3(const Tensor<T>& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + " expects [B, L, C], got " + shape_to_string(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank3(input, "conv1d input");
  if (kernel.rank() != 3) throw ShapeError("conv1d kernel expects [K, Cin, F], got " + shape_to_string(kernel.shape()));
  const std::size_t B = input.dim(0), L = input.dim(1), Cin = input.dim(2);
  const std::size_t K = kernel.dim(0), F = kernel.dim(2);
  if (kernel.dim(1) != Cin) {
    throw ShapeError("conv1d channel mismatch: input " + shape_to_string(input.shape()) + " vs kernel " +
                     shape_to_string(kernel.shape()));
  }
  if (K % 2 == 0) throw ShapeError("conv1d kernel size must be odd, got " + std::to_string(K));
  if (bias.size() != F) throw ShapeError("conv1d bias length does not match filter count");

  const auto pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
  Tensor<T> out({B, L, F});
  const T* in = input.data();
  const T* w = kernel.data();
  const T* bs = bias.data();
  T* o = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      T* orow = o + (b * L + t) * F;
      std::copy(bs, bs + F, orow);
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        const T* irow = in + (b * L + static_cast<std::size_t>(src)) * Cin;
        const T* wk = w + k * Cin * F;
        for (std::size_t c = 0; c < Cin; ++c) {
          const T x = irow[c];
          const T* wrow = wk + c * F;
          for (std::size_t f = 0; f < F; ++f) orow[f] += x * wrow[f];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_output,
                          Tensor<T>& grad_kernel, Tensor<T>& grad_bias) {
  const std::size_t B = input.dim(0), L = input.dim(1), Cin = input.dim(2);
  const std::size_t K = kernel.dim(0), F = kernel.dim(2);
  if (grad_output.shape() != Shape{B, L, F}) {
    throw ShapeError("conv1d_backward grad shape " + shape_to_string(grad_output.shape()) + " does not match output");
  }
  if (grad_kernel.shape() != kernel.shape() || grad_bias.size() != F) {
    throw ShapeError("conv1d_backward gradient buffers have the wrong shape");
  }
  const auto pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
  Tensor<T> grad_input(input.shape());
  const T* in = input.data();
  const T* w = kernel.data();
  const T* g = grad_output.data();
  T* din = grad_input.data();
  T* dw = grad_kernel.data();
  T* db = grad_bias.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      const T* grow = g + (b * L + t) * F;
      for (std::size_t f = 0; f < F; ++f) db[f] += grow[f];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        const std::size_t row = (b * L + static_cast<std::size_t>(src)) * Cin;
        const T* irow = in + row;
        T* drow = din + row;
        const T* wk = w + k * Cin * F;
        T* dwk = dw + k * Cin * F;
        for (std::size_t c = 0; c < Cin; ++c) {
          const T x = irow[c];
          const T* wrow = wk + c * F;
          T* dwrow = dwk + c * F;
          T acc{0};
          for (std::size_t f = 0; f < F; ++f) {
            acc += wrow[f] * grow[f];
            dwrow[f] += x * grow[f];
          }
          drow[c] += acc;
        }
      }
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma(Tensor<T>({channels}, T{1})),
      beta(Shape{channels}),
      running_mean({channels}, T{0}),
      running_var({channels}, T{1}) {}

namespace {

template <typename T>
Tensor<T> apply_batch_norm(const Tensor<T>& input, const BatchNorm<T>& bn, Mode mode, const std::vector<T>& mean,
                           std::vector<T> inv_std, BatchNormCache<T>* cache) {
  const std::size_t C = bn.channels();
  const std::size_t N = input.size() / C;
  Tensor<T> out(input.shape());
  Tensor<T> xhat;
  if (cache) xhat = Tensor<T>(input.shape());
  const T* gamma = bn.gamma.value.data();
  const T* beta = bn.beta.value.data();
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = input.data() + n * C;
    T* orow = out.data() + n * C;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (row[c] - mean[c]) * inv_std[c];
      if (cache) xhat[n * C + c] = h;
      orow[c] = gamma[c] * h + beta[c];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
void check_batch_norm_input(const Tensor<T>& input, const BatchNorm<T>& bn) {
  require_rank3(input, "batch_norm input");
  if (input.dim(2) != bn.channels()) throw ShapeError("batch_norm channel mismatch");
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNorm<T>& bn, Mode mode, BatchNormCache<T>* cache) {
  if (mode == Mode::infer) {
    if (!cache) return batch_norm_infer(input, bn);
    check_batch_norm_input(input, bn);
    std::vector<T> inv_std(bn.channels());
    for (std::size_t c = 0; c < bn.channels(); ++c)
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) + bn.eps));
    return apply_batch_norm(input, bn, mode, bn.running_mean.storage(), std::move(inv_std), cache);
  }
  check_batch_norm_input(input, bn);
  const std::size_t C = input.dim(2);
  const std::size_t N = input.dim(0) * input.dim(1);

  // Statistics accumulate in double regardless of T; order is fixed.
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = input.data() + n * C;
    for (std::size_t c = 0; c < C; ++c) sum[c] += static_cast<double>(row[c]);
  }
  std::vector<double> m(C);
  for (std::size_t c = 0; c < C; ++c) m[c] = sum[c] / static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = input.data() + n * C;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(row[c]) - m[c];
      sq[c] += d * d;
    }
  }
  std::vector<T> mean(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double var = sq[c] / static_cast<double>(N);
    mean[c] = static_cast<T>(m[c]);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + bn.eps));
    const double unbiased = N > 1 ? sq[c] / static_cast<double>(N - 1) : var;
    bn.running_mean[c] = static_cast<T>(bn.momentum * bn.running_mean[c] + (1.0 - bn.momentum) * m[c]);
    bn.running_var[c] = static_cast<T>(bn.momentum * bn.running_var[c] + (1.0 - bn.momentum) * unbiased);
  }
  return apply_batch_norm(input, bn, mode, mean, std::move(inv_std), cache);
}

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& input, const BatchNorm<T>& bn) {
  check_batch_norm_input(input, bn);
  std::vector<T> inv_std(bn.channels());
  for (std::size_t c = 0; c < bn.channels(); ++c)
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) + bn.eps));
  return apply_batch_norm<T>(input, bn, Mode::infer, bn.running_mean.storage(), std::move(inv_std), nullptr);
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& grad_output, BatchNorm<T>& bn, const BatchNormCache<T>& cache) {
  const std::size_t C = bn.channels();
  if (grad_output.shape() != cache.normalized.shape()) throw ShapeError("batch_norm_backward shape mismatch");
  const std::size_t N = grad_output.size() / C;
  const T* gamma = bn.gamma.value.data();
  const T* xhat = cache.normalized.data();
  const T* dy = grad_output.data();

  std::vector<T> sum_dy(C, T{0}), sum_dy_xhat(C, T{0});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      sum_dy[c] += dy[n * C + c];
      sum_dy_xhat[c] += dy[n * C + c] * xhat[n * C + c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    bn.gamma.grad[c] += sum_dy_xhat[c];
    bn.beta.grad[c] += sum_dy[c];
  }

  Tensor<T> dx(grad_output.shape());
  if (cache.mode == Mode::infer) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) dx[n * C + c] = dy[n * C + c] * gamma[c] * cache.inv_std[c];
    return dx;
  }
  // dxhat = dy * gamma, so the sums above scale by gamma.
  const T inv_n = T{1} / static_cast<T>(N);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T dxhat = dy[n * C + c] * gamma[c];
      dx[n * C + c] = cache.inv_std[c] * inv_n *
                      (static_cast<T>(N) * dxhat - gamma[c] * sum_dy[c] - xhat[n * C + c] * gamma[c] * sum_dy_xhat[c]);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  // NaN passes through so a diverged layer is not silently zeroed.
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} || input[i] != input[i] ? input[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (input.shape() != grad_output.shape()) throw ShapeError("relu_backward shape mismatch");
  Tensor<T> dx(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) dx[i] = input[i] > T{0} ? grad_output[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    if (x >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T{1} + e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  if (output.shape() != grad_output.shape()) throw ShapeError("sigmoid_backward shape mismatch");
  Tensor<T> dx(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) dx[i] = grad_output[i] * output[i] * (T{1} - output[i]);
  return dx;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
  require_rank3(input, "softmax input");
  const std::size_t K = input.dim(2);
  const std::size_t rows = input.size() / K;
  Tensor<T> out(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data() + r * K;
    T* y = out.data() + r * K;
    const T mx = *std::max_element(x, x + K);
    T sum{0};
    for (std::size_t k = 0; k < K; ++k) {
      y[k] = std::exp(x[k] - mx);
      sum += y[k];
    }
    for (std::size_t k = 0; k < K; ++k) y[k] /= sum;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  if (output.shape() != grad_output.shape()) throw ShapeError("softmax_backward shape mismatch");
  const std::size_t K = output.dim(2);
  const std::size_t rows = output.size() / K;
  Tensor<T> dx(output.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* y = output.data() + r * K;
    const T* g = grad_output.data() + r * K;
    T dot{0};
    for (std::size_t k = 0; k < K; ++k) dot += g[k] * y[k];
    for (std::size_t k = 0; k < K; ++k) dx[r * K + k] = y[k] * (g[k] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// pooling / upsampling / concat
// ---------------------------------------------------------------------------

template <typename T>
PoolResult<T> max_pool1d(const Tensor<T>& input, std::size_t pool) {
  require_rank3(input, "max_pool1d input");
  const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
  if (pool == 0 || L % pool != 0) {
    throw ShapeError("max_pool1d: length " + std::to_string(L) + " not divisible by pool " + std::to_string(pool));
  }
  const std::size_t Lo = L / pool;
  PoolResult<T> r{Tensor<T>({B, Lo, C}), std::vector<std::uint32_t>(B * Lo * C)};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Lo; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = t * pool;
        T v = input.at(b, best, c);
        for (std::size_t j = 1; j < pool; ++j) {
          const T cand = input.at(b, t * pool + j, c);
          if (cand > v) {
            v = cand;
            best = t * pool + j;
          }
        }
        r.output.at(b, t, c) = v;
        r.argmax[(b * Lo + t) * C + c] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool1d_backward(const Tensor<T>& grad_output, std::span<const std::uint32_t> argmax,
                              std::size_t input_length) {
  const std::size_t B = grad_output.dim(0), Lo = grad_output.dim(1), C = grad_output.dim(2);
  if (argmax.size() != grad_output.size()) throw ShapeError("max_pool1d_backward argmax size mismatch");
  Tensor<T> dx({B, input_length, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Lo; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * Lo + t) * C + c;
        dx.at(b, argmax[i], c) += grad_output[i];
      }
  return dx;
}

template <typename T>
Tensor<T> upsample1d(const Tensor<T>& input, std::size_t rate) {
  require_rank3(input, "upsample1d input");
  if (rate == 0) throw ShapeError("upsample1d rate must be >= 1");
  const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
  Tensor<T> out({B, L * rate, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L * rate; ++t) {
      const T* src = input.data() + (b * L + t / rate) * C;
      std::copy(src, src + C, out.data() + (b * L * rate + t) * C);
    }
  return out;
}

template <typename T>
Tensor<T> upsample1d_backward(const Tensor<T>& grad_output, std::size_t rate) {
  require_rank3(grad_output, "upsample1d_backward grad");
  const std::size_t B = grad_output.dim(0), Lr = grad_output.dim(1), C = grad_output.dim(2);
  if (rate == 0 || Lr % rate != 0) throw ShapeError("upsample1d_backward: length not divisible by rate");
  const std::size_t L = Lr / rate;
  Tensor<T> dx({B, L, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Lr; ++t) {
      const T* g = grad_output.data() + (b * Lr + t) * C;
      T* d = dx.data() + (b * L + t / rate) * C;
      for (std::size_t c = 0; c < C; ++c) d[c] += g[c];
    }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one input");
  const std::size_t B = parts[0].dim(0), L = parts[0].dim(1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank3(p, "concat_channels input");
    if (p.dim(0) != B || p.dim(1) != L) {
      throw ShapeError("concat_channels: batch/length mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    total += p.dim(2);
  }
  Tensor<T> out({B, L, total});
  for (std::size_t n = 0; n < B * L; ++n) {
    T* dst = out.data() + n * total;
    for (const auto& p : parts) {
      const std::size_t C = p.dim(2);
      const T* src = p.data() + n * C;
      dst = std::copy(src, src + C, dst);
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_channels<T>(std::span<const Tensor<T>>(parts));
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& grad, std::span<const std::size_t> widths) {
  require_rank3(grad, "split_channels input");
  const std::size_t B = grad.dim(0), L = grad.dim(1), C = grad.dim(2);
  if (std::accumulate(widths.begin(), widths.end(), std::size_t{0}) != C) {
    throw ShapeError("split_channels widths do not sum to channel count");
  }
  std::vector<Tensor<T>> out;
  out.reserve(widths.size());
  for (auto w : widths) out.emplace_back(Shape{B, L, w});
  for (std::size_t n = 0; n < B * L; ++n) {
    const T* src = grad.data() + n * C;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      std::copy(src, src + widths[i], out[i].data() + n * widths[i]);
      src += widths[i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice_channel(const Tensor<T>& input, std::size_t c) {
  require_rank3(input, "slice_channel input");
  const std::size_t B = input.dim(0), L = input.dim(1), C = input.dim(2);
  if (c >= C) throw ShapeError("slice_channel index out of range");
  Tensor<T> out({B, L, 1});
  for (std::size_t n = 0; n < B * L; ++n) out[n] = input[n * C + c];
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
void adam_step(std::span<Param<T>* const> params, const AdamConfig& config) {
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T eps = static_cast<T>(config.eps);
  for (Param<T>* p : params) {
    if (p->frozen) continue;
    ++p->step_count;
    const double step = static_cast<double>(p->step_count);
    const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, step));
    const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, step));
    const T lr = static_cast<T>(config.base_lr * p->lr_multiplier);
    T* w = p->value.data();
    T* m = p->adam_m.data();
    T* v = p->adam_v.data();
    const T* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = m[i] / correction1;
      const T vhat = v[i] / correction2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

#define TSSEG_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> conv1d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,        \
                                     Tensor<T>&);                                                             \
  template struct BatchNorm<T>;                                                                               \
  template Tensor<T> batch_norm(const Tensor<T>&, BatchNorm<T>&, Mode, BatchNormCache<T>*);                   \
  template Tensor<T> batch_norm_infer(const Tensor<T>&, const BatchNorm<T>&);                                 \
  template Tensor<T> batch_norm_backward(const Tensor<T>&, BatchNorm<T>&, const BatchNormCache<T>&);          \
  template Tensor<T> relu(const Tensor<T>&);                                                                  \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                               \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                                      \
  template Tensor<T> softmax_channels_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template PoolResult<T> max_pool1d(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> max_pool1d_backward(const Tensor<T>&, std::span<const std::uint32_t>, std::size_t);      \
  template Tensor<T> upsample1d(const Tensor<T>&, std::size_t);                                               \
  template Tensor<T> upsample1d_backward(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                             \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                     \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, std::span<const std::size_t>);             \
  template Tensor<T> slice_channel(const Tensor<T>&, std::size_t);                                            \
  template void adam_step(std::span<Param<T>* const>, const AdamConfig&);

TSSEG_INSTANTIATE_OPS(float)
TSSEG_INSTANTIATE_OPS(double)

#undef TSSEG_INSTANTIATE_OPS

}  // namespace tsseg
