#include "tsseg/stream.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace tsseg {

SnapshotPlan SnapshotPlan::with_coverage(std::size_t snapshot_length, std::size_t coverage,
                                         std::size_t model_input_length) {
  if (coverage == 0) throw DataError("coverage must be >= 1");
  return {snapshot_length, std::max<std::size_t>(snapshot_length / coverage, 1), model_input_length};
}

void SnapshotPlan::validate(bool force) const {
  if (snapshot_length < 2) throw DataError("snapshot length must be >= 2");
  if (model_input_length < 2) throw DataError("model input length must be >= 2");
  if (stride == 0) throw DataError("stride must be >= 1");
  if (stride > snapshot_length && !force) {
    throw DataError("stride " + std::to_string(stride) + " exceeds snapshot length " + std::to_string(snapshot_length) +
                    " and would leave gaps");
  }
}

std::vector<Window> plan_snapshots(std::size_t stream_length, const SnapshotPlan& plan, bool force) {
  plan.validate(force);
  if (stream_length < plan.snapshot_length) {
    throw DataError("stream of " + std::to_string(stream_length) + " points is shorter than one snapshot (" +
                    std::to_string(plan.snapshot_length) + ")");
  }
  std::vector<Window> out;
  std::size_t b = 0;
  for (; b + plan.snapshot_length <= stream_length; b += plan.stride) out.push_back({b, b + plan.snapshot_length});
  if (out.back().end < stream_length) out.push_back({stream_length - plan.snapshot_length, stream_length});
  return out;
}

std::vector<std::uint32_t> coverage_counts(std::span<const Window> windows, std::size_t stream_length) {
  std::vector<std::int64_t> diff(stream_length + 1, 0);
  for (const auto& w : windows) {
    if (w.end > stream_length || w.begin >= w.end) throw DataError("window outside the stream");
    ++diff[w.begin];
    --diff[w.end];
  }
  std::vector<std::uint32_t> out(stream_length);
  std::int64_t run = 0;
  for (std::size_t t = 0; t < stream_length; ++t) {
    run += diff[t];
    out[t] = static_cast<std::uint32_t>(run);
  }
  return out;
}

std::vector<double> resample(std::span<const double> x, std::size_t len, std::size_t C, std::size_t target) {
  if (len < 1 || target < 1) throw DataError("resample lengths must be >= 1");
  if (x.size() != len * C) throw DataError("resample input size does not match length x channels");
  if (target == len) return {x.begin(), x.end()};
  std::vector<double> out(target * C);
  if (target < len) {
    const double w = static_cast<double>(len) / static_cast<double>(target);
    for (std::size_t i = 0; i < target; ++i) {
      const double e0 = static_cast<double>(i) * w;
      const double e1 = i + 1 == target ? static_cast<double>(len) : static_cast<double>(i + 1) * w;
      const auto j0 = static_cast<std::size_t>(std::floor(e0));
      const auto j1 = std::min(len, static_cast<std::size_t>(std::ceil(e1)));
      for (std::size_t c = 0; c < C; ++c) {
        // Offsets from the first sample keep constant bins exactly constant.
        const double ref = x[j0 * C + c];
        double acc = 0.0, wsum = 0.0;
        for (std::size_t j = j0; j < j1; ++j) {
          const double ov = std::min(e1, double(j + 1)) - std::max(e0, double(j));
          if (ov <= 0.0) continue;
          acc += ov * (x[j * C + c] - ref);
          wsum += ov;
        }
        out[i * C + c] = ref + acc / wsum;
      }
    }
  } else {
    const double step = len == 1 ? 0.0 : static_cast<double>(len - 1) / static_cast<double>(target - 1);
    for (std::size_t i = 0; i < target; ++i) {
      const double pos = static_cast<double>(i) * step;
      const auto j = std::min(static_cast<std::size_t>(std::floor(pos)), len - 1);
      const double f = pos - static_cast<double>(j);
      for (std::size_t c = 0; c < C; ++c) {
        const double a = x[j * C + c];
        out[i * C + c] = (j + 1 < len && f > 0.0) ? a + f * (x[(j + 1) * C + c] - a) : a;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> resample_mask(std::span<const std::uint8_t> mask, std::size_t len, std::size_t M,
                                        std::size_t target) {
  if (mask.size() != len * M) throw DataError("resample_mask size does not match length x classes");
  if (target == len) return {mask.begin(), mask.end()};
  std::vector<std::uint8_t> out(target * M, 0);
  if (target < len) {
    const double w = static_cast<double>(len) / static_cast<double>(target);
    for (std::size_t i = 0; i < target; ++i) {
      const auto j0 = static_cast<std::size_t>(std::floor(static_cast<double>(i) * w));
      const auto j1 = i + 1 == target ? len : std::min(len, static_cast<std::size_t>(std::ceil(static_cast<double>(i + 1) * w)));
      for (std::size_t j = j0; j < j1; ++j)
        for (std::size_t m = 0; m < M; ++m) out[i * M + m] |= mask[j * M + m];
    }
  } else {
    const double step = static_cast<double>(len - 1) / static_cast<double>(target - 1);
    for (std::size_t i = 0; i < target; ++i) {
      const auto j = std::min(len - 1, static_cast<std::size_t>(std::lround(static_cast<double>(i) * step)));
      for (std::size_t m = 0; m < M; ++m) out[i * M + m] = mask[j * M + m];
    }
  }
  return out;
}

void NormalizationSpec::validate(std::size_t channels) const {
  if (mode == NormMode::per_snapshot) return;
  if (scale.empty() || (scale.size() != 1 && scale.size() != channels)) {
    throw DataError("normalization scale needs 1 or " + std::to_string(channels) + " entries");
  }
  if (center.size() > 1 && center.size() != channels) {
    throw DataError("normalization center needs 1 or " + std::to_string(channels) + " entries");
  }
  for (double s : scale)
    if (!(s > 0.0)) throw DataError("normalization scale must be positive");
}

void normalize(std::span<double> x, std::size_t len, std::size_t C, const NormalizationSpec& spec) {
  spec.validate(C);
  if (x.size() != len * C) throw DataError("normalize input size does not match length x channels");
  for (std::size_t c = 0; c < C; ++c) {
    double center, scale;
    if (spec.mode == NormMode::fixed_scale) {
      center = spec.center.empty() ? 0.0 : spec.center[spec.center.size() == 1 ? 0 : c];
      scale = spec.scale[spec.scale.size() == 1 ? 0 : c];
    } else {
      double m = 0.0;
      for (std::size_t t = 0; t < len; ++t) m += x[t * C + c];
      m /= static_cast<double>(len);
      double v = 0.0;
      for (std::size_t t = 0; t < len; ++t) v += (x[t * C + c] - m) * (x[t * C + c] - m);
      center = m;
      scale = std::sqrt(v / static_cast<double>(len)) + 1e-8;
    }
    for (std::size_t t = 0; t < len; ++t) x[t * C + c] = (x[t * C + c] - center) / scale;
  }
}

EnsembleResult ensemble(const std::vector<std::vector<double>>& window_probs, std::span<const Window> windows,
                        std::size_t N, std::size_t K, EnsembleRule rule) {
  if (window_probs.size() != windows.size()) throw DataError("one probability block per window is required");
  EnsembleResult r;
  r.coverage = coverage_counts(windows, N);
  std::vector<double> acc(N * K, rule == EnsembleRule::mean ? 0.0 : -std::numeric_limits<double>::infinity());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    if (window_probs[w].size() != (win.end - win.begin) * K) throw DataError("window probabilities have the wrong size");
    for (std::size_t t = win.begin; t < win.end; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const double p = window_probs[w][(t - win.begin) * K + k];
        double& a = acc[t * K + k];
        a = rule == EnsembleRule::mean ? a + p : std::max(a, p);
      }
    }
  }
  r.probs.assign(N * K, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < N; ++t) {
    if (r.coverage[t] == 0) {
      ++r.uncovered;
      continue;
    }
    for (std::size_t k = 0; k < K; ++k) {
      r.probs[t * K + k] = rule == EnsembleRule::mean ? acc[t * K + k] / r.coverage[t] : acc[t * K + k];
    }
  }
  return r;
}

std::vector<AnomalyEvent> extract_events(std::span<const double> probs, std::size_t N, std::size_t K,
                                         const EventRule& rule) {
  if (probs.size() != N * K) throw DataError("probability size does not match length x classes");
  std::vector<AnomalyEvent> out;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;  // inclusive
    for (std::size_t t = 0; t < N;) {
      if (!(probs[t * K + k] > rule.threshold)) {
        ++t;
        continue;
      }
      std::size_t e = t;
      while (e + 1 < N && probs[(e + 1) * K + k] > rule.threshold) ++e;
      if (!runs.empty() && t - runs.back().second - 1 <= rule.merge_gap) {
        runs.back().second = e;
      } else {
        runs.emplace_back(t, e);
      }
      t = e + 1;
    }
    for (const auto& [s, e] : runs) {
      if (e - s + 1 < rule.min_len) continue;
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t t = s; t <= e; ++t) {
        const double p = probs[t * K + k];
        if (std::isnan(p)) continue;
        acc += p;
        ++n;
      }
      out.push_back({s, e, k, n ? acc / static_cast<double>(n) : 0.0});
    }
  }
  return out;
}

std::vector<AnomalyEvent> events_from_mask(std::span<const std::uint8_t> mask, std::size_t N, std::size_t M) {
  std::vector<double> p(mask.begin(), mask.end());
  return extract_events(p, N, M, EventRule{0.5, 1, 0});
}

EventScore score_events(std::span<const AnomalyEvent> predicted, std::span<const AnomalyEvent> truth) {
  auto overlaps = [](const AnomalyEvent& a, const AnomalyEvent& b) {
    return a.cls == b.cls && a.start <= b.end && b.start <= a.end;
  };
  EventScore s;
  s.predicted = predicted.size();
  s.truth = truth.size();
  std::size_t hits = 0, found = 0;
  for (const auto& p : predicted)
    if (std::any_of(truth.begin(), truth.end(), [&](const auto& g) { return overlaps(p, g); })) ++hits;
  for (const auto& g : truth)
    if (std::any_of(predicted.begin(), predicted.end(), [&](const auto& p) { return overlaps(p, g); })) ++found;
  if (!predicted.empty()) s.precision = static_cast<double>(hits) / static_cast<double>(predicted.size());
  if (!truth.empty()) s.recall = static_cast<double>(found) / static_cast<double>(truth.size());
  return s;
}

Imputed impute_missing(std::span<const double> values, std::size_t N, std::size_t C) {
  if (values.size() != N * C) throw DataError("stream size does not match length x channels");
  Imputed r;
  r.values.assign(values.begin(), values.end());
  r.imputed.assign(N, 0);
  for (std::size_t c = 0; c < C; ++c) {
    std::ptrdiff_t last = -1;
    for (std::size_t t = 0; t <= N; ++t) {
      const bool ok = t < N && std::isfinite(values[t * C + c]);
      if (t < N && !ok) {
        r.imputed[t] = 1;
        continue;
      }
      const std::size_t gap_begin = static_cast<std::size_t>(last + 1);
      if (gap_begin < t) {
        for (std::size_t g = gap_begin; g < t; ++g) {
          double v;
          if (last < 0 && t == N) {
            throw DataError("channel " + std::to_string(c + 1) + " has no observed values");
          } else if (last < 0) {
            v = values[t * C + c];
          } else if (t == N) {
            v = values[static_cast<std::size_t>(last) * C + c];
          } else {
            const double a = values[static_cast<std::size_t>(last) * C + c], b = values[t * C + c];
            const double f = static_cast<double>(g - static_cast<std::size_t>(last)) / static_cast<double>(t - static_cast<std::size_t>(last));
            v = a + f * (b - a);
          }
          r.values[g * C + c] = v;
        }
      }
      last = static_cast<std::ptrdiff_t>(t);
    }
  }
  for (auto f : r.imputed) r.count += f;
  return r;
}

template <typename T>
DetectResult detect(const Model<T>& model, std::span<const double> values, std::size_t N, std::size_t C,
                    const DetectConfig& config) {
  const ArchSpec& spec = model.spec();
  if (C != spec.channels) {
    throw DataError("stream has " + std::to_string(C) + " channels; model expects " + std::to_string(spec.channels));
  }
  if (config.plan.model_input_length != spec.input_length) {
    throw DataError("plan model_input_length differs from the model input length");
  }
  config.norm.validate(C);
  DetectResult r;
  r.length = N;
  r.classes = spec.classes;
  const Imputed filled = impute_missing(values, N, C);
  r.imputed = filled.imputed;
  r.windows = plan_snapshots(N, config.plan, config.force_gaps);

  const std::size_t W = r.windows.size();
  const std::size_t L = spec.input_length, M = spec.classes;
  const std::size_t batch = std::max<std::size_t>(config.batch_size, 1);
  std::vector<std::vector<double>> window_probs(W);

  auto run_batch = [&](std::size_t first) {
    const std::size_t count = std::min(batch, W - first);
    Tensor<T> input(Shape{count, L, C});
    for (std::size_t i = 0; i < count; ++i) {
      const Window& w = r.windows[first + i];
      const std::span<const double> raw(filled.values.data() + w.begin * C, (w.end - w.begin) * C);
      auto x = resample(raw, w.end - w.begin, C, L);
      normalize(x, L, C, config.norm);
      for (std::size_t j = 0; j < L * C; ++j) input[i * L * C + j] = static_cast<T>(x[j]);
    }
    const Tensor<T> probs = model.infer(input);
    for (std::size_t i = 0; i < count; ++i) {
      const Window& w = r.windows[first + i];
      std::vector<double> p(L * M);
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t m = 0; m < M; ++m) p[t * M + m] = static_cast<double>(probs.at(i, t, m));
      auto back = resample(p, L, M, w.end - w.begin);
      for (auto& v : back) v = std::clamp(v, 0.0, 1.0);
      window_probs[first + i] = std::move(back);
    }
  };

  std::vector<std::size_t> starts;
  for (std::size_t b = 0; b < W; b += batch) starts.push_back(b);
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(starts.size(), 1));
  if (threads == 1) {
    for (auto s : starts) run_batch(s);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t th = 0; th < threads; ++th) {
      pool.emplace_back([&, th] {
        try {
          for (std::size_t i = th; i < starts.size(); i += threads) run_batch(starts[i]);
        } catch (...) {
          errors[th] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EnsembleResult ens = ensemble(window_probs, r.windows, N, M, config.rule);
  r.probs = std::move(ens.probs);
  r.coverage = std::move(ens.coverage);
  r.uncovered = ens.uncovered;
  r.events = extract_events(r.probs, N, M, config.events);
  return r;
}

template DetectResult detect<float>(const Model<float>&, std::span<const double>, std::size_t, std::size_t,
                                    const DetectConfig&);
template DetectResult detect<double>(const Model<double>&, std::span<const double>, std::size_t, std::size_t,
                                     const DetectConfig&);

}  // namespace tsseg
