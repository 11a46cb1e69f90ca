#include "tsseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "tsseg/augment.hpp"
#include "tsseg/random.hpp"

namespace tsseg {

namespace {

constexpr double kNoise = 0.02;
constexpr std::size_t kWindowGap = 3;

std::size_t kind_index(AnomalyKind k) { return static_cast<std::size_t>(k); }

/// Catmull-Rom curve through `knots` spread evenly over n points.
std::vector<double> spline_through(const std::vector<double>& knots, std::size_t n) {
  std::vector<double> out(n);
  const std::size_t segs = knots.size() - 1;
  auto k = [&](std::ptrdiff_t i) {
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(segs));
    return knots[static_cast<std::size_t>(i)];
  };
  for (std::size_t t = 0; t < n; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(std::max<std::size_t>(n - 1, 1)) *
                     static_cast<double>(segs);
    const auto i = std::min(static_cast<std::ptrdiff_t>(u), static_cast<std::ptrdiff_t>(segs) - 1);
    const double s = u - static_cast<double>(i);
    const double p0 = k(i - 1), p1 = k(i), p2 = k(i + 1), p3 = k(i + 2);
    out[t] = 0.5 * ((2 * p1) + (-p0 + p2) * s + (2 * p0 - 5 * p1 + 4 * p2 - p3) * s * s +
                    (-p0 + 3 * p1 - 3 * p2 + p3) * s * s * s);
  }
  return out;
}

/// Sorted distinct cut points in (0, n).
std::vector<std::size_t> cut_points(std::size_t n, std::size_t pieces, Rng& rng) {
  std::vector<std::size_t> cuts{0, n};
  while (cuts.size() < pieces + 1 && cuts.size() < n + 1) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n) - 1));
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

struct Recipe {
  std::vector<double> values;
  std::size_t knots = 0;
};

Recipe smooth(std::size_t n, Rng& rng, std::size_t period) {
  Recipe r;
  r.values.assign(n, 0.0);
  const auto waves = rng.uniform_int(2, 5);
  for (std::int64_t w = 0; w < waves; ++w) {
    const double amp = rng.uniform(0.2, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    double p;
    if (period) {
      p = static_cast<double>(period) / static_cast<double>(rng.uniform_int(1, 3));
    } else {
      p = rng.uniform(static_cast<double>(n) / 16.0, static_cast<double>(n));
    }
    for (std::size_t t = 0; t < n; ++t) r.values[t] += amp * std::sin(2.0 * M_PI * static_cast<double>(t) / p + phase);
  }
  if (!period) {
    std::vector<double> knots(5);
    for (auto& k : knots) k = rng.normal(0.0, 0.5);
    const auto drift = spline_through(knots, n);
    for (std::size_t t = 0; t < n; ++t) r.values[t] += drift[t];
  }
  return r;
}

Recipe piecewise_linear(std::size_t n, Rng& rng) {
  Recipe r;
  r.knots = static_cast<std::size_t>(rng.uniform_int(3, 10));
  const auto cuts = cut_points(n, r.knots, rng);
  std::vector<double> level(cuts.size());
  for (auto& v : level) v = rng.normal(0.0, 1.0);
  r.values.resize(n);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double span = static_cast<double>(cuts[i + 1] - cuts[i]);
    for (std::size_t t = cuts[i]; t < cuts[i + 1]; ++t) {
      const double u = static_cast<double>(t - cuts[i]) / span;
      r.values[t] = level[i] + u * (level[i + 1] - level[i]);
    }
  }
  return r;
}

Recipe piecewise_constant(std::size_t n, Rng& rng) {
  Recipe r;
  r.knots = static_cast<std::size_t>(rng.uniform_int(2, 8));
  const auto cuts = cut_points(n, r.knots, rng);
  r.values.resize(n);
  double prev = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double v = rng.normal(0.0, 1.0);
    if (i > 0 && std::abs(v - prev) < 0.3) v = prev + (v >= prev ? 0.3 : -0.3);
    prev = v;
    for (std::size_t t = cuts[i]; t < cuts[i + 1]; ++t) r.values[t] = v;
  }
  return r;
}

Recipe pulse(std::size_t n, Rng& rng, bool regular) {
  Recipe r;
  r.values.assign(n, 0.0);
  const double height = rng.uniform(0.8, 2.0);
  const bool triangular = rng.bernoulli(0.5);
  const auto width = static_cast<std::size_t>(std::max<std::int64_t>(1, rng.uniform_int(2, std::max<std::int64_t>(2, static_cast<std::int64_t>(n / 8)))));
  auto stamp = [&](std::size_t start, double h) {
    for (std::size_t j = 0; j < width && start + j < n; ++j) {
      double shape = 1.0;
      if (triangular) shape = 1.0 - std::abs(2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(width) - 1.0);
      r.values[start + j] = h * shape;
    }
  };
  if (regular) {
    stamp(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - std::min(n, width)))), height);
  } else {
    const auto count = rng.uniform_int(2, 8);
    for (std::int64_t i = 0; i < count; ++i) {
      stamp(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)),
            height * rng.uniform(0.7, 1.3));
    }
  }
  return r;
}

Recipe recipe(NominalFamily family, std::size_t n, Rng& rng, std::size_t period) {
  switch (family) {
    case NominalFamily::smooth: return smooth(n, rng, period);
    case NominalFamily::piecewise_linear: return piecewise_linear(n, rng);
    case NominalFamily::piecewise_constant: return piecewise_constant(n, rng);
    case NominalFamily::pulse: return pulse(n, rng, period != 0);
  }
  return {};
}

std::size_t draw_period(std::size_t length, Rng& rng) {
  const std::size_t hi = std::max<std::size_t>(length / 4, 8);
  const std::size_t lo = std::min<std::size_t>(32, hi);
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

bool window_free(const LabeledSeries& s, std::size_t begin, std::size_t end) {
  for (const auto& a : s.meta.anomalies) {
    if (begin < a.end + kWindowGap && a.begin < end + kWindowGap) return false;
  }
  return true;
}

/// Centred moving average (truncated at the edges).
std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
  const std::size_t half = width / 2;
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t lo = t > half ? t - half : 0;
    const std::size_t hi = std::min(x.size(), t + half + 1);
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += x[j];
    out[t] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

std::pair<std::size_t, std::size_t> duration_range(const LabeledSeries& s, const AnomalySpec& spec) {
  std::size_t lo = spec.min_duration, hi = spec.max_duration;
  if (spec.kind == AnomalyKind::cyclic_violation && lo == 0) {
    lo = std::max<std::size_t>(s.meta.period / 2, 1);
    hi = std::max(lo, std::min(2 * s.meta.period, s.length / 3));
  }
  hi = std::min(hi, std::max<std::size_t>(s.length / 3, 1));
  lo = std::min(lo, hi);
  return {lo, hi};
}

}  // namespace

AnomalySpec AnomalySpec::defaults(AnomalyKind kind) {
  AnomalySpec s;
  s.kind = kind;
  s.label = kind == AnomalyKind::unusual_shape ? 0 : kind_index(kind);
  switch (kind) {
    case AnomalyKind::additive_outlier:
      s.min_duration = 1;
      s.max_duration = 5;
      s.min_intensity = 4.0;
      s.max_intensity = 8.0;
      break;
    case AnomalyKind::volatility_change:
      s.min_duration = 16;
      s.max_duration = 64;
      s.min_intensity = 3.0;
      s.max_intensity = 6.0;
      break;
    case AnomalyKind::cyclic_violation:
      // 0 means "derived from the period": [P/2, 2P].
      s.min_duration = 0;
      s.max_duration = 0;
      s.min_intensity = 0.0;
      s.max_intensity = 0.0;
      break;
    case AnomalyKind::unusual_shape:
      s.min_duration = 16;
      s.max_duration = 256;
      break;
  }
  return s;
}

LabeledSeries gen_nominal(NominalFamily family, std::size_t length, std::uint64_t seed, bool cyclic,
                          std::size_t classes) {
  if (length < 64) throw DataError("nominal series need length >= 64");
  if (classes < 1) throw DataError("at least one mask column is required");
  Rng rng(seed);
  LabeledSeries s = LabeledSeries::zeros(length, 1, classes);
  s.meta.family = family;
  s.meta.cyclic = cyclic;
  s.meta.seed = seed;
  Recipe r;
  if (cyclic) {
    s.meta.period = draw_period(length, rng);
    Recipe one = recipe(family, s.meta.period, rng, s.meta.period);
    r.knots = one.knots;
    r.values.resize(length);
    for (std::size_t t = 0; t < length; ++t) r.values[t] = one.values[t % s.meta.period];
  } else {
    r = recipe(family, length, rng, 0);
  }
  s.meta.knots = r.knots;
  const bool noisy = family != NominalFamily::piecewise_constant;
  for (std::size_t t = 0; t < length; ++t) s.value(t) = r.values[t] + (noisy ? rng.normal(0.0, kNoise) : 0.0);
  return s;
}

LabeledSeries inject_anomaly_at(const LabeledSeries& series, const AnomalySpec& spec, std::size_t begin,
                                std::size_t duration, std::uint64_t seed) {
  series.check();
  if (duration == 0) throw DataError("anomaly duration must be >= 1");
  if (begin + duration > series.length) throw DataError("anomaly window does not fit in the series");
  if (spec.label >= series.classes) throw DataError("anomaly label column out of range");
  if (spec.kind == AnomalyKind::cyclic_violation && !series.meta.cyclic) {
    throw DataError("cyclic_violation needs a cyclic series");
  }
  if (spec.kind == AnomalyKind::unusual_shape) throw DataError("unusual_shape windows come from the shape task");
  Rng rng(seed);
  LabeledSeries out = series;
  const std::size_t end = begin + duration;
  AnomalyDescriptor d;
  d.kind = spec.kind;
  d.label = spec.label;
  d.begin = begin;
  d.end = end;
  for (std::size_t c = 0; c < series.channels; ++c) {
    const double scale = local_scale(series, begin, end, 64, c);
    switch (spec.kind) {
      case AnomalyKind::additive_outlier: {
        d.intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        d.variant = duration == 1 ? "spike" : "level_shift";
        for (std::size_t t = begin; t < end; ++t) out.value(t, c) += sign * d.intensity * scale;
        break;
      }
      case AnomalyKind::volatility_change: {
        d.intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
        d.variant = "increase";
        const auto trend = moving_average(series.channel(c), 9);
        double dev = 0.0;
        for (std::size_t t = begin; t < end; ++t) dev += std::pow(series.value(t, c) - trend[t], 2);
        dev = std::sqrt(dev / static_cast<double>(duration));
        // Flat stretches have nothing to amplify; give them a noise floor.
        const double floor = 0.1 * scale;
        const double extra = std::sqrt(std::max(0.0, floor * floor - dev * dev));
        for (std::size_t t = begin; t < end; ++t) {
          out.value(t, c) =
              trend[t] + d.intensity * (series.value(t, c) - trend[t]) + d.intensity * extra * rng.normal();
        }
        break;
      }
      case AnomalyKind::cyclic_violation: {
        const std::size_t p = series.meta.period;
        const auto style = rng.uniform_int(0, 2);
        double mean = 0.0;
        for (std::size_t t = begin; t < end; ++t) mean += series.value(t, c);
        mean /= static_cast<double>(duration);
        if (style == 0) {
          d.variant = "phase_shift";
          const auto shift = static_cast<std::size_t>(rng.uniform_int(
              static_cast<std::int64_t>(std::max<std::size_t>(p / 4, 1)), static_cast<std::int64_t>(std::max<std::size_t>(3 * p / 4, 1))));
          d.intensity = static_cast<double>(shift);
          for (std::size_t t = begin; t < end; ++t) {
            const std::size_t src = t + shift < series.length ? t + shift : t - std::min(t, p - shift % p);
            out.value(t, c) = series.value(src, c);
          }
        } else if (style == 1) {
          d.variant = "amplitude";
          d.intensity = rng.bernoulli(0.5) ? rng.uniform(2.0, 3.0) : rng.uniform(0.1, 0.3);
          for (std::size_t t = begin; t < end; ++t) out.value(t, c) = mean + d.intensity * (series.value(t, c) - mean);
        } else {
          d.variant = "flatten";
          d.intensity = 0.0;
          for (std::size_t t = begin; t < end; ++t) out.value(t, c) = mean + rng.normal(0.0, kNoise);
        }
        break;
      }
      case AnomalyKind::unusual_shape:
        break;
    }
  }
  for (std::size_t t = begin; t < end; ++t) out.label(t, spec.label) = 1;
  auto pos = std::upper_bound(out.meta.anomalies.begin(), out.meta.anomalies.end(), d,
                              [](const auto& x, const auto& y) { return x.begin < y.begin; });
  out.meta.anomalies.insert(pos, d);
  return out;
}

LabeledSeries inject_anomaly(const LabeledSeries& series, const AnomalySpec& spec, std::uint64_t seed) {
  if (spec.kind == AnomalyKind::cyclic_violation && !series.meta.cyclic) {
    throw DataError("cyclic_violation needs a cyclic series");
  }
  if (spec.max_duration == 0 && spec.kind != AnomalyKind::cyclic_violation) {
    throw DataError("anomaly duration must be >= 1");
  }
  Rng rng(seed);
  const auto [lo, hi] = duration_range(series, spec);
  if (hi == 0) throw DataError("anomaly duration must be >= 1");
  for (int attempt = 0; attempt < 200; ++attempt) {
    const auto d = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    if (d > series.length) continue;
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(series.length - d)));
    if (window_free(series, b, b + d)) return inject_anomaly_at(series, spec, b, d, rng.next());
  }
  throw DataError("no free window for " + std::string(to_string(spec.kind)));
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

void Dataset::check() const {
  if (class_kinds.size() != classes) throw DataError("dataset class_kinds does not match classes");
  for (const auto& s : samples) {
    s.check();
    if (s.length != length || s.channels != channels || s.classes != classes) {
      throw DataError("dataset sample layout differs from the dataset header");
    }
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> Dataset::split(double held_out_fraction,
                                                                             std::uint64_t seed) const {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  auto held = static_cast<std::size_t>(std::lround(held_out_fraction * static_cast<double>(idx.size())));
  if (held >= idx.size() && !idx.empty()) held = idx.size() - 1;
  std::vector<std::size_t> out(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> in(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
  std::sort(in.begin(), in.end());
  std::sort(out.begin(), out.end());
  return {in, out};
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset d = *this;
  d.samples.clear();
  for (auto i : indices) d.samples.push_back(samples.at(i));
  return d;
}

namespace {

LabeledSeries nominal_augment(LabeledSeries s, Rng& rng) {
  const std::size_t n = s.length;
  if (rng.bernoulli(0.4)) {
    s = apply(AugmentOp::make(AugmentKind::crop_resample).set("fraction", {0.7, 1.0}), s, rng.next(), nullptr, n);
  }
  if (!s.meta.cyclic && rng.bernoulli(0.3)) {
    s = apply(AugmentOp::make(AugmentKind::time_warp).set("strength", {0.1, 0.4}), s, rng.next());
  }
  if (rng.bernoulli(0.5)) {
    s = apply(AugmentOp::make(AugmentKind::add_trend).set("slope", {-0.5, 0.5}).set("curvature", {-0.5, 0.5}), s,
              rng.next());
  }
  if (rng.bernoulli(0.4)) {
    s = apply(AugmentOp::make(AugmentKind::jitter).set("sigma", {0.01, 0.05}), s, rng.next());
  }
  return s;
}

NominalFamily draw_family(Rng& rng) {
  return kAllFamilies[static_cast<std::size_t>(rng.uniform_int(0, std::size(kAllFamilies) - 1))];
}

}  // namespace

Dataset make_pretraining_set(std::size_t n, std::size_t length, std::uint64_t seed, const PretrainOptions& opts) {
  if (n < 1) throw DataError("dataset size must be >= 1");
  Dataset ds;
  ds.task = "pretrain";
  ds.seed = seed;
  ds.length = length;
  ds.classes = 3;
  ds.class_kinds = {AnomalyKind::additive_outlier, AnomalyKind::volatility_change, AnomalyKind::cyclic_violation};
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, i);
    const NominalFamily family = draw_family(rng);
    const bool cyclic = rng.bernoulli(opts.cyclic_fraction);
    const std::uint64_t sample_seed = rng.next();
    LabeledSeries s = gen_nominal(family, length, sample_seed, cyclic, 3);
    if (opts.nominal_augmentation) s = nominal_augment(std::move(s), rng);
    if (!rng.bernoulli(opts.anomaly_free_fraction)) {
      std::vector<AnomalyKind> kinds;
      if (rng.bernoulli(opts.p_additive)) kinds.push_back(AnomalyKind::additive_outlier);
      if (rng.bernoulli(opts.p_volatility)) kinds.push_back(AnomalyKind::volatility_change);
      if (cyclic && rng.bernoulli(opts.p_cyclic_violation)) kinds.push_back(AnomalyKind::cyclic_violation);
      if (kinds.empty()) {
        const auto top = cyclic ? 2 : 1;
        kinds.push_back(ds.class_kinds[static_cast<std::size_t>(rng.uniform_int(0, top))]);
      }
      for (auto k : kinds) {
        const auto count = k == AnomalyKind::additive_outlier ? rng.uniform_int(1, 3) : rng.uniform_int(1, 2);
        for (std::int64_t j = 0; j < count; ++j) {
          try {
            s = inject_anomaly(s, AnomalySpec::defaults(k), rng.next());
          } catch (const DataError&) {
            // Series too crowded for another window; keep what fits.
          }
        }
      }
    }
    s.meta.seed = sample_seed;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset make_shape_task_set(std::size_t n, std::size_t length, std::uint64_t seed) {
  if (n < 1) throw DataError("dataset size must be >= 1");
  Dataset ds;
  ds.task = "shapes";
  ds.seed = seed;
  ds.length = length;
  ds.classes = 1;
  ds.class_kinds = {AnomalyKind::unusual_shape};
  ds.samples.reserve(n);
  const std::size_t wmin = std::max<std::size_t>(length / 16, 4);
  const std::size_t wmax = std::max(wmin, length / 4);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, i);
    const NominalFamily base_family = draw_family(rng);
    const bool cyclic = rng.bernoulli(0.5);
    const std::uint64_t sample_seed = rng.next();
    LabeledSeries s = gen_nominal(base_family, length, sample_seed, cyclic, 1);
    const double global_std = std::max(stddev_of(s.channel()), 0.1);
    const auto windows = rng.uniform_int(1, 3);
    for (std::int64_t w = 0; w < windows; ++w) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const auto len = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(wmin), static_cast<std::int64_t>(wmax)));
        const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(length - len)));
        if (!window_free(s, b, b + len)) continue;
        NominalFamily other = draw_family(rng);
        while (other == base_family) other = draw_family(rng);
        Rng seg_rng(rng.next());
        Recipe seg = recipe(other, len, seg_rng, 0);
        std::vector<double> base_window(s.values.begin() + static_cast<std::ptrdiff_t>(b),
                                        s.values.begin() + static_cast<std::ptrdiff_t>(b + len));
        const double target_mean = mean_of(base_window);
        const double target_std = std::max(stddev_of(base_window), 0.5 * global_std);
        const double seg_mean = mean_of(seg.values);
        const double seg_std = std::max(stddev_of(seg.values), 1e-6);
        for (std::size_t t = 0; t < len; ++t) {
          s.value(b + t) = target_mean + target_std * (seg.values[t] - seg_mean) / seg_std + seg_rng.normal(0.0, kNoise);
          s.label(b + t) = 1;
        }
        AnomalyDescriptor d;
        d.kind = AnomalyKind::unusual_shape;
        d.begin = b;
        d.end = b + len;
        d.intensity = 1.0;
        d.variant = std::string(to_string(other));
        auto pos = std::upper_bound(s.meta.anomalies.begin(), s.meta.anomalies.end(), d,
                                    [](const auto& x, const auto& y) { return x.begin < y.begin; });
        s.meta.anomalies.insert(pos, d);
        break;
      }
    }
    static const AugmentKind shape_ops[] = {AugmentKind::crop_resample, AugmentKind::time_warp, AugmentKind::add_trend,
                                            AugmentKind::reverse, AugmentKind::linear_op, AugmentKind::jitter};
    const auto passes = rng.uniform_int(1, 2);
    for (std::int64_t p = 0; p < passes; ++p) {
      AugmentOp op = AugmentOp::make(shape_ops[static_cast<std::size_t>(rng.uniform_int(0, std::size(shape_ops) - 1))]);
      if (op.kind == AugmentKind::crop_resample) op.set("fraction", {0.75, 1.0});
      if (op.kind == AugmentKind::jitter) op.set("sigma", {0.01, 0.05});
      s = apply(op, s, rng.next(), nullptr, length);
    }
    s.meta.seed = sample_seed;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset make_crops(const LabeledSeries& source, std::size_t n, std::size_t length, std::uint64_t seed,
                   std::vector<AnomalyKind> class_kinds) {
  source.check();
  if (n < 1) throw DataError("dataset size must be >= 1");
  if (source.length < length) throw DataError("source series is shorter than the crop length");
  if (class_kinds.empty()) class_kinds.assign(source.classes, AnomalyKind::unusual_shape);
  if (class_kinds.size() != source.classes) throw DataError("class kind count differs from mask columns");
  Dataset ds;
  ds.task = "crops";
  ds.seed = seed;
  ds.length = length;
  ds.channels = source.channels;
  ds.classes = source.classes;
  ds.class_kinds = std::move(class_kinds);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(source.length - length)));
    LabeledSeries s = LabeledSeries::zeros(length, source.channels, source.classes);
    s.meta = source.meta;
    s.meta.anomalies.clear();
    s.meta.seed = b;
    std::copy_n(source.values.begin() + static_cast<std::ptrdiff_t>(b * source.channels), length * source.channels,
                s.values.begin());
    std::copy_n(source.mask.begin() + static_cast<std::ptrdiff_t>(b * source.classes), length * source.classes,
                s.mask.begin());
    for (const auto& a : source.meta.anomalies) {
      const std::size_t lo = std::max(a.begin, b), hi = std::min(a.end, b + length);
      if (lo < hi) {
        auto moved = a;
        moved.begin = lo - b;
        moved.end = hi - b;
        s.meta.anomalies.push_back(moved);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace tsseg
