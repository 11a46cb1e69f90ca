#include "tsseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsseg/random.hpp"

namespace tsseg {

std::string_view to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::crop_resample: return "crop_resample";
    case AugmentKind::jitter: return "jitter";
    case AugmentKind::time_warp: return "time_warp";
    case AugmentKind::zoom: return "zoom";
    case AugmentKind::add_trend: return "add_trend";
    case AugmentKind::reverse: return "reverse";
    case AugmentKind::linear_op: return "linear_op";
    case AugmentKind::mutate_pair: return "mutate_pair";
  }
  return "?";
}

AugmentKind parse_augment_kind(std::string_view s) {
  for (auto k : kAllAugmentKinds)
    if (to_string(k) == s) return k;
  throw DataError("unknown augmentation '" + std::string(s) + "'");
}

bool is_index_mapping(AugmentKind k) {
  return k == AugmentKind::crop_resample || k == AugmentKind::time_warp || k == AugmentKind::zoom ||
         k == AugmentKind::reverse;
}

bool is_value_only(AugmentKind k) {
  return k == AugmentKind::jitter || k == AugmentKind::add_trend || k == AugmentKind::linear_op;
}

// ---------------------------------------------------------------------------
// AugmentOp
// ---------------------------------------------------------------------------

namespace {

const std::map<AugmentKind, std::map<std::string, Range>>& default_params() {
  static const std::map<AugmentKind, std::map<std::string, Range>> defaults = {
      {AugmentKind::crop_resample, {{"fraction", {0.6, 0.95}}}},
      {AugmentKind::jitter, {{"sigma", {0.01, 0.1}}}},
      {AugmentKind::time_warp, {{"strength", {0.1, 0.5}}, {"segments", {4, 8}}}},
      {AugmentKind::zoom, {{"factor", {1.1, 1.6}}}},
      {AugmentKind::add_trend, {{"slope", {-1.0, 1.0}}, {"curvature", {-1.0, 1.0}}}},
      {AugmentKind::reverse, {}},
      {AugmentKind::linear_op, {{"scale", {0.5, 2.0}}, {"offset", {-1.0, 1.0}}}},
      {AugmentKind::mutate_pair, {{"fraction", {0.1, 0.3}}}},
  };
  return defaults;
}

bool known_key(AugmentKind kind, const std::string& key) {
  if (kind == AugmentKind::zoom && key == "center") return true;
  return default_params().at(kind).count(key) != 0;
}

}  // namespace

AugmentOp AugmentOp::make(AugmentKind kind) {
  AugmentOp op;
  op.kind = kind;
  op.params = default_params().at(kind);
  return op;
}

Range AugmentOp::param(const std::string& key) const {
  auto it = params.find(key);
  if (it != params.end()) return it->second;
  auto d = default_params().at(kind).find(key);
  if (d != default_params().at(kind).end()) return d->second;
  throw DataError(std::string(to_string(kind)) + " has no parameter '" + key + "'");
}

AugmentOp& AugmentOp::set(const std::string& key, Range r) {
  if (!known_key(kind, key)) throw DataError(std::string(to_string(kind)) + " has no parameter '" + key + "'");
  if (r.lo > r.hi) throw DataError("parameter '" + key + "' has lo > hi");
  params[key] = r;
  return *this;
}

// ---------------------------------------------------------------------------
// Remapping
// ---------------------------------------------------------------------------

namespace {

/// Fraction of [e0, e1) covered by cells [b, e), and whether one of those
/// cell centres falls inside [e0, e1).
bool transported_label(double e0, double e1, std::size_t b, std::size_t e) {
  const double width = e1 - e0;
  const double lo = std::max(e0, static_cast<double>(b));
  const double hi = std::min(e1, static_cast<double>(e));
  const double covered = std::max(0.0, hi - lo);
  if (width > 0.0 && covered / width >= 0.5) return true;
  // Some centre j + 0.5 in [e0, e1) with b <= j < e.
  const double first = std::max(std::ceil(e0 - 0.5), static_cast<double>(b));
  const double last = std::min(std::ceil(e1 - 0.5) - 1.0, static_cast<double>(e) - 1.0);
  return first <= last;
}

double cell_mean(const LabeledSeries& s, std::size_t c, double e0, double e1) {
  const auto n = static_cast<double>(s.length);
  const double width = e1 - e0;
  if (width < 1.0) {
    double pos = 0.5 * (e0 + e1) - 0.5;
    pos = std::clamp(pos, 0.0, n - 1.0);
    const auto j = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(j);
    if (j + 1 >= s.length) return s.value(s.length - 1, c);
    return s.value(j, c) + frac * (s.value(j + 1, c) - s.value(j, c));
  }
  const auto j0 = static_cast<std::size_t>(std::floor(e0));
  const auto j1 = std::min(s.length, static_cast<std::size_t>(std::ceil(e1)));
  // Offsets from a reference keep constant stretches exactly constant.
  const double ref = s.value(j0, c);
  double acc = 0.0;
  for (std::size_t j = j0; j < j1; ++j) {
    const double ov = std::min(e1, double(j + 1)) - std::max(e0, double(j));
    if (ov > 0.0) acc += ov * (s.value(j, c) - ref);
  }
  return ref + acc / width;
}

std::vector<double> uniform_edges(double start, double width, std::size_t out) {
  std::vector<double> edges(out + 1);
  for (std::size_t i = 0; i <= out; ++i) edges[i] = start + width * static_cast<double>(i) / static_cast<double>(out);
  edges[out] = start + width;
  return edges;
}

LabeledSeries reverse_series(const LabeledSeries& s) {
  LabeledSeries out = s;
  const std::size_t n = s.length;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < s.channels; ++c) out.value(t, c) = s.value(n - 1 - t, c);
    for (std::size_t m = 0; m < s.classes; ++m) out.label(t, m) = s.label(n - 1 - t, m);
  }
  for (auto& a : out.meta.anomalies) {
    const std::size_t b = a.begin;
    a.begin = n - a.end;
    a.end = n - b;
  }
  std::reverse(out.meta.anomalies.begin(), out.meta.anomalies.end());
  return out;
}

std::vector<double> channel_scales(const LabeledSeries& s) {
  std::vector<double> scales(s.channels);
  for (std::size_t c = 0; c < s.channels; ++c) scales[c] = std::max(stddev_of(s.channel(c)), 1e-3);
  return scales;
}

std::vector<double> warp_edges(std::size_t n, std::size_t out, std::size_t segments, double strength_lo,
                               double strength_hi, Rng& rng) {
  if (strength_lo < 0.0 || strength_hi > 0.5) {
    throw DataError("time_warp strength must lie in [0, 0.5] so slopes stay within [0.5, 2]");
  }
  if (segments < 2) segments = 2;
  if (segments % 2) ++segments;
  // Slopes come in pairs (1 + d, 1 - d), so the total source span is exact.
  std::vector<double> slopes;
  for (std::size_t k = 0; k < segments / 2; ++k) {
    const double d = rng.uniform(strength_lo, strength_hi);
    slopes.push_back(1.0 + d);
    slopes.push_back(1.0 - d);
  }
  rng.shuffle(slopes);
  const double seg_len = static_cast<double>(out) / static_cast<double>(segments);
  const double scale = static_cast<double>(n) / static_cast<double>(out);
  std::vector<double> knots(segments + 1, 0.0);
  for (std::size_t k = 0; k < segments; ++k) knots[k + 1] = knots[k] + slopes[k] * seg_len;
  std::vector<double> edges(out + 1);
  for (std::size_t i = 0; i <= out; ++i) {
    const double u = static_cast<double>(i);
    const auto k = std::min(segments - 1, static_cast<std::size_t>(std::floor(u / seg_len)));
    edges[i] = scale * (knots[k] + slopes[k] * (u - static_cast<double>(k) * seg_len));
  }
  edges[0] = 0.0;
  edges[out] = static_cast<double>(n);
  for (std::size_t i = 1; i <= out; ++i) edges[i] = std::clamp(edges[i], edges[i - 1], static_cast<double>(n));
  return edges;
}

}  // namespace

LabeledSeries remap(const LabeledSeries& s, std::span<const double> edges) {
  if (edges.size() < 2) throw DataError("remap needs at least one output cell");
  const std::size_t out_len = edges.size() - 1;
  const auto n = static_cast<double>(s.length);
  for (std::size_t i = 0; i < out_len; ++i) {
    if (!(edges[i] < edges[i + 1])) throw DataError("remap edges must be strictly increasing");
  }
  if (edges.front() < -1e-9 || edges.back() > n + 1e-9) throw DataError("remap window exceeds series bounds");

  LabeledSeries out = LabeledSeries::zeros(out_len, s.channels, s.classes);
  out.meta = s.meta;
  out.meta.anomalies.clear();
  for (std::size_t i = 0; i < out_len; ++i) {
    const double e0 = std::max(0.0, edges[i]);
    const double e1 = std::min(n, edges[i + 1]);
    for (std::size_t c = 0; c < s.channels; ++c) out.value(i, c) = cell_mean(s, c, e0, e1);
    // Mask: walk runs of labelled cells that touch [e0 - 1, e1 + 1).
    const auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor(e0) - 1.0));
    const auto j1 = std::min(s.length, static_cast<std::size_t>(std::ceil(e1)) + 1);
    for (std::size_t m = 0; m < s.classes; ++m) {
      double covered = 0.0;
      bool centre = false;
      for (std::size_t j = j0; j < j1; ++j) {
        if (!s.label(j, m)) continue;
        const double ov = std::min(e1, double(j + 1)) - std::max(e0, double(j));
        if (ov > 0.0) covered += ov;
        const double c = static_cast<double>(j) + 0.5;
        if (c >= e0 && c < e1) centre = true;
      }
      out.label(i, m) = (centre || covered / (e1 - e0) >= 0.5) ? 1 : 0;
    }
  }
  for (const auto& a : s.meta.anomalies) {
    std::size_t first = out_len, last = 0;
    for (std::size_t i = 0; i < out_len; ++i) {
      if (transported_label(std::max(0.0, edges[i]), std::min(n, edges[i + 1]), a.begin, a.end)) {
        first = std::min(first, i);
        last = i;
      }
    }
    if (first == out_len) continue;
    AnomalyDescriptor moved = a;
    moved.begin = first;
    moved.end = last + 1;
    out.meta.anomalies.push_back(moved);
  }
  return out;
}

LabeledSeries apply(const AugmentOp& op, const LabeledSeries& sample, std::uint64_t seed, const LabeledSeries* partner,
                    std::size_t target_length) {
  sample.check();
  if (sample.length < 2) throw DataError("augmentation needs a series of length >= 2");
  const std::size_t n = sample.length;
  const std::size_t out_len = target_length == 0 ? n : target_length;
  Rng rng(seed);
  auto draw = [&](const char* key) {
    const Range r = op.param(key);
    return rng.uniform(r.lo, r.hi);
  };

  LabeledSeries out;
  switch (op.kind) {
    case AugmentKind::crop_resample: {
      const double f = draw("fraction");
      if (!(f > 0.0 && f <= 1.0)) throw DataError("crop fraction must lie in (0, 1]");
      const double width = f * static_cast<double>(n);
      const double start = rng.uniform(0.0, static_cast<double>(n) - width);
      out = remap(sample, uniform_edges(start, width, out_len));
      break;
    }
    case AugmentKind::zoom: {
      const double z = draw("factor");
      if (z < 1.0) throw DataError("zoom factor must be >= 1");
      const double width = static_cast<double>(n) / z;
      double centre;
      if (op.has("center")) {
        centre = draw("center") * static_cast<double>(n);
      } else {
        centre = rng.uniform(0.5 * width, static_cast<double>(n) - 0.5 * width);
      }
      const double start = centre - 0.5 * width;
      if (start < -1e-9 || start + width > static_cast<double>(n) + 1e-9) {
        throw DataError("zoom window [" + std::to_string(start) + ", " + std::to_string(start + width) +
                        ") exceeds series bounds");
      }
      out = remap(sample, uniform_edges(std::max(0.0, start), width, out_len));
      break;
    }
    case AugmentKind::time_warp: {
      const Range seg = op.param("segments");
      const auto segments = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(seg.lo), static_cast<std::int64_t>(seg.hi)));
      const Range strength = op.param("strength");
      out = remap(sample, warp_edges(n, out_len, segments, strength.lo, strength.hi, rng));
      break;
    }
    case AugmentKind::reverse:
      out = reverse_series(sample);
      break;
    case AugmentKind::jitter: {
      out = sample;
      const double sigma = draw("sigma");
      const auto scales = channel_scales(sample);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < sample.channels; ++c) out.value(t, c) += rng.normal(0.0, sigma * scales[c]);
      break;
    }
    case AugmentKind::add_trend: {
      out = sample;
      const auto scales = channel_scales(sample);
      for (std::size_t c = 0; c < sample.channels; ++c) {
        const double a = draw("slope") * scales[c];
        const double b = draw("curvature") * scales[c];
        for (std::size_t t = 0; t < n; ++t) {
          const double u = static_cast<double>(t) / static_cast<double>(n - 1);
          out.value(t, c) += a * u + b * u * u;
        }
      }
      break;
    }
    case AugmentKind::linear_op: {
      out = sample;
      const auto scales = channel_scales(sample);
      for (std::size_t c = 0; c < sample.channels; ++c) {
        const double k = draw("scale");
        const double o = draw("offset") * scales[c];
        for (std::size_t t = 0; t < n; ++t) out.value(t, c) = k * sample.value(t, c) + o;
      }
      break;
    }
    case AugmentKind::mutate_pair: {
      if (!partner) throw DataError("mutate_pair needs a partner series");
      if (partner->length != n || partner->channels != sample.channels || partner->classes != sample.classes) {
        throw DataError("mutate_pair partner layout differs from the sample");
      }
      const double f = draw("fraction");
      const auto w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(f * static_cast<double>(n))), 1, n);
      const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - w)));
      const std::size_t stop = start + w;
      out = sample;
      for (std::size_t t = start; t < stop; ++t) {
        for (std::size_t c = 0; c < sample.channels; ++c) out.value(t, c) = partner->value(t, c);
        for (std::size_t m = 0; m < sample.classes; ++m) out.label(t, m) = partner->label(t, m);
      }
      std::vector<AnomalyDescriptor> kept;
      for (const auto& a : sample.meta.anomalies) {
        if (a.begin < start) {
          auto left = a;
          left.end = std::min(a.end, start);
          kept.push_back(left);
        }
        if (a.end > stop) {
          auto right = a;
          right.begin = std::max(a.begin, stop);
          kept.push_back(right);
        }
      }
      for (const auto& a : partner->meta.anomalies) {
        const std::size_t b = std::max(a.begin, start), e = std::min(a.end, stop);
        if (b < e) {
          auto inside = a;
          inside.begin = b;
          inside.end = e;
          kept.push_back(inside);
        }
      }
      std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) { return x.begin < y.begin; });
      out.meta.anomalies = std::move(kept);
      break;
    }
  }
  if (out.length != out_len) out = remap(out, uniform_edges(0.0, static_cast<double>(out.length), out_len));
  out.meta.augmentations.emplace_back(to_string(op.kind));
  return out;
}

// ---------------------------------------------------------------------------
// Invariance
// ---------------------------------------------------------------------------

InvarianceTable InvarianceTable::defaults() {
  InvarianceTable t;
  for (auto& row : t.table_) row.fill(true);
  // Splicing in a foreign segment breaks periodic patterns.
  t.set(AugmentKind::mutate_pair, AnomalyKind::cyclic_violation, false);
  // A foreign segment is itself an unusual shape.
  t.set(AugmentKind::mutate_pair, AnomalyKind::unusual_shape, false);
  // Non-uniform warping makes cycles irregular.
  t.set(AugmentKind::time_warp, AnomalyKind::cyclic_violation, false);
  return t;
}

bool InvarianceTable::allowed(AugmentKind op, AnomalyKind kind) const {
  return table_[static_cast<std::size_t>(op)][static_cast<std::size_t>(kind)];
}

void InvarianceTable::set(AugmentKind op, AnomalyKind kind, bool allowed) {
  table_[static_cast<std::size_t>(op)][static_cast<std::size_t>(kind)] = allowed;
}

bool check_invariance(const AugmentOp& op, AnomalyKind kind, const InvarianceTable& table,
                      double outlier_intensity_floor) {
  if (!table.allowed(op.kind, kind)) return false;
  if (op.kind == AugmentKind::jitter && kind == AnomalyKind::additive_outlier) {
    return op.param("sigma").hi <= jitter_sigma_cap(outlier_intensity_floor);
  }
  return true;
}

void validate_policy(const AugmentPolicy& policy, std::span<const AnomalyKind> kinds, bool force) {
  if (force) return;
  std::ostringstream bad;
  for (const auto& op : policy.ops) {
    for (auto k : kinds) {
      if (!check_invariance(op, k, policy.table)) bad << " (" << to_string(op.kind) << ", " << to_string(k) << ")";
    }
  }
  const std::string list = bad.str();
  if (!list.empty()) throw InvarianceError("augmentation policy is not label invariant for:" + list);
}

LabeledSeries augment_sample(const AugmentPolicy& policy, const LabeledSeries& sample,
                             std::span<const LabeledSeries> pool, std::span<const AnomalyKind> kinds,
                             std::uint64_t seed, bool force) {
  validate_policy(policy, kinds, force);
  if (policy.ops.empty()) return sample;
  double total = 0.0;
  for (const auto& op : policy.ops) total += op.weight;
  if (!(total > 0.0)) throw DataError("augmentation policy weights must sum to a positive value");
  Rng rng(seed);
  LabeledSeries current = sample;
  for (std::size_t pass = 0; pass < policy.passes; ++pass) {
    double r = rng.uniform(0.0, total);
    std::size_t pick = 0;
    while (pick + 1 < policy.ops.size() && r >= policy.ops[pick].weight) {
      r -= policy.ops[pick].weight;
      ++pick;
    }
    const auto& op = policy.ops[pick];
    const LabeledSeries* partner = nullptr;
    if (op.kind == AugmentKind::mutate_pair) {
      if (pool.empty()) throw DataError("mutate_pair needs a partner pool");
      partner = &pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    }
    current = apply(op, current, rng.next(), partner);
  }
  return current;
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

AugmentPolicy parse_policy(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("augmentation policy is not valid JSON: ") + e.what());
  }
  AugmentPolicy p;
  p.passes = j.value("passes", std::size_t{1});
  for (const auto& jo : j.at("ops")) {
    AugmentOp op = AugmentOp::make(parse_augment_kind(jo.at("kind").get<std::string>()));
    op.weight = jo.value("weight", 1.0);
    if (jo.contains("params")) {
      for (const auto& [key, val] : jo.at("params").items()) {
        if (!val.is_array() || val.size() != 2) throw DataError("parameter '" + key + "' must be [lo, hi]");
        op.set(key, Range{val[0].get<double>(), val[1].get<double>()});
      }
    }
    p.ops.push_back(std::move(op));
  }
  if (j.contains("invariance_overrides")) {
    for (const auto& o : j.at("invariance_overrides")) {
      p.table.set(parse_augment_kind(o.at("op").get<std::string>()),
                  parse_anomaly_kind(o.at("anomaly").get<std::string>()), o.at("allowed").get<bool>());
    }
  }
  return p;
}

AugmentPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read augmentation policy " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_policy(ss.str());
}

std::string policy_to_json(const AugmentPolicy& policy) {
  nlohmann::json j;
  j["passes"] = policy.passes;
  j["ops"] = nlohmann::json::array();
  for (const auto& op : policy.ops) {
    nlohmann::json jo;
    jo["kind"] = to_string(op.kind);
    jo["weight"] = op.weight;
    jo["params"] = nlohmann::json::object();
    for (const auto& [k, r] : op.params) jo["params"][k] = {r.lo, r.hi};
    j["ops"].push_back(jo);
  }
  j["invariance_overrides"] = nlohmann::json::array();
  const auto defaults = InvarianceTable::defaults();
  for (auto op : kAllAugmentKinds)
    for (auto k : kAllAnomalyKinds)
      if (policy.table.allowed(op, k) != defaults.allowed(op, k))
        j["invariance_overrides"].push_back(
            {{"op", to_string(op)}, {"anomaly", to_string(k)}, {"allowed", policy.table.allowed(op, k)}});
  return j.dump(2);
}

}  // namespace tsseg
