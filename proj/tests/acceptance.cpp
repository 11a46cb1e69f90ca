// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 5 7`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fd.hpp"
#include "tsseg/augment.hpp"
#include "tsseg/dataset_io.hpp"
#include "tsseg/loss.hpp"
#include "tsseg/model.hpp"
#include "tsseg/ops.hpp"
#include "tsseg/random.hpp"
#include "tsseg/stream.hpp"
#include "tsseg/synth.hpp"
#include "tsseg/train.hpp"

using namespace tsseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t hash_params(const Model<float>& m, const std::function<bool(const Section<float>&)>& which) {
  std::string bytes;
  for (const auto& sec : m.sections()) {
    if (!which(sec)) continue;
    for (const auto* p : sec.params())
      bytes.append(reinterpret_cast<const char*>(p->value.data()), p->size() * sizeof(float));
  }
  return std::hash<std::string_view>{}(bytes);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = Clock::now();
  double ops = 0.0;
  auto worst = [&](double e) { ops = std::max(ops, e); };
  {
    auto x = fd::random_tensor({2, 6, 3}, 5);
    auto k = fd::random_tensor({3, 3, 4}, 6);
    auto b = fd::random_tensor({4}, 7);
    const auto w = fd::random_tensor({2, 6, 4}, 8);
    auto loss = [&] { return fd::dot(conv1d(x, k, b), w); };
    Tensor<double> gk(k.shape()), gb(b.shape());
    const auto gx = conv1d_backward(x, k, w, gk, gb);
    worst(fd::check(x, gx, loss));
    worst(fd::check(k, gk, loss));
    worst(fd::check(b, gb, loss));
  }
  {
    auto x = fd::random_tensor({2, 5, 3}, 11);
    BatchNorm<double> bn(3);
    bn.gamma.value = fd::random_tensor({3}, 12, 0.5, 1.5);
    bn.beta.value = fd::random_tensor({3}, 13);
    const auto w = fd::random_tensor({2, 5, 3}, 14);
    auto loss = [&] {
      BatchNorm<double> copy = bn;
      return fd::dot(batch_norm<double>(x, copy, Mode::train, nullptr), w);
    };
    BatchNormCache<double> cache;
    BatchNorm<double> live = bn;
    live.gamma.grad = Tensor<double>({3});
    live.beta.grad = Tensor<double>({3});
    batch_norm(x, live, Mode::train, &cache);
    const auto gx = batch_norm_backward(w, live, cache);
    worst(fd::check(x, gx, loss));
    worst(fd::check(bn.gamma.value, live.gamma.grad, loss));
    worst(fd::check(bn.beta.value, live.beta.grad, loss));
  }
  {
    auto x = fd::random_tensor({2, 6, 4}, 15, -2.0, 2.0);
    const auto w = fd::random_tensor({2, 6, 4}, 16);
    worst(fd::check(x, relu_backward(x, w), [&] { return fd::dot(relu(x), w); }));
    worst(fd::check(x, sigmoid_backward(sigmoid(x), w), [&] { return fd::dot(sigmoid(x), w); }));
    worst(fd::check(x, softmax_channels_backward(softmax_channels(x), w),
                    [&] { return fd::dot(softmax_channels(x), w); }));
  }
  {
    auto x = fd::random_tensor({2, 12, 3}, 18);
    const auto w = fd::random_tensor({2, 3, 3}, 19);
    const auto r = max_pool1d(x, 4);
    worst(fd::check(x, max_pool1d_backward(w, r.argmax, 12), [&] { return fd::dot(max_pool1d(x, 4).output, w); }));
    auto u = fd::random_tensor({1, 3, 2}, 21);
    const auto wu = fd::random_tensor({1, 12, 2}, 22);
    worst(fd::check(u, upsample1d_backward(wu, 4), [&] { return fd::dot(upsample1d(u, 4), wu); }));
  }
  {
    auto a = fd::random_tensor({2, 4, 3}, 23);
    auto b = fd::random_tensor({2, 4, 2}, 24);
    const auto w = fd::random_tensor({2, 4, 5}, 25);
    const std::size_t widths[] = {3, 2};
    const auto g = split_channels(w, widths);
    auto loss = [&] { return fd::dot(concat_channels(a, b), w); };
    worst(fd::check(a, g[0], loss));
    worst(fd::check(b, g[1], loss));
  }
  {
    auto p = fd::random_tensor({2, 16, 3}, 2, 0.05, 0.95);
    Tensor<double> g({2, 16, 3});
    Rng rng(3);
    for (auto& v : g.values()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    for (double eps : {1.0, 16.0}) {
      Tensor<double> grad;
      soft_dice_loss(p, g, eps, &grad);
      worst(fd::check(p, grad, [&] { return soft_dice_loss(p, g, eps); }));
    }
  }

  // Composed desk model, every parameter, both heads.
  double composed = 0.0;
  std::size_t checked = 0;
  for (auto mode : {LabelMode::multi_label, LabelMode::single_label}) {
    ArchSpec s;
    s.input_length = 64;
    s.depth = 3;
    s.base_width = 4;
    s.classes = 2;
    s.label_mode = mode;
    auto m = Model<double>::build(s, 5);
    const auto x = fd::random_tensor({2, 64, 1}, 12);
    Tensor<double> target({2, 64, s.output_channels()});
    Rng rng(13);
    for (auto& v : target.values()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    auto loss = [&] {
      Model<double> copy = m;
      return soft_dice_loss(copy.forward(x, Mode::train), target);
    };
    Model<double> live = m;
    Tensor<double> g;
    soft_dice_loss(live.forward(x, Mode::train), target, 1.0, &g);
    live.zero_grad();
    live.backward(g);
    auto params = m.params();
    auto grads = live.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      // Pre-BN conv biases have an exact zero gradient; the 1e-5 floor
      // judges their round-off on absolute error.
      composed = std::max(composed, fd::check(params[i]->value, grads[i]->grad, loss, 1e-5, 1e-5));
      checked += params[i]->size();
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ops < 1e-6 && composed < 1e-5 && secs < 300.0;
  o.detail = "ops worst " + fmt("%.2e", ops) + " (< 1e-6), model worst " + fmt("%.2e", composed) + " over " +
             std::to_string(checked) + " params (< 1e-5), " + fmt("%.1fs", secs);
  return o;
}

// ---------------------------------------------------------------- 2

Outcome trace() {
  ArchSpec s;
  const auto m = Model<float>::build(s, 1);
  SectionTrace<float> tr;
  const auto y = m.infer(Tensor<float>({1, 1024, 1}, 0.25f), &tr);
  const std::size_t widths[] = {16, 32, 64, 128, 256};
  const std::size_t lengths[] = {1024, 256, 64, 16, 4};
  bool ok = y.shape() == Shape{1, 1024, 1};
  for (std::size_t l = 1; l <= 5; ++l) {
    const auto* t = tr.find(Model<float>::encoder_name(l));
    ok = ok && t && t->dim(1) == lengths[l - 1] && t->dim(2) == widths[l - 1];
  }
  for (std::size_t l = 1; l <= 4; ++l) {
    const auto* t = tr.find(Model<float>::decoder_name(l));
    ok = ok && t && t->dim(1) == lengths[l - 1] && t->dim(2) == widths[l - 1];
  }
  std::string depths;
  for (std::size_t M : {1u, 3u}) {
    for (auto mode : {LabelMode::multi_label, LabelMode::single_label}) {
      ArchSpec v = s;
      v.classes = M;
      v.label_mode = mode;
      const auto d = Model<float>::build(v, 1).infer(Tensor<float>({1, 1024, 1}, 0.25f)).dim(2);
      ok = ok && d == (mode == LabelMode::multi_label ? M : M + 1);
      depths += " " + std::to_string(d);
    }
  }
  return {ok, "widths 16/32/64/128/256, lengths 1024/256/64/16/4, head depths (M=1,3; sigmoid,softmax):" + depths};
}

// ---------------------------------------------------------------- 3

Outcome overfit() {
  const auto t0 = Clock::now();
  const auto data = make_pretraining_set(16, 256, 1);
  ArchSpec s;
  s.input_length = 256;
  s.depth = 4;
  s.base_width = 8;
  s.classes = 3;
  auto m = Model<float>::build(s, 1);
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 8;
  c.base_lr = 5e-3;
  c.dice_epsilon = 16.0;
  c.val_fraction = 0.0;  // evaluates on the training samples
  c.seed = 1;
  double best = 0.0;
  std::size_t at = 0;
  TrainHooks<float> hooks;
  hooks.on_epoch_end = [&](const EpochRecord& r) {
    if (r.val_iou > best) {
      best = r.val_iou;
      at = r.epoch;
    }
  };
  train(m, data, c, &hooks);
  const double secs = seconds_since(t0);
  return {best >= 0.95 && secs < 900.0,
          "max train IoU " + fmt("%.4f", best) + " at epoch " + std::to_string(at) + " (>= 0.95), " + fmt("%.0fs", secs)};
}

// ---------------------------------------------------------------- 4

Outcome transfer() {
  const auto t0 = Clock::now();
  std::vector<double> gains;
  std::string per_seed;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pre = make_pretraining_set(512, 256, Rng::mix(seed, 1));
    ArchSpec s;
    s.input_length = 256;
    s.depth = 4;
    s.base_width = 8;
    s.classes = 3;
    auto base = Model<float>::build(s, Rng::mix(seed, 2));
    TrainConfig pc;
    pc.base_lr = 3e-3;
    pc.epochs = 150;
    pc.dice_epsilon = 16.0;
    pc.seed = seed;
    pc.val_fraction = 0.1;
    train(base, pre, pc);

    const auto shapes = make_shape_task_set(128, 256, Rng::mix(seed, 3));
    std::vector<std::size_t> fit, held;
    for (std::size_t i = 0; i < 64; ++i) {
      fit.push_back(i);
      held.push_back(64 + i);
    }
    const auto tune = shapes.subset(fit), test = shapes.subset(held);
    ArchSpec t = s;
    t.classes = 1;
    TrainConfig fc = pc;
    fc.epochs = 100;
    const auto tuned = finetune_multipliers(base, t, tune, fc);
    auto scratch = Model<float>::build(t, Rng::mix(seed, 4));
    train(scratch, tune, fc);
    const double a = evaluate(tuned, test, fc.dice_epsilon).mean_iou;
    const double b = evaluate(scratch, test, fc.dice_epsilon).mean_iou;
    gains.push_back(100.0 * (a - b));
    per_seed += " " + fmt("%.3f", a) + "/" + fmt("%.3f", b);
  }
  std::vector<double> sorted = gains;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];
  const double secs = seconds_since(t0);
  return {median >= 5.0 && secs < 7200.0, "median gain " + fmt("%+.2f", median) + " points (>= +5); transfer/scratch IoU" +
                                               per_seed + ", " + fmt("%.0fs", secs)};
}

// ---------------------------------------------------------------- 5

Outcome munet_equality() {
  ArchSpec s;  // default univariate spec
  s.classes = 3;
  const auto src = Model<float>::build(s, 3);
  bool ok = true;
  std::size_t compared = 0;
  for (std::size_t C : {2u, 3u}) {
    ArchSpec t = s;
    t.kind = ArchKind::munet;
    t.channels = C;
    t.classes = 1;
    const auto dst = transplant_unet_to_munet(src, t, 7);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto x = tensor_cast<float>(fd::random_tensor({2, 1024, C}, seed * 10 + C, -3.0, 3.0));
      SectionTrace<float> tt;
      dst.infer(x, &tt);
      for (std::size_t c = 0; c < C; ++c) {
        SectionTrace<float> ts;
        src.infer(slice_channel(x, c), &ts);
        for (std::size_t l = 1; l < s.depth; ++l) {
          const auto* a = tt.find(Model<float>::encoder_name(l, c));
          const auto* b = ts.find(Model<float>::encoder_name(l));
          ok = ok && a && b && a->size() == b->size() &&
               std::memcmp(a->data(), b->data(), a->size() * sizeof(float)) == 0;
          ++compared;
        }
      }
    }
  }
  return {ok, std::to_string(compared) + " per-channel encoder activations compared bytewise"};
}

// ---------------------------------------------------------------- 6

// Stacks C univariate samples into one C-channel sample labelled with the
// union of their masks.
Dataset multichannel(std::size_t n, std::size_t C, std::size_t length, std::uint64_t seed) {
  const auto uni = make_pretraining_set(n * C, length, seed);
  Dataset out;
  out.task = "stacked";
  out.seed = seed;
  out.length = length;
  out.channels = C;
  out.classes = 1;
  out.class_kinds = {AnomalyKind::additive_outlier};
  for (std::size_t i = 0; i < n; ++i) {
    auto s = LabeledSeries::zeros(length, C, 1);
    for (std::size_t c = 0; c < C; ++c) {
      const auto& u = uni.samples[i * C + c];
      for (std::size_t t = 0; t < length; ++t) {
        s.value(t, c) = u.value(t);
        for (std::size_t m = 0; m < u.classes; ++m) s.label(t) |= u.label(t, m);
      }
    }
    s.meta.anomalies.clear();
    out.samples.push_back(std::move(s));
  }
  return out;
}

Outcome freeze_contract() {
  ArchSpec s;
  s.input_length = 256;
  s.depth = 5;
  s.base_width = 8;
  s.classes = 3;
  const auto base = Model<float>::build(s, 2);
  ArchSpec t = s;
  t.kind = ArchKind::munet;
  t.channels = 3;
  t.classes = 1;
  const auto data = multichannel(12, 3, 256, 4);
  TrainConfig c;
  c.batch_size = 4;
  c.seed = 5;
  c.val_fraction = 0.0;
  c.freeze_schedule = default_freeze_schedule(t, 3, 2, 2);

  const auto start = transplant(base, t, c.seed);
  const auto per_channel = [](const Section<float>& sec) { return sec.channel.has_value(); };
  const auto shared = [](const Section<float>& sec) { return !sec.channel.has_value(); };
  const std::size_t enc_before = hash_params(start, per_channel);
  const std::size_t shared_before = hash_params(start, shared);
  std::size_t enc_after = 0, shared_after = 0, enc_phase2 = 0;
  TrainHooks<float> hooks;
  hooks.on_phase_end = [&](std::size_t phase, const Model<float>& m) {
    if (phase == 0) {
      enc_after = hash_params(m, per_channel);
      shared_after = hash_params(m, shared);
    } else if (phase == 1) {
      enc_phase2 = hash_params(m, per_channel);
    }
  };
  finetune_freeze(base, t, data, c, nullptr, &hooks);
  const bool ok = enc_before == enc_after && shared_before != shared_after && enc_phase2 != enc_after;
  std::string frozen;
  for (const auto& n : c.freeze_schedule[0].frozen) frozen += " " + n;
  return {ok, std::string("phase 1 froze") + frozen + " on 3 channels; encoder hash " +
                  (enc_before == enc_after ? "unchanged" : "CHANGED") + ", shared layers " +
                  (shared_before != shared_after ? "trained" : "UNCHANGED") + ", encoders move in phase 2: " +
                  (enc_phase2 != enc_after ? "yes" : "NO")};
}

// ---------------------------------------------------------------- 7

Outcome streaming() {
  const std::size_t N = 100000, S = 3072;
  const auto plan = SnapshotPlan::with_coverage(S, 3, 256);
  const auto windows = plan_snapshots(N, plan);
  const auto cov = coverage_counts(windows, N);
  bool exact = plan.stride == 1024;
  for (std::size_t t = S; t < N - S; ++t) exact = exact && cov[t] == 3;

  ArchSpec s;
  s.input_length = 256;
  s.depth = 4;
  s.base_width = 8;
  s.classes = 2;
  const auto m = Model<float>::build(s, 1);
  Rng rng(9);
  std::vector<double> x(N);
  for (std::size_t t = 0; t < N; ++t) x[t] = std::sin(0.01 * double(t)) + 0.1 * rng.normal();
  DetectConfig dc;
  dc.plan = plan;
  dc.threads = 4;
  const auto r = detect(m, x, N, 1, dc);
  bool finite = true;
  for (double p : r.probs) finite = finite && std::isfinite(p);
  bool same_cov = r.coverage == cov;
  return {exact && r.uncovered == 0 && finite && same_cov,
          std::to_string(windows.size()) + " windows, stride " + std::to_string(plan.stride) +
              ", interior coverage exactly 3: " + (exact ? "yes" : "NO") + ", uncovered after ensembling " +
              std::to_string(r.uncovered)};
}

// ---------------------------------------------------------------- 8

Outcome dice_iou() {
  Rng rng(2024);
  double dice_err = 0.0, iou_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto B = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto L = static_cast<std::size_t>(rng.uniform_int(1, 12));
    const auto K = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const double eps = std::vector<double>{1.0, 16.0, 1e-3}[trial % 3];
    Tensor<double> p({B, L, K}), g({B, L, K});
    const bool binary = trial % 2 == 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
      p[i] = binary ? (rng.bernoulli(0.4) ? 1.0 : 0.0) : rng.uniform(0.0, 1.0);
    }
    double expect = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < K; ++k) {
        double inter = 0, sp = 0, sg = 0;
        for (std::size_t t = 0; t < L; ++t) {
          inter += p.at(b, t, k) * g.at(b, t, k);
          sp += p.at(b, t, k);
          sg += g.at(b, t, k);
        }
        expect += 1.0 - (2.0 * inter + eps) / (sp + sg + eps);
      }
    }
    expect /= double(B * K);
    dice_err = std::max(dice_err, std::abs(soft_dice_loss(p, g, eps) - expect));

    std::vector<std::uint8_t> pm(B * L * K), gm(B * L * K);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      pm[i] = rng.bernoulli(0.3);
      gm[i] = rng.bernoulli(0.3);
    }
    IouAccumulator acc(K);
    acc.add(pm, gm);
    double sum = 0.0;
    std::size_t present = 0;
    const auto per = acc.per_class();
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t r = 0; r < B * L; ++r) {
        inter += pm[r * K + k] && gm[r * K + k];
        uni += pm[r * K + k] || gm[r * K + k];
      }
      const double v = uni == 0 ? 1.0 : double(inter) / double(uni);
      iou_err = std::max(iou_err, std::abs(per[k] - v));
      if (uni) {
        sum += v;
        ++present;
      }
    }
    iou_err = std::max(iou_err, std::abs(acc.mean() - (present ? sum / double(present) : 1.0)));
  }
  return {dice_err <= 1e-10 && iou_err <= 1e-10,
          "1000 masks: dice max abs err " + fmt("%.1e", dice_err) + ", IoU max abs err " + fmt("%.1e", iou_err) +
              " (<= 1e-10)"};
}

// ---------------------------------------------------------------- 9

// Appends a channel holding each cell's centre coordinate so index-mapping
// ops reveal where every output cell came from.
LabeledSeries with_position(const LabeledSeries& s) {
  auto out = LabeledSeries::zeros(s.length, 2, s.classes);
  for (std::size_t t = 0; t < s.length; ++t) {
    out.value(t, 0) = s.value(t);
    out.value(t, 1) = double(t) + 0.5;
  }
  out.mask = s.mask;
  out.meta = s.meta;
  return out;
}

// Labels in `out` must sit over labelled source cells and labelled source
// cells inside the covered range must reach a labelled output cell.
bool transported(const LabeledSeries& src, const LabeledSeries& out) {
  const std::size_t n = src.length, L = out.length;
  std::vector<double> pos(L);
  for (std::size_t i = 0; i < L; ++i) pos[i] = out.value(i, 1);
  auto half = [&](std::size_t i) {
    const double a = i > 0 ? std::abs(pos[i] - pos[i - 1]) : 0.0;
    const double b = i + 1 < L ? std::abs(pos[i + 1] - pos[i]) : 0.0;
    return std::max(a, b);
  };
  for (std::size_t m = 0; m < src.classes; ++m) {
    for (std::size_t i = 0; i < L; ++i) {
      if (!out.label(i, m)) continue;
      bool near = false;
      const double reach = half(i) + 1.0;
      const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(pos[i] - reach)));
      const auto hi = std::min(n, static_cast<std::size_t>(std::ceil(pos[i] + reach)) + 1);
      for (std::size_t j = lo; j < hi && !near; ++j) near = src.label(j, m);
      if (!near) return false;
    }
    const auto [mn, mx] = std::minmax_element(pos.begin(), pos.end());
    for (std::size_t j = 0; j < n; ++j) {
      const double c = double(j) + 0.5;
      if (!src.label(j, m) || c < *mn || c > *mx) continue;
      std::size_t best = 0;
      for (std::size_t i = 1; i < L; ++i)
        if (std::abs(pos[i] - c) < std::abs(pos[best] - c)) best = i;
      bool hit = false;
      for (std::size_t i = best > 0 ? best - 1 : 0; i <= std::min(L - 1, best + 1); ++i) hit = hit || out.label(i, m);
      if (!hit) return false;
    }
  }
  return true;
}

Outcome augmentation() {
  Rng rng(99);
  const auto pool = make_pretraining_set(200, 256, 17);
  std::vector<const LabeledSeries*> anomalous;
  for (const auto& s : pool.samples)
    if (!s.meta.anomalies.empty()) anomalous.push_back(&s);
  const auto table = InvarianceTable::defaults();
  std::size_t nominal = 0, mapped = 0, value_only = 0, refused = 0, failures = 0;
  std::string first_failure;
  auto fail = [&](const std::string& why) {
    if (failures++ == 0) first_failure = why;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const AugmentKind op = kAllAugmentKinds[rng.uniform_int(0, 7)];
    const std::string name(to_string(op));
    const auto seed = static_cast<std::uint64_t>(trial) + 1;
    if (trial % 2 == 0) {
      const auto fam = kAllFamilies[rng.uniform_int(0, 3)];
      const bool cyc = rng.bernoulli(0.5);
      const auto s = gen_nominal(fam, 256, seed, cyc, 3);
      const auto partner = gen_nominal(kAllFamilies[rng.uniform_int(0, 3)], 256, seed + 5000, false, 3);
      const auto out = apply(AugmentOp::make(op), s, seed, &partner);
      ++nominal;
      if (!out.mask_empty() || !out.meta.anomalies.empty()) fail(name + " labelled a nominal sample");
      continue;
    }
    const auto& s = *anomalous[static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(anomalous.size()) - 1))];
    std::vector<AnomalyKind> kinds;
    for (const auto& a : s.meta.anomalies) kinds.push_back(a.kind);
    bool allowed = true;
    for (auto k : kinds) allowed = allowed && table.allowed(op, k);
    AugmentPolicy policy;
    policy.ops = {AugmentOp::make(op)};
    if (!allowed) {
      ++refused;
      bool threw_validate = false, threw_apply = false;
      try {
        validate_policy(policy, kinds);
      } catch (const InvarianceError&) {
        threw_validate = true;
      }
      try {
        augment_sample(policy, s, pool.samples, kinds, seed);
      } catch (const InvarianceError&) {
        threw_apply = true;
      }
      if (!threw_validate || !threw_apply) fail(name + " was not refused");
      continue;
    }
    if (is_index_mapping(op)) {
      ++mapped;
      const auto out = apply(AugmentOp::make(op), with_position(s), seed);
      const auto plain = apply(AugmentOp::make(op), s, seed);
      bool ok = out.mask == plain.mask && out.mask == out.mask_from_meta() && transported(s, out);
      if (op == AugmentKind::reverse)
        for (std::size_t t = 0; t < s.length; ++t)
          for (std::size_t m = 0; m < s.classes; ++m) ok = ok && out.label(t, m) == s.label(s.length - 1 - t, m);
      if (!ok) fail(name + " moved labels incorrectly on trial " + std::to_string(trial));
    } else {
      ++value_only;
      const auto out = augment_sample(policy, s, pool.samples, kinds, seed);
      if (is_value_only(op) && out.mask != s.mask) fail(name + " changed the mask");
      if (out.mask != out.mask_from_meta()) fail(name + " broke mask/meta agreement");
    }
  }
  std::string detail = std::to_string(nominal) + " nominal, " + std::to_string(mapped) + " index-mapping, " +
                       std::to_string(value_only) + " value/mixing, " + std::to_string(refused) + " refused";
  if (failures) detail += "; " + std::to_string(failures) + " failures, first: " + first_failure;
  return {failures == 0 && refused > 0 && mapped > 0, detail};
}

// ---------------------------------------------------------------- 10

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "tsseg_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  std::string notes;

  const auto a = make_pretraining_set(64, 256, 31), b = make_pretraining_set(64, 256, 31);
  const auto sa = make_shape_task_set(32, 256, 32), sb = make_shape_task_set(32, 256, 32);
  const bool data_same = dataset_hash(a) == dataset_hash(b) && dataset_hash(sa) == dataset_hash(sb);
  save_dataset(a, dir / "d1", SampleFormat::binary);
  save_dataset(b, dir / "d2", SampleFormat::binary);
  bool files_same = true;
  for (const auto& e : fs::directory_iterator(dir / "d1"))
    files_same = files_same && file_bytes(e.path()) == file_bytes(dir / "d2" / e.path().filename());
  ok = ok && data_same && files_same;
  notes += std::string("datasets ") + (data_same && files_same ? "identical" : "DIFFER");

  ArchSpec s;
  s.input_length = 256;
  s.depth = 4;
  s.base_width = 8;
  s.classes = 3;
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 8;
  c.seed = 7;
  auto run = [&](const fs::path& file, std::vector<EpochRecord>& hist) {
    auto m = Model<float>::build(s, 3);
    hist = train(m, a, c).history;
    save_model(m, file);
    return m;
  };
  std::vector<EpochRecord> h1, h2;
  const auto m1 = run(dir / "m1.tsu", h1);
  run(dir / "m2.tsu", h2);
  bool traj = h1.size() == h2.size();
  for (std::size_t i = 0; traj && i < h1.size(); ++i)
    traj = h1[i].train_loss == h2[i].train_loss && h1[i].val_loss == h2[i].val_loss && h1[i].val_iou == h2[i].val_iou;
  const bool model_same = file_bytes(dir / "m1.tsu") == file_bytes(dir / "m2.tsu");
  ok = ok && traj && model_same;
  notes += std::string(", trajectories ") + (traj ? "identical" : "DIFFER") + ", model files " +
           (model_same ? "identical" : "DIFFER");

  const auto back = load_model<float>(dir / "m1.tsu");
  const auto x = tensor_cast<float>(fd::random_tensor({4, 256, 1}, 8, -2.0, 2.0));
  const auto y1 = m1.infer(x), y2 = back.infer(x);
  const bool infer_same = std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0;
  ok = ok && infer_same;
  notes += std::string(", reloaded inference ") + (infer_same ? "bit-identical" : "DIFFERS");
  fs::remove_all(dir);
  return {ok, notes};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"shape and width trace", trace},
      {"overfit", overfit},
      {"transfer benefit", transfer},
      {"MU-Net transplant equality", munet_equality},
      {"freeze contract", freeze_contract},
      {"streaming coverage", streaming},
      {"dice and IoU oracles", dice_iou},
      {"augmentation invariance", augmentation},
      {"determinism and persistence", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
