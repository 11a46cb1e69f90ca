#include "tsseg/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "tsseg/loss.hpp"
#include "tsseg/random.hpp"

namespace tsseg {

using nlohmann::json;

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32" || s == "float" || s == "32") return Precision::f32;
  if (s == "f64" || s == "double" || s == "64") return Precision::f64;
  throw SpecError("unknown precision '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw SpecError("base_lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw SpecError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw SpecError("eps must be positive");
  if (batch_size == 0) throw SpecError("batch_size must be >= 1");
  if (!(dice_epsilon >= 0.0)) throw SpecError("dice_epsilon must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw SpecError("val_fraction must lie in [0, 1)");
  for (double m : section_lr_multipliers)
    if (!(m >= 0.0)) throw SpecError("learning rate multipliers must be nonnegative");
  for (const auto& p : freeze_schedule)
    if (p.epochs == 0) throw SpecError("every freeze phase needs at least one epoch");
}

std::size_t TrainConfig::total_epochs() const {
  if (freeze_schedule.empty()) return epochs;
  std::size_t n = 0;
  for (const auto& p : freeze_schedule) n += p.epochs;
  return n;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["base_lr"] = c.base_lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  j["dice_epsilon"] = c.dice_epsilon;
  j["val_fraction"] = c.val_fraction;
  j["section_lr_multipliers"] = c.section_lr_multipliers;
  j["freeze_schedule"] = json::array();
  for (const auto& p : c.freeze_schedule) j["freeze_schedule"].push_back({{"frozen", p.frozen}, {"epochs", p.epochs}});
  return j.dump(2);
}

TrainConfig train_config_from_json(std::string_view text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.precision = parse_precision(j.value("precision", std::string("f32")));
    c.dice_epsilon = j.value("dice_epsilon", c.dice_epsilon);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.section_lr_multipliers = j.value("section_lr_multipliers", std::vector<double>{});
    if (j.contains("freeze_schedule")) {
      for (const auto& p : j.at("freeze_schedule")) {
        c.freeze_schedule.push_back({p.at("frozen").get<std::vector<std::string>>(), p.at("epochs").get<std::size_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

void check_dataset_matches(const Dataset& data, const ArchSpec& spec) {
  if (data.samples.empty()) throw DataError("dataset is empty");
  for (const auto& s : data.samples) {
    if (s.length != spec.input_length || s.channels != spec.channels || s.classes != spec.classes) {
      throw DataError("dataset samples are " + std::to_string(s.length) + "x" + std::to_string(s.channels) + " with " +
                      std::to_string(s.classes) + " classes; model expects " + describe(spec));
    }
    for (double v : s.values)
      if (!std::isfinite(v)) throw DataError("dataset contains missing or non-finite values");
  }
}

namespace {

template <typename T>
std::vector<const LabeledSeries*> gather(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const LabeledSeries*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&data.samples[i]);
  return out;
}

struct Scores {
  double loss = 0.0;
  IouAccumulator iou;
};

template <typename T>
Scores score(const Model<T>& model, const Dataset& data, std::span<const std::size_t> idx, double dice_eps,
             std::size_t batch_size) {
  const ArchSpec& spec = model.spec();
  Scores s{0.0, IouAccumulator(spec.classes)};
  double weighted = 0.0;
  for (std::size_t at = 0; at < idx.size(); at += batch_size) {
    const auto part = idx.subspan(at, std::min(batch_size, idx.size() - at));
    const auto batch = gather<T>(data, part);
    const Tensor<T> probs = model.infer(make_input<T>(batch));
    weighted += soft_dice_loss(probs, make_target<T>(batch, spec.label_mode), dice_eps) * static_cast<double>(part.size());
    const auto pred = predict_mask(probs, spec.label_mode);
    const std::size_t stride = spec.input_length * spec.classes;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::vector<std::uint8_t> p(pred.begin() + static_cast<std::ptrdiff_t>(b * stride),
                                        pred.begin() + static_cast<std::ptrdiff_t>((b + 1) * stride));
      s.iou.add(p, truth_mask(*batch[b], spec.label_mode));
    }
  }
  s.loss = idx.empty() ? 0.0 : weighted / static_cast<double>(idx.size());
  return s;
}

EvalReport report_from(const Scores& s) {
  EvalReport r;
  r.class_iou = s.iou.per_class();
  r.class_present = s.iou.present();
  r.mean_iou = s.iou.mean();
  r.dice_loss = s.loss;
  return r;
}

template <typename T>
std::vector<Tensor<T>> snapshot(const Model<T>& m) {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : m.named_arrays()) out.push_back(*t);
  return out;
}

template <typename T>
void restore(Model<T>& m, const std::vector<Tensor<T>>& arrays) {
  auto named = m.named_arrays();
  for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = arrays[i];
}

}  // namespace

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, double dice_epsilon, std::size_t batch_size) {
  check_dataset_matches(data, model.spec());
  std::vector<std::size_t> idx(data.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return report_from(score(model, data, idx, dice_epsilon, std::max<std::size_t>(batch_size, 1)));
}

template <typename T>
EvalReport train(Model<T>& model, const Dataset& data, const TrainConfig& config, const TrainHooks<T>* hooks,
                 Model<T>* final_weights) {
  config.validate();
  const ArchSpec& spec = model.spec();
  check_dataset_matches(data, spec);

  std::vector<std::size_t> train_idx, val_idx;
  if (config.val_fraction > 0.0 && data.samples.size() >= 2) {
    std::tie(train_idx, val_idx) = data.split(config.val_fraction, Rng::mix(config.seed, 0x5a11));
  }
  if (val_idx.empty()) {
    train_idx.resize(data.samples.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;
    val_idx = train_idx;
  }

  if (!config.section_lr_multipliers.empty() && config.section_lr_multipliers.size() != spec.section_ordinals()) {
    throw SpecError("expected " + std::to_string(spec.section_ordinals()) + " learning rate multipliers, got " +
                    std::to_string(config.section_lr_multipliers.size()));
  }
  for (auto& sec : model.sections()) {
    const double m = config.section_lr_multipliers.empty() ? 1.0 : config.section_lr_multipliers[sec.ordinal - 1];
    for (auto* p : sec.params()) p->lr_multiplier = m;
  }

  std::vector<FreezePhase> phases = config.freeze_schedule;
  if (phases.empty()) phases.push_back({{}, config.epochs});
  // Resolve selectors before touching anything so a typo fails fast.
  for (const auto& ph : phases)
    for (const auto& sel : ph.frozen) model.select(sel);

  const AdamConfig adam{config.base_lr, config.beta1, config.beta2, config.eps};
  auto params = model.params();

  EvalReport report;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best;
  std::size_t epoch = 0;

  for (std::size_t phase = 0; phase < phases.size(); ++phase) {
    if (phases[phase].epochs == 0) continue;
    for (auto* p : params) p->frozen = false;
    for (const auto& sel : phases[phase].frozen)
      for (auto* sec : model.select(sel))
        for (auto* p : sec->params()) p->frozen = true;
    if (hooks && hooks->on_phase_begin) hooks->on_phase_begin(phase, model);

    for (std::size_t e = 0; e < phases[phase].epochs; ++e) {
      ++epoch;
      std::vector<std::size_t> order = train_idx;
      Rng rng = Rng::derive(config.seed, epoch);
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
        const auto part = std::span<const std::size_t>(order).subspan(at, std::min(config.batch_size, order.size() - at));
        const auto batch = gather<T>(data, part);
        const Tensor<T> probs = model.forward(make_input<T>(batch), Mode::train);
        Tensor<T> grad;
        const double loss = soft_dice_loss(probs, make_target<T>(batch, spec.label_mode), config.dice_epsilon, &grad);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        total += loss * static_cast<double>(part.size());
        model.zero_grad();
        model.backward(grad);
        adam_step<T>(params, adam);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.phase = phase;
      rec.train_loss = total / static_cast<double>(order.size());
      const Scores v = score(static_cast<const Model<T>&>(model), data, val_idx, config.dice_epsilon, config.batch_size);
      if (!std::isfinite(v.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      rec.val_loss = v.loss;
      rec.val_iou = v.iou.mean();
      report.history.push_back(rec);
      if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(rec);
      if (rec.val_loss < best_loss) {
        best_loss = rec.val_loss;
        best = snapshot(model);
        report.best_epoch = epoch;
      }
    }
    if (hooks && hooks->on_phase_end) hooks->on_phase_end(phase, model);
  }
  for (auto* p : params) p->frozen = false;

  if (final_weights) *final_weights = model;
  if (!best.empty()) restore(model, best);
  auto history = std::move(report.history);
  const std::size_t best_epoch = report.best_epoch;
  report = report_from(score(static_cast<const Model<T>&>(model), data, val_idx, config.dice_epsilon, config.batch_size));
  report.history = std::move(history);
  report.best_epoch = best_epoch;
  return report;
}

std::vector<double> default_multipliers(const ArchSpec& spec) {
  const std::size_t n = spec.section_ordinals();
  std::vector<double> out(n);
  for (std::size_t k = 1; k <= n; ++k) {
    const double r = static_cast<double>(k) / static_cast<double>(n);
    out[k - 1] = r * r;
  }
  return out;
}

std::vector<FreezePhase> default_freeze_schedule(const ArchSpec& spec, std::size_t e1, std::size_t e2,
                                                 std::size_t e3) {
  std::vector<FreezePhase> out;
  if (spec.kind == ArchKind::unet) {
    FreezePhase first{{}, e1};
    for (std::size_t l = 1; l <= std::min<std::size_t>(2, spec.depth - 1); ++l) first.frozen.push_back(Model<float>::encoder_name(l));
    out.push_back(first);
    out.push_back({{}, e2});
    return out;
  }
  FreezePhase first{{}, e1}, second{{}, e2};
  for (std::size_t l = 1; l + 1 <= spec.depth; ++l) first.frozen.push_back(Model<float>::encoder_name(l));
  for (std::size_t l = 1; l + 3 <= spec.depth; ++l) second.frozen.push_back(Model<float>::encoder_name(l));
  out.push_back(first);
  out.push_back(second);
  out.push_back({{}, e3});
  return out;
}

template <typename T>
Model<T> transplant(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed) {
  if (target.kind == ArchKind::munet) return transplant_unet_to_munet(pretrained, target, seed);
  return transplant_unet_to_unet(pretrained, target, seed);
}

template <typename T>
Model<T> finetune_multipliers(const Model<T>& pretrained, const ArchSpec& target, const Dataset& data,
                              TrainConfig config, EvalReport* report, const TrainHooks<T>* hooks,
                              Model<T>* final_weights) {
  Model<T> model = transplant(pretrained, target, config.seed);
  if (config.section_lr_multipliers.empty()) config.section_lr_multipliers = default_multipliers(target);
  EvalReport r = train(model, data, config, hooks, final_weights);
  if (report) *report = std::move(r);
  return model;
}

template <typename T>
Model<T> finetune_freeze(const Model<T>& pretrained, const ArchSpec& target, const Dataset& data, TrainConfig config,
                         EvalReport* report, const TrainHooks<T>* hooks, Model<T>* final_weights) {
  Model<T> model = transplant(pretrained, target, config.seed);
  if (config.freeze_schedule.empty()) {
    config.freeze_schedule = default_freeze_schedule(target, config.epochs, config.epochs, config.epochs);
  }
  EvalReport r = train(model, data, config, hooks, final_weights);
  if (report) *report = std::move(r);
  return model;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss,val_iou\n";
  os.precision(10);
  for (const auto& r : history) os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_iou << '\n';
}

#define TSSEG_INSTANTIATE_TRAIN(T)                                                                                  \
  template EvalReport evaluate<T>(const Model<T>&, const Dataset&, double, std::size_t);                            \
  template EvalReport train<T>(Model<T>&, const Dataset&, const TrainConfig&, const TrainHooks<T>*, Model<T>*);     \
  template Model<T> transplant<T>(const Model<T>&, const ArchSpec&, std::uint64_t);                                 \
  template Model<T> finetune_multipliers<T>(const Model<T>&, const ArchSpec&, const Dataset&, TrainConfig,          \
                                            EvalReport*, const TrainHooks<T>*, Model<T>*);                          \
  template Model<T> finetune_freeze<T>(const Model<T>&, const ArchSpec&, const Dataset&, TrainConfig, EvalReport*,  \
                                       const TrainHooks<T>*, Model<T>*);

TSSEG_INSTANTIATE_TRAIN(float)
TSSEG_INSTANTIATE_TRAIN(double)

}  // namespace tsseg
