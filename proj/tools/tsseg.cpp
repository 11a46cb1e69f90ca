// Command-line front end: synth, augment, pretrain, train, finetune, detect,
// eval, inspect and replay.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsseg/augment.hpp"
#include "tsseg/dataset_io.hpp"
#include "tsseg/loss.hpp"
#include "tsseg/model.hpp"
#include "tsseg/random.hpp"
#include "tsseg/stream.hpp"
#include "tsseg/synth.hpp"
#include "tsseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsseg;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

const std::set<std::string> kPathOptions = {"--data", "--out",   "--model", "--base-model", "--input",
                                            "--policy", "--pred", "--truth", "--config"};

std::string resolve(const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("TSSEG_DATA_ROOT"); root && *root) path = fs::path(root) / path;
  }
  return fs::absolute(path).lexically_normal().string();
}

/// The full command line with defaults filled in and paths made absolute.
std::vector<std::string> resolved_argv(const CLI::App* sub) {
  std::vector<std::string> argv{sub->get_name()};
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = "--" + opt->get_lnames()[0];
    if (name == "--help") continue;
    if (opt->get_type_size() == 0) {
      if (opt->count() > 0) argv.push_back(name);
      continue;
    }
    std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (vals.empty() && !opt->get_default_str().empty()) vals.push_back(opt->get_default_str());
    for (auto& v : vals) {
      argv.push_back(name);
      argv.push_back(kPathOptions.count(name) ? resolve(v) : v);
    }
  }
  return argv;
}

void write_snapshot(const fs::path& dir, const CLI::App* sub, const json& extra = json::object()) {
  fs::create_directories(dir);
  json j;
  j["command"] = sub->get_name();
  j["argv"] = resolved_argv(sub);
  json opts = json::object();
  for (std::size_t i = 1; i < j["argv"].size(); ++i) {
    const std::string k = j["argv"][i];
    if (i + 1 < j["argv"].size() && j["argv"][i + 1].get<std::string>().rfind("--", 0) != 0) {
      opts[k.substr(2)] = j["argv"][i + 1];
      ++i;
    } else {
      opts[k.substr(2)] = true;
    }
  }
  j["options"] = opts;
  j["resolved"] = extra;
  std::ofstream(dir / "config.json") << j.dump(2) << "\n";
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw SpecError("cannot parse number '" + item + "'");
    }
  }
  return out;
}

/// "enc1,enc2:5;:10" -> [(enc1 enc2, 5), (none, 10)].
std::vector<FreezePhase> parse_schedule(const std::string& s) {
  std::vector<FreezePhase> out;
  std::stringstream ss(s);
  std::string phase;
  while (std::getline(ss, phase, ';')) {
    if (phase.empty()) continue;
    const auto colon = phase.rfind(':');
    if (colon == std::string::npos) throw SpecError("freeze phase '" + phase + "' needs ':epochs'");
    FreezePhase p;
    try {
      p.epochs = std::stoul(phase.substr(colon + 1));
    } catch (const std::exception&) {
      throw SpecError("bad epoch count in freeze phase '" + phase + "'");
    }
    std::stringstream names(phase.substr(0, colon));
    std::string n;
    while (std::getline(names, n, ','))
      if (!n.empty()) p.frozen.push_back(n);
    out.push_back(p);
  }
  return out;
}

struct ArchFlags {
  std::string kind = "unet";
  std::size_t depth = 5;
  std::size_t base_width = 16;
  std::size_t pool = 4;
  std::size_t kernel = 3;
  std::string label_mode = "multi";

  void add(CLI::App* app, bool with_kind) {
    if (with_kind) app->add_option("--kind", kind, "unet or munet")->capture_default_str();
    app->add_option("--depth", depth, "Encoding sections")->capture_default_str();
    app->add_option("--base-width", base_width, "Filters in the first section")->capture_default_str();
    app->add_option("--pool", pool, "Pool size and upsampling rate")->capture_default_str();
    app->add_option("--kernel", kernel, "Convolution kernel size")->capture_default_str();
    app->add_option("--label-mode", label_mode, "multi (sigmoid) or single (softmax)")->capture_default_str();
  }

  ArchSpec spec(const Dataset& ds) const {
    ArchSpec s;
    s.kind = parse_arch_kind(kind);
    s.input_length = ds.length;
    s.channels = ds.channels;
    s.classes = ds.classes;
    s.label_mode = parse_label_mode(label_mode);
    s.depth = depth;
    s.base_width = base_width;
    s.pool = pool;
    s.kernel = kernel;
    s.validate();
    return s;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string precision = "f32";
  std::string multipliers;
  std::string schedule;

  void add(CLI::App* app, std::size_t default_epochs) {
    cfg.epochs = default_epochs;
    app->add_option("--epochs", cfg.epochs, "Epochs (per phase for freeze schedules)")->capture_default_str();
    app->add_option("--lr", cfg.base_lr, "Adam base learning rate")->capture_default_str();
    app->add_option("--beta1", cfg.beta1)->capture_default_str();
    app->add_option("--beta2", cfg.beta2)->capture_default_str();
    app->add_option("--adam-eps", cfg.eps)->capture_default_str();
    app->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Seed for init, split and shuffling")->capture_default_str();
    app->add_option("--precision", precision, "f32 or f64")->capture_default_str();
    app->add_option("--dice-eps", cfg.dice_epsilon, "Soft Dice smoothing")->capture_default_str();
    app->add_option("--val-fraction", cfg.val_fraction, "Held-out share for best-weight selection (0: train set)")
        ->capture_default_str();
    app->add_option("--multipliers", multipliers, "Comma list of per-section learning rate multipliers");
    app->add_option("--freeze", schedule, "Freeze schedule, e.g. 'enc1,enc2:5;:10'");
  }

  TrainConfig resolve() const {
    TrainConfig c = cfg;
    c.precision = parse_precision(precision);
    if (!multipliers.empty()) c.section_lr_multipliers = parse_list(multipliers);
    if (!schedule.empty()) c.freeze_schedule = parse_schedule(schedule);
    c.validate();
    return c;
  }
};

template <typename T>
TrainHooks<T> progress_hooks(std::size_t total) {
  TrainHooks<T> h;
  h.on_epoch_end = [total](const EpochRecord& r) {
    std::fprintf(stderr, "epoch %zu/%zu phase %zu  train %.5f  val %.5f  val_iou %.4f\n", r.epoch, total, r.phase + 1,
                 r.train_loss, r.val_loss, r.val_iou);
  };
  return h;
}

json report_json(const EvalReport& r) {
  json j;
  j["class_iou"] = r.class_iou;
  j["class_present"] = r.class_present;
  j["mean_iou"] = r.mean_iou;
  j["dice_loss"] = r.dice_loss;
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.history.size();
  return j;
}

template <typename T>
void write_run(const fs::path& out, const Model<T>& best, const Model<T>& final, const EvalReport& report) {
  fs::create_directories(out);
  save_model(final, out / "model_final.tsu");
  save_model(best, out / "model_best.tsu");
  write_history_csv(report.history, out / "history.csv");
  std::ofstream(out / "report.json") << report_json(report).dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string task = "pretrain";
  std::size_t n = 500;
  std::size_t length = 1024;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  std::string input;
};

int cmd_synth(const SynthArgs& a, const CLI::App* sub) {
  if (a.n == 0) throw SpecError("--n must be >= 1");
  Dataset ds;
  if (a.task == "pretrain") {
    ds = make_pretraining_set(a.n, a.length, a.seed);
  } else if (a.task == "shapes") {
    ds = make_shape_task_set(a.n, a.length, a.seed);
  } else if (a.task == "crops") {
    if (a.input.empty()) throw SpecError("--task crops needs --input");
    ds = make_crops(table_to_series(read_csv_table(resolve(a.input))), a.n, a.length, a.seed);
  } else {
    throw SpecError("unknown task '" + a.task + "' (pretrain, shapes, crops)");
  }
  const fs::path out = resolve(a.out);
  SampleFormat fmt;
  if (a.format == "csv") fmt = SampleFormat::csv;
  else if (a.format == "binary") fmt = SampleFormat::binary;
  else throw SpecError("unknown --format '" + a.format + "'");
  save_dataset(ds, out, fmt);
  const std::string hash = dataset_hash(ds);
  write_snapshot(out, sub, {{"hash", hash}});
  std::printf("%zu samples -> %s (hash %s)\n", ds.samples.size(), out.c_str(), hash.c_str());
  return kOk;
}

struct AugmentArgs {
  std::string data, policy, out;
  std::uint64_t seed = 0;
  std::size_t copies = 1;
  bool keep = false;
  bool force = false;
};

int cmd_augment(const AugmentArgs& a, const CLI::App* sub) {
  const Dataset in = load_dataset(resolve(a.data));
  const AugmentPolicy policy = load_policy(resolve(a.policy));
  validate_policy(policy, in.class_kinds, a.force);
  Dataset out = in;
  out.task = in.task + "+aug";
  out.samples.clear();
  if (a.keep) out.samples = in.samples;
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    for (std::size_t k = 0; k < a.copies; ++k) {
      const std::uint64_t s = Rng::mix(a.seed, i * a.copies + k);
      out.samples.push_back(augment_sample(policy, in.samples[i], in.samples, in.class_kinds, s, a.force));
    }
  }
  save_dataset(out, resolve(a.out));
  write_snapshot(resolve(a.out), sub, {{"hash", dataset_hash(out)}, {"policy", json::parse(policy_to_json(policy))}});
  std::printf("%zu samples -> %s\n", out.samples.size(), resolve(a.out).c_str());
  return kOk;
}

struct TrainArgs {
  std::string data, out;
  ArchFlags arch;
  TrainFlags train;
};

template <typename T>
int run_train(const TrainArgs& a, const Dataset& ds, const TrainConfig& cfg, const CLI::App* sub) {
  const ArchSpec spec = a.arch.spec(ds);
  Model<T> model = Model<T>::build(spec, cfg.seed);
  Model<T> final = model;
  const auto hooks = progress_hooks<T>(cfg.total_epochs());
  const EvalReport r = train(model, ds, cfg, &hooks, &final);
  write_snapshot(resolve(a.out), sub, {{"spec", describe(spec)}, {"train", json::parse(train_config_to_json(cfg))}});
  write_run(resolve(a.out), model, final, r);
  std::printf("best epoch %zu  val mean IoU %.4f  dice %.5f\n", r.best_epoch, r.mean_iou, r.dice_loss);
  return kOk;
}

int cmd_train(const TrainArgs& a, const CLI::App* sub) {
  const Dataset ds = load_dataset(resolve(a.data));
  const TrainConfig cfg = a.train.resolve();
  if (cfg.precision == Precision::f64) return run_train<double>(a, ds, cfg, sub);
  return run_train<float>(a, ds, cfg, sub);
}

struct FinetuneArgs {
  std::string base, data, out;
  std::string strategy;
  std::string target = "unet";
  std::size_t channels = 0;
  std::string label_mode = "multi";
  TrainFlags train;
};

template <typename T>
int run_finetune(const FinetuneArgs& a, const Dataset& ds, TrainConfig cfg, const CLI::App* sub) {
  const Model<T> base = load_model<T>(resolve(a.base));
  ArchSpec target = base.spec();
  target.kind = parse_arch_kind(a.target);
  target.channels = a.channels ? a.channels : ds.channels;
  target.classes = ds.classes;
  target.label_mode = parse_label_mode(a.label_mode);
  target.validate();
  if (target.channels != ds.channels) {
    throw DataError("--channels " + std::to_string(target.channels) + " but the dataset has " +
                    std::to_string(ds.channels));
  }
  std::string strategy = a.strategy;
  if (strategy.empty()) strategy = target.kind == ArchKind::munet ? "freeze" : "multipliers";
  Model<T> final = base;
  EvalReport r;
  Model<T> model = base;
  if (strategy == "multipliers") {
    if (cfg.section_lr_multipliers.empty()) cfg.section_lr_multipliers = default_multipliers(target);
    const auto hooks = progress_hooks<T>(cfg.total_epochs());
    model = finetune_multipliers(base, target, ds, cfg, &r, &hooks, &final);
  } else if (strategy == "freeze") {
    if (cfg.freeze_schedule.empty()) {
      cfg.freeze_schedule = default_freeze_schedule(target, cfg.epochs, cfg.epochs, cfg.epochs);
    }
    const auto hooks = progress_hooks<T>(cfg.total_epochs());
    model = finetune_freeze(base, target, ds, cfg, &r, &hooks, &final);
  } else {
    throw SpecError("unknown --strategy '" + strategy + "' (multipliers, freeze)");
  }
  write_snapshot(resolve(a.out), sub,
                 {{"spec", describe(target)}, {"strategy", strategy}, {"train", json::parse(train_config_to_json(cfg))}});
  write_run(resolve(a.out), model, final, r);
  std::printf("best epoch %zu  val mean IoU %.4f  dice %.5f\n", r.best_epoch, r.mean_iou, r.dice_loss);
  return kOk;
}

int cmd_finetune(const FinetuneArgs& a, const CLI::App* sub) {
  const Dataset ds = load_dataset(resolve(a.data));
  const TrainConfig cfg = a.train.resolve();
  if (cfg.precision == Precision::f64) return run_finetune<double>(a, ds, cfg, sub);
  return run_finetune<float>(a, ds, cfg, sub);
}

struct DetectArgs {
  std::string model, input, out;
  std::size_t snapshot = 0;
  std::size_t coverage = 3;
  std::size_t stride = 0;
  std::string norm = "fixed";
  std::string center = "0";
  std::string scale = "1";
  std::string ensemble = "mean";
  double threshold = 0.5;
  std::size_t min_len = 2;
  std::size_t merge_gap = 2;
  std::size_t threads = 1;
  std::size_t batch = 8;
  bool force = false;
  bool print = false;
};

template <typename T>
int run_detect(const DetectArgs& a, const CLI::App* sub) {
  const Model<T> model = load_model<T>(resolve(a.model));
  const CsvTable table = read_csv_table(resolve(a.input));
  DetectConfig cfg;
  const std::size_t snap = a.snapshot ? a.snapshot : model.spec().input_length;
  cfg.plan = SnapshotPlan::with_coverage(snap, a.coverage, model.spec().input_length);
  if (a.stride) cfg.plan.stride = a.stride;
  if (a.norm == "fixed") cfg.norm.mode = NormMode::fixed_scale;
  else if (a.norm == "per_snapshot") cfg.norm.mode = NormMode::per_snapshot;
  else throw SpecError("unknown --norm '" + a.norm + "' (fixed, per_snapshot)");
  cfg.norm.center = parse_list(a.center);
  cfg.norm.scale = parse_list(a.scale);
  if (a.ensemble == "mean") cfg.rule = EnsembleRule::mean;
  else if (a.ensemble == "max") cfg.rule = EnsembleRule::max;
  else throw SpecError("unknown --ensemble '" + a.ensemble + "' (mean, max)");
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw SpecError("--threshold must lie in (0, 1)");
  cfg.events = {a.threshold, a.min_len, a.merge_gap};
  cfg.threads = a.threads;
  cfg.batch_size = a.batch;
  cfg.force_gaps = a.force;
  const DetectResult r = detect(model, table.values, table.rows(), table.channels, cfg);

  const fs::path out = resolve(a.out);
  write_snapshot(out, sub, {{"stride", cfg.plan.stride}, {"windows", r.windows.size()}});
  std::ofstream ev(out / "events.jsonl");
  for (const auto& e : r.events) {
    const json line = {{"start", e.start}, {"end", e.end}, {"class", e.cls}, {"score", e.score}};
    ev << line.dump() << "\n";
    if (a.print) std::cout << line.dump() << "\n";
  }
  std::ofstream pr(out / "probs.csv");
  pr << "t";
  for (std::size_t m = 0; m < r.classes; ++m) pr << ",p" << m + 1;
  pr << ",coverage,imputed\n";
  pr.precision(9);
  for (std::size_t t = 0; t < r.length; ++t) {
    pr << table.time[t];
    for (std::size_t m = 0; m < r.classes; ++m) pr << ',' << r.probs[t * r.classes + m];
    pr << ',' << r.coverage[t] << ',' << int(r.imputed[t]) << '\n';
  }
  std::fprintf(stderr, "%zu windows, %zu events, %zu imputed points, %zu uncovered\n", r.windows.size(),
               r.events.size(), static_cast<std::size_t>(std::count(r.imputed.begin(), r.imputed.end(), 1)),
               r.uncovered);
  return kOk;
}

int cmd_detect(const DetectArgs& a, const CLI::App* sub) {
  if (peek_model(resolve(a.model)).scalar_bytes == 8) return run_detect<double>(a, sub);
  return run_detect<float>(a, sub);
}

struct EvalArgs {
  std::string model, data, pred, truth, out;
  std::size_t batch = 8;
};

json event_json(const EventScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"predicted", s.predicted}, {"truth", s.truth}};
}

template <typename T>
json eval_model(const EvalArgs& a) {
  const Model<T> model = load_model<T>(resolve(a.model));
  const Dataset ds = load_dataset(resolve(a.data));
  check_dataset_matches(ds, model.spec());
  const ArchSpec& spec = model.spec();
  IouAccumulator iou(spec.classes);
  std::vector<AnomalyEvent> pred_events, true_events;
  double dice = 0.0;
  std::size_t offset = 0;
  for (std::size_t at = 0; at < ds.samples.size(); at += a.batch) {
    std::vector<const LabeledSeries*> batch;
    for (std::size_t i = at; i < std::min(ds.samples.size(), at + a.batch); ++i) batch.push_back(&ds.samples[i]);
    const Tensor<T> probs = model.infer(make_input<T>(batch));
    dice += soft_dice_loss(probs, make_target<T>(batch, spec.label_mode)) * static_cast<double>(batch.size());
    const auto pred = predict_mask(probs, spec.label_mode);
    const std::size_t stride = spec.input_length * spec.classes;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::vector<std::uint8_t> p(pred.begin() + static_cast<std::ptrdiff_t>(b * stride),
                                        pred.begin() + static_cast<std::ptrdiff_t>((b + 1) * stride));
      const auto truth = truth_mask(*batch[b], spec.label_mode);
      iou.add(p, truth);
      // Offset each sample so events never overlap across samples.
      for (auto e : events_from_mask(p, spec.input_length, spec.classes)) {
        e.start += offset;
        e.end += offset;
        pred_events.push_back(e);
      }
      for (auto e : events_from_mask(truth, spec.input_length, spec.classes)) {
        e.start += offset;
        e.end += offset;
        true_events.push_back(e);
      }
      offset += spec.input_length + 1;
    }
  }
  json j;
  j["class_iou"] = iou.per_class();
  j["class_present"] = iou.present();
  j["mean_iou"] = iou.mean();
  j["dice_loss"] = dice / static_cast<double>(ds.samples.size());
  j["events"] = event_json(score_events(pred_events, true_events));
  return j;
}

int cmd_eval(const EvalArgs& a, const CLI::App* sub) {
  json j;
  if (!a.model.empty()) {
    if (a.data.empty()) throw SpecError("--model needs --data");
    j = peek_model(resolve(a.model)).scalar_bytes == 8 ? eval_model<double>(a) : eval_model<float>(a);
  } else {
    if (a.pred.empty() || a.truth.empty()) throw SpecError("eval needs --model/--data or --pred/--truth");
    const CsvTable p = read_csv_table(resolve(a.pred)), g = read_csv_table(resolve(a.truth));
    if (p.classes == 0 || p.classes != g.classes || p.rows() != g.rows()) {
      throw DataError("prediction and truth need the same rows and mask columns");
    }
    IouAccumulator iou(p.classes);
    iou.add(p.mask, g.mask);
    j["class_iou"] = iou.per_class();
    j["class_present"] = iou.present();
    j["mean_iou"] = iou.mean();
    j["events"] = event_json(score_events(events_from_mask(p.mask, p.rows(), p.classes),
                                          events_from_mask(g.mask, g.rows(), g.classes)));
  }
  std::cout << j.dump(2) << "\n";
  if (!a.out.empty()) {
    write_snapshot(resolve(a.out), sub);
    std::ofstream(fs::path(resolve(a.out)) / "report.json") << j.dump(2) << "\n";
  }
  return kOk;
}

template <typename T>
void print_model(const fs::path& path) {
  const Model<T> m = load_model<T>(path);
  std::printf("%s\n", describe(m.spec()).c_str());
  std::printf("precision: %s\n", sizeof(T) == 8 ? "f64" : "f32");
  std::printf("output channels: %zu\n", m.spec().output_channels());
  std::printf("%-14s %8s %12s\n", "section", "ordinal", "parameters");
  for (const auto& s : m.sections()) std::printf("%-14s %8zu %12zu\n", s.name.c_str(), s.ordinal, s.parameter_count());
  std::printf("total parameters: %zu\n", m.parameter_count());
}

int cmd_inspect(const std::string& model) {
  const fs::path p = resolve(model);
  if (peek_model(p).scalar_bytes == 8) print_model<double>(p);
  else print_model<float>(p);
  return kOk;
}

int run(int argc, char** argv);

int cmd_replay(const std::string& config, const std::string& out) {
  std::ifstream is(resolve(config));
  if (!is) throw SpecError("cannot read " + config);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad config snapshot: ") + e.what());
  }
  std::vector<std::string> args{"tsseg"};
  for (const auto& a : j.at("argv")) args.push_back(a.get<std::string>());
  if (!out.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--out") {
        args[i + 1] = resolve(out);
        replaced = true;
      }
    }
    if (!replaced) throw SpecError("this command has no --out to redirect");
  }
  std::vector<char*> ptrs;
  for (auto& s : args) ptrs.push_back(s.data());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int run(int argc, char** argv) {
  CLI::App app{"Time-series segmentation with 1D U-Nets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tsseg 1.0");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--task", sa.task, "pretrain, shapes or crops")->capture_default_str();
  synth->add_option("--n", sa.n, "Number of samples")->capture_default_str();
  synth->add_option("--length", sa.length, "Series length")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Master seed")->capture_default_str();
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--format", sa.format, "csv or binary")->capture_default_str();
  synth->add_option("--input", sa.input, "Source CSV for --task crops");

  AugmentArgs aa;
  auto* augment = app.add_subcommand("augment", "Apply an augmentation policy to a dataset");
  augment->add_option("--data", aa.data, "Input dataset directory")->required();
  augment->add_option("--policy", aa.policy, "Policy JSON")->required();
  augment->add_option("--out", aa.out, "Output dataset directory")->required();
  augment->add_option("--seed", aa.seed)->capture_default_str();
  augment->add_option("--copies", aa.copies, "Augmented copies per sample")->capture_default_str();
  augment->add_flag("--keep-original", aa.keep, "Also keep the input samples");
  augment->add_flag("--force", aa.force, "Allow pairs the invariance table rejects");

  TrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "Train a univariate model on a synthetic pretraining set");
  pretrain->add_option("--data", pa.data, "Dataset directory")->required();
  pretrain->add_option("--out", pa.out, "Run directory")->required();
  pa.arch.add(pretrain, false);
  pa.train.add(pretrain, 20);

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model from scratch");
  trn->add_option("--data", ta.data, "Dataset directory")->required();
  trn->add_option("--out", ta.out, "Run directory")->required();
  ta.arch.add(trn, true);
  ta.train.add(trn, 10);

  FinetuneArgs fa;
  auto* fine = app.add_subcommand("finetune", "Transplant a pretrained model and fine-tune it");
  fine->add_option("--base-model", fa.base, "Pretrained univariate model")->required();
  fine->add_option("--data", fa.data, "Dataset directory")->required();
  fine->add_option("--out", fa.out, "Run directory")->required();
  fine->add_option("--strategy", fa.strategy, "multipliers or freeze (default: freeze for munet, else multipliers)");
  fine->add_option("--target", fa.target, "unet or munet")->capture_default_str();
  fine->add_option("--channels", fa.channels, "Input channels of the target (default: dataset channels)");
  fine->add_option("--label-mode", fa.label_mode, "multi or single")->capture_default_str();
  fa.train.add(fine, 10);

  DetectArgs da;
  auto* det = app.add_subcommand("detect", "Sliding-window detection on a CSV stream");
  det->add_option("--model", da.model, "Model file")->required();
  det->add_option("--input", da.input, "CSV with t, v1..vC")->required();
  det->add_option("--out", da.out, "Output directory (events.jsonl, probs.csv)")->required();
  det->add_option("--snapshot", da.snapshot, "Snapshot length in points (default: model input length)");
  det->add_option("--coverage", da.coverage, "Evaluations per point; stride = snapshot / coverage")
      ->capture_default_str();
  det->add_option("--stride", da.stride, "Explicit stride (overrides --coverage)");
  det->add_option("--norm", da.norm, "fixed or per_snapshot")->capture_default_str();
  det->add_option("--center", da.center, "Fixed-mode center, one value or one per channel")->capture_default_str();
  det->add_option("--scale", da.scale, "Fixed-mode scale, one value or one per channel")->capture_default_str();
  det->add_option("--ensemble", da.ensemble, "mean or max")->capture_default_str();
  det->add_option("--threshold", da.threshold, "Event threshold")->capture_default_str();
  det->add_option("--min-len", da.min_len, "Shortest event kept")->capture_default_str();
  det->add_option("--merge-gap", da.merge_gap, "Largest gap merged into one event")->capture_default_str();
  det->add_option("--threads", da.threads, "Worker threads")->capture_default_str();
  det->add_option("--batch", da.batch, "Windows per forward pass")->capture_default_str();
  det->add_flag("--force", da.force, "Allow stride > snapshot (leaves gaps)");
  det->add_flag("--print", da.print, "Also print events to stdout");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "IoU and event scores");
  ev->add_option("--model", ea.model, "Model file");
  ev->add_option("--data", ea.data, "Dataset directory");
  ev->add_option("--pred", ea.pred, "Predicted mask CSV");
  ev->add_option("--truth", ea.truth, "True mask CSV");
  ev->add_option("--out", ea.out, "Directory for report.json");
  ev->add_option("--batch", ea.batch)->capture_default_str();

  std::string inspect_model;
  auto* insp = app.add_subcommand("inspect", "Print a model's spec and parameter counts");
  insp->add_option("--model", inspect_model, "Model file")->required();

  std::string replay_config, replay_out;
  auto* rep = app.add_subcommand("replay", "Re-run a command from its config.json");
  rep->add_option("--config", replay_config, "config.json written by an earlier run")->required();
  rep->add_option("--out", replay_out, "Redirect the run's --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (synth->parsed()) return cmd_synth(sa, synth);
  if (augment->parsed()) return cmd_augment(aa, augment);
  if (pretrain->parsed()) return cmd_train(pa, pretrain);
  if (trn->parsed()) return cmd_train(ta, trn);
  if (fine->parsed()) return cmd_finetune(fa, fine);
  if (det->parsed()) return cmd_detect(da, det);
  if (ev->parsed()) return cmd_eval(ea, ev);
  if (insp->parsed()) return cmd_inspect(inspect_model);
  if (rep->parsed()) return cmd_replay(replay_config, replay_out);
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const SpecError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
}
