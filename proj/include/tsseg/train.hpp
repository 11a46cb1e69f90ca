#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsseg/model.hpp"
#include "tsseg/synth.hpp"

namespace tsseg {

enum class Precision { f32, f64 };
std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

/// Sections named by selector (see Model::select) stay frozen for `epochs`.
struct FreezePhase {
  std::vector<std::string> frozen;
  std::size_t epochs = 1;
  bool operator==(const FreezePhase&) const = default;
};

struct TrainConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;  // used when freeze_schedule is empty
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  double dice_epsilon = 1.0;
  /// Held-out share for best-weight selection; 0 validates on the training set.
  double val_fraction = 0.2;
  /// One entry per section ordinal (2 * depth of them); empty means all 1.
  std::vector<double> section_lr_multipliers;
  /// Empty means a single phase of `epochs` with nothing frozen.
  std::vector<FreezePhase> freeze_schedule;

  void validate() const;
  std::size_t total_epochs() const;
  bool operator==(const TrainConfig&) const = default;
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view text);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t phase = 0;  // 0-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_iou = 0.0;
};

struct EvalReport {
  std::vector<double> class_iou;
  std::vector<bool> class_present;
  double mean_iou = 0.0;
  double dice_loss = 0.0;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

template <typename T>
struct TrainHooks {
  std::function<void(std::size_t phase, const Model<T>&)> on_phase_begin;
  std::function<void(std::size_t phase, const Model<T>&)> on_phase_end;
  std::function<void(const EpochRecord&)> on_epoch_end;
};

/// Dice loss and pooled IoU of `model` over `data` in inference mode.
template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, double dice_epsilon = 1.0, std::size_t batch_size = 8);

/// Trains in place. On return the model holds the weights with the lowest
/// validation loss (the initial weights count as epoch 0 only when no epoch
/// ran); `final_weights` receives the last-epoch model when given. The report
/// evaluates the retained weights on the validation split.
template <typename T>
EvalReport train(Model<T>& model, const Dataset& data, const TrainConfig& config, const TrainHooks<T>* hooks = nullptr,
                 Model<T>* final_weights = nullptr);

/// (k/n)^2 for k = 1..n with n = 2 * depth, i.e. 0.01, 0.04, ..., 0.81, 1.0
/// for depth 5.
std::vector<double> default_multipliers(const ArchSpec& spec);

/// U-Net: enc1-enc2 frozen for e1 epochs, then everything for e2.
/// MU-Net: per-channel enc1..enc(D-1) frozen, then enc1-enc(D-3), then none.
std::vector<FreezePhase> default_freeze_schedule(const ArchSpec& spec, std::size_t e1, std::size_t e2,
                                                 std::size_t e3 = 0);

/// Transplant from a univariate model into `target` (U-Net or MU-Net).
template <typename T>
Model<T> transplant(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed);

/// Transplants the head, applies per-section multipliers (defaults when the
/// config has none) and trains.
template <typename T>
Model<T> finetune_multipliers(const Model<T>& pretrained, const ArchSpec& target, const Dataset& data,
                              TrainConfig config, EvalReport* report = nullptr, const TrainHooks<T>* hooks = nullptr,
                              Model<T>* final_weights = nullptr);

/// Transplants and trains through the freeze schedule (the default schedule
/// with `config.epochs` per phase when the config has none).
template <typename T>
Model<T> finetune_freeze(const Model<T>& pretrained, const ArchSpec& target, const Dataset& data, TrainConfig config,
                         EvalReport* report = nullptr, const TrainHooks<T>* hooks = nullptr,
                         Model<T>* final_weights = nullptr);

/// `epoch,train_loss,val_loss,val_iou` rows.
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Checks sample length / channels / classes against the model spec.
void check_dataset_matches(const Dataset& data, const ArchSpec& spec);

}  // namespace tsseg
