#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsseg/ops.hpp"
#include "tsseg/tensor.hpp"

namespace tsseg {

enum class ArchKind : std::uint8_t { unet = 0, munet = 1 };
enum class LabelMode : std::uint8_t { multi_label = 0, single_label = 1 };

std::string_view to_string(ArchKind kind);
std::string_view to_string(LabelMode mode);
ArchKind parse_arch_kind(std::string_view s);
LabelMode parse_label_mode(std::string_view s);

/// Invalid architecture description or incompatible transplant.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable or inconsistent model file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full description of a network. Levels are 1-based: encoding level l runs
/// at length input_length / pool^(l-1) with base_width * 2^(l-1) filters.
struct ArchSpec {
  ArchKind kind = ArchKind::unet;
  std::size_t input_length = 1024;
  std::size_t channels = 1;
  std::size_t classes = 1;
  LabelMode label_mode = LabelMode::multi_label;
  std::size_t depth = 5;
  std::size_t base_width = 16;
  std::size_t pool = 4;
  std::size_t kernel = 3;

  /// Throws SpecError describing the first violated rule.
  void validate() const;

  std::size_t width(std::size_t level) const { return base_width << (level - 1); }
  std::size_t length_at(std::size_t level) const;
  /// M for sigmoid heads, M + 1 (nominal column last) for softmax heads.
  std::size_t output_channels() const {
    return label_mode == LabelMode::multi_label ? classes : classes + 1;
  }
  /// Encoding sections per input path: all of them for U-Net, depth - 1 for MU-Net.
  std::size_t path_levels() const { return kind == ArchKind::unet ? depth : depth - 1; }
  std::size_t path_count() const { return kind == ArchKind::unet ? 1 : channels; }
  /// Number of section ordinals: depth encoders, depth - 1 decoders, one head.
  std::size_t section_ordinals() const { return 2 * depth; }

  bool operator==(const ArchSpec&) const = default;
};

std::string describe(const ArchSpec& spec);

/// conv -> batch norm -> ReLU; the output head is a bare conv.
template <typename T>
struct ConvBlock {
  Param<T> kernel;
  Param<T> bias;
  std::optional<BatchNorm<T>> bn;

  bool activated() const { return bn.has_value(); }
};

/// A named group of blocks. `ordinal` follows the left-to-right flow:
/// enc1..encD = 1..D, dec(D-1)..dec1 = D+1..2D-1, out = 2D. MU-Net
/// per-channel copies share the ordinal of their level.
template <typename T>
struct Section {
  std::string name;
  std::size_t ordinal = 0;
  std::optional<std::size_t> channel;
  std::vector<ConvBlock<T>> blocks;

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::size_t parameter_count() const;
};

/// Section outputs recorded during inference, in execution order.
template <typename T>
struct SectionTrace {
  std::vector<std::pair<std::string, Tensor<T>>> outputs;
  const Tensor<T>* find(std::string_view name) const;
};

template <typename T>
class Model {
 public:
  using value_type = T;

  /// Builds a U-Net or MU-Net with He-uniform kernels, zero biases,
  /// gamma = 1 / beta = 0, initialized in section order from `seed`.
  static Model build(const ArchSpec& spec, std::uint64_t seed);

  const ArchSpec& spec() const { return spec_; }

  /// Runs the network. Train mode uses batch statistics, updates running
  /// stats and records what backward() needs; infer mode does neither.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode);
  /// Read-only inference, safe to share across threads.
  Tensor<T> infer(const Tensor<T>& batch, SectionTrace<T>* trace = nullptr) const;
  /// Accumulates parameter gradients for the most recent train-mode forward.
  void backward(const Tensor<T>& grad_probs);

  void zero_grad();
  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::size_t parameter_count() const;

  std::span<Section<T>> sections() { return sections_; }
  std::span<const Section<T>> sections() const { return sections_; }
  Section<T>& section(std::string_view name);
  const Section<T>& section(std::string_view name) const;
  bool has_section(std::string_view name) const;

  /// Sections whose name equals `selector` or starts with `selector + "."`
  /// (so "enc1" selects MU-Net's enc1.ch0, enc1.ch1, ...). Throws SpecError
  /// when nothing matches.
  std::vector<Section<T>*> select(std::string_view selector);

  /// Named arrays in serialization order: per block kernel, bias, and for
  /// normalized blocks gamma, beta, running_mean, running_var.
  std::vector<std::pair<std::string, const Tensor<T>*>> named_arrays() const;
  std::vector<std::pair<std::string, Tensor<T>*>> named_arrays();

  /// Section name helpers.
  static std::string encoder_name(std::size_t level, std::optional<std::size_t> channel = std::nullopt);
  static std::string decoder_name(std::size_t level);
  static constexpr std::string_view kHeadName = "out";

 private:
  struct BlockTape {
    Tensor<T> input;
    BatchNormCache<T> bn;
    Tensor<T> pre_activation;
  };
  struct Tape {
    std::vector<std::vector<BlockTape>> sections;
    std::vector<std::vector<std::vector<std::uint32_t>>> pool_argmax;  // [path][level - 1]
    Tensor<T> probs;
    bool valid = false;
  };

  Model() = default;
  void index_sections();

  template <typename Self>
  static Tensor<T> run(Self& self, const Tensor<T>& batch, Mode mode, Tape* tape, SectionTrace<T>* trace);

  Tensor<T> section_backward(std::size_t index, const Tensor<T>& grad);

  ArchSpec spec_;
  std::vector<Section<T>> sections_;
  std::vector<std::vector<std::size_t>> encoder_index_;  // [path][level - 1]
  std::optional<std::size_t> shared_index_;              // MU-Net bottleneck
  std::vector<std::size_t> decoder_index_;               // [level - 1], levels 1..depth-1
  std::size_t head_index_ = 0;
  Tape tape_;
};

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'T', 'S', 'U', '1'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

struct ModelFileInfo {
  ArchSpec spec;
  std::size_t scalar_bytes = 4;
};

template <typename T>
void save_model(const Model<T>& model, const std::filesystem::path& path);

/// Loads and converts to T if the file was written in the other precision.
template <typename T>
Model<T> load_model(const std::filesystem::path& path);

/// Reads just the header.
ModelFileInfo peek_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Transplanting
// ---------------------------------------------------------------------------

/// Copies every section except the head into a fresh model of `target`.
/// The specs may differ only in classes and label_mode.
template <typename T>
Model<T> transplant_unet_to_unet(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed);

/// Gives every per-channel encoder path of a MU-Net a copy of the univariate
/// model's enc1..enc(depth-1); the shared bottleneck, decoders and head are
/// freshly initialized.
template <typename T>
Model<T> transplant_unet_to_munet(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace tsseg
