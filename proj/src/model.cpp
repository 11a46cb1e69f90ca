#include "tsseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "tsseg/random.hpp"

namespace tsseg {

std::string_view to_string(ArchKind kind) { return kind == ArchKind::unet ? "unet" : "munet"; }
std::string_view to_string(LabelMode mode) {
  return mode == LabelMode::multi_label ? "multi_label" : "single_label";
}

ArchKind parse_arch_kind(std::string_view s) {
  if (s == "unet") return ArchKind::unet;
  if (s == "munet") return ArchKind::munet;
  throw SpecError("unknown architecture kind '" + std::string(s) + "' (expected unet or munet)");
}

LabelMode parse_label_mode(std::string_view s) {
  if (s == "multi_label" || s == "multi") return LabelMode::multi_label;
  if (s == "single_label" || s == "single") return LabelMode::single_label;
  throw SpecError("unknown label mode '" + std::string(s) + "' (expected multi_label or single_label)");
}

void ArchSpec::validate() const {
  if (channels < 1) throw SpecError("channels must be >= 1");
  if (classes < 1) throw SpecError("classes must be >= 1");
  if (depth < 2) throw SpecError("depth must be >= 2, got " + std::to_string(depth));
  if (depth > 16) throw SpecError("depth must be <= 16");
  if (base_width < 1) throw SpecError("base_width must be >= 1");
  if (pool < 1) throw SpecError("pool must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw SpecError("kernel must be odd, got " + std::to_string(kernel));
  if (kind == ArchKind::munet && channels < 2) throw SpecError("munet needs at least 2 input channels");
  std::size_t divisor = 1;
  for (std::size_t l = 1; l < depth; ++l) divisor *= pool;
  if (input_length < divisor || input_length % divisor != 0) {
    throw SpecError("input_length " + std::to_string(input_length) + " must be a positive multiple of pool^(depth-1) = " +
                    std::to_string(divisor));
  }
}

std::size_t ArchSpec::length_at(std::size_t level) const {
  std::size_t len = input_length;
  for (std::size_t l = 1; l < level; ++l) len /= pool;
  return len;
}

std::string describe(const ArchSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.kind) << " L=" << spec.input_length << " C=" << spec.channels << " M=" << spec.classes << " "
     << to_string(spec.label_mode) << " depth=" << spec.depth << " base_width=" << spec.base_width
     << " pool=" << spec.pool << " kernel=" << spec.kernel;
  return os.str();
}

// ---------------------------------------------------------------------------
// Section
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Param<T>*> Section<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& b : blocks) {
    out.push_back(&b.kernel);
    out.push_back(&b.bias);
    if (b.bn) {
      out.push_back(&b.bn->gamma);
      out.push_back(&b.bn->beta);
    }
  }
  return out;
}

template <typename T>
std::vector<const Param<T>*> Section<T>::params() const {
  std::vector<const Param<T>*> out;
  for (const auto& b : blocks) {
    out.push_back(&b.kernel);
    out.push_back(&b.bias);
    if (b.bn) {
      out.push_back(&b.bn->gamma);
      out.push_back(&b.bn->beta);
    }
  }
  return out;
}

template <typename T>
std::size_t Section<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->size();
  return n;
}

template <typename T>
const Tensor<T>* SectionTrace<T>::find(std::string_view name) const {
  for (const auto& [n, t] : outputs)
    if (n == name) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

template <typename T>
ConvBlock<T> make_block(std::size_t kernel, std::size_t in_channels, std::size_t filters, bool normalized, Rng& rng) {
  ConvBlock<T> b{Param<T>(Shape{kernel, in_channels, filters}), Param<T>(Shape{filters}), std::nullopt};
  const double limit = std::sqrt(6.0 / static_cast<double>(kernel * in_channels));
  for (auto& w : b.kernel.value.values()) w = static_cast<T>(rng.uniform(-limit, limit));
  if (normalized) b.bn.emplace(filters);
  return b;
}

template <typename T>
Section<T> make_section(std::string name, std::size_t ordinal, std::optional<std::size_t> channel,
                        std::size_t kernel, std::size_t in_channels, std::size_t width, Rng& rng) {
  Section<T> s{std::move(name), ordinal, channel, {}};
  s.blocks.push_back(make_block<T>(kernel, in_channels, width, true, rng));
  s.blocks.push_back(make_block<T>(kernel, width, width, true, rng));
  return s;
}

}  // namespace

template <typename T>
std::string Model<T>::encoder_name(std::size_t level, std::optional<std::size_t> channel) {
  std::string s = "enc" + std::to_string(level);
  if (channel) s += ".ch" + std::to_string(*channel);
  return s;
}

template <typename T>
std::string Model<T>::decoder_name(std::size_t level) {
  return "dec" + std::to_string(level);
}

template <typename T>
Model<T> Model<T>::build(const ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  Rng rng(seed);
  const std::size_t D = spec.depth;
  const std::size_t K = spec.kernel;
  const std::size_t P = spec.path_count();

  for (std::size_t l = 1; l <= spec.path_levels(); ++l) {
    for (std::size_t p = 0; p < P; ++p) {
      std::size_t in = l == 1 ? (spec.kind == ArchKind::unet ? spec.channels : 1) : spec.width(l - 1);
      auto channel = spec.kind == ArchKind::munet ? std::optional<std::size_t>(p) : std::nullopt;
      m.sections_.push_back(make_section<T>(encoder_name(l, channel), l, channel, K, in, spec.width(l), rng));
    }
  }
  if (spec.kind == ArchKind::munet) {
    m.sections_.push_back(
        make_section<T>(encoder_name(D), D, std::nullopt, K, P * spec.width(D - 1), spec.width(D), rng));
  }
  for (std::size_t l = D - 1; l >= 1; --l) {
    const std::size_t in = spec.width(l + 1) + P * spec.width(l);
    m.sections_.push_back(make_section<T>(decoder_name(l), 2 * D - l, std::nullopt, K, in, spec.width(l), rng));
  }
  Section<T> head{std::string(kHeadName), 2 * D, std::nullopt, {}};
  head.blocks.push_back(make_block<T>(1, spec.width(1), spec.output_channels(), false, rng));
  m.sections_.push_back(std::move(head));
  m.index_sections();
  return m;
}

template <typename T>
void Model<T>::index_sections() {
  const std::size_t P = spec_.path_count();
  encoder_index_.assign(P, std::vector<std::size_t>(spec_.path_levels()));
  decoder_index_.assign(spec_.depth - 1, 0);
  shared_index_.reset();
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const auto& s = sections_[i];
    if (s.name == kHeadName) {
      head_index_ = i;
    } else if (s.name.rfind("dec", 0) == 0) {
      decoder_index_[2 * spec_.depth - s.ordinal - 1] = i;
    } else if (spec_.kind == ArchKind::munet && !s.channel) {
      shared_index_ = i;
    } else {
      encoder_index_[s.channel.value_or(0)][s.ordinal - 1] = i;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename T>
template <typename Self>
Tensor<T> Model<T>::run(Self& self, const Tensor<T>& batch, Mode mode, Tape* tape, SectionTrace<T>* trace) {
  const ArchSpec& spec = self.spec_;
  if (batch.rank() != 3 || batch.dim(1) != spec.input_length || batch.dim(2) != spec.channels) {
    throw ShapeError("model expects input [B, " + std::to_string(spec.input_length) + ", " +
                     std::to_string(spec.channels) + "], got " + shape_to_string(batch.shape()));
  }
  constexpr bool read_only = std::is_const_v<Self>;
  const std::size_t D = spec.depth;
  const std::size_t P = spec.path_count();

  if (tape) {
    tape->sections.assign(self.sections_.size(), {});
    tape->pool_argmax.assign(P, std::vector<std::vector<std::uint32_t>>(spec.path_levels()));
    tape->valid = false;
  }

  auto apply = [&](std::size_t index, Tensor<T> h) {
    auto& section = self.sections_[index];
    for (std::size_t bi = 0; bi < section.blocks.size(); ++bi) {
      auto& block = section.blocks[bi];
      BlockTape* bt = nullptr;
      if (tape) {
        tape->sections[index].emplace_back();
        bt = &tape->sections[index].back();
      }
      Tensor<T> z = conv1d(h, block.kernel.value, block.bias.value);
      if (bt) bt->input = std::move(h);
      if (block.bn) {
        if constexpr (read_only) {
          z = batch_norm_infer(z, *block.bn);
        } else {
          z = batch_norm(z, *block.bn, mode, bt ? &bt->bn : nullptr);
        }
        h = relu(z);
        if (bt) bt->pre_activation = std::move(z);
      } else {
        h = std::move(z);
      }
    }
    if (trace) trace->outputs.emplace_back(section.name, h);
    return h;
  };

  // Encoder paths. skips[p][l-1] is the pre-pool output of level l.
  std::vector<std::vector<Tensor<T>>> skips(P);
  std::vector<Tensor<T>> pooled(P);
  for (std::size_t p = 0; p < P; ++p) {
    Tensor<T> h = spec.kind == ArchKind::unet ? batch : slice_channel(batch, p);
    for (std::size_t l = 1; l <= spec.path_levels(); ++l) {
      h = apply(self.encoder_index_[p][l - 1], std::move(h));
      skips[p].push_back(h);
      if (l < D) {
        auto pr = max_pool1d(h, spec.pool);
        if (tape) tape->pool_argmax[p][l - 1] = std::move(pr.argmax);
        h = std::move(pr.output);
      }
    }
    pooled[p] = std::move(h);
  }

  Tensor<T> deep;
  if (spec.kind == ArchKind::unet) {
    deep = skips[0][D - 1];
  } else {
    deep = apply(*self.shared_index_, concat_channels<T>(std::span<const Tensor<T>>(pooled)));
  }

  for (std::size_t l = D - 1; l >= 1; --l) {
    std::vector<Tensor<T>> parts;
    parts.reserve(P + 1);
    parts.push_back(upsample1d(deep, spec.pool));
    for (std::size_t p = 0; p < P; ++p) parts.push_back(std::move(skips[p][l - 1]));
    deep = apply(self.decoder_index_[l - 1], concat_channels<T>(std::span<const Tensor<T>>(parts)));
  }

  Tensor<T> logits = apply(self.head_index_, std::move(deep));
  Tensor<T> probs = spec.label_mode == LabelMode::multi_label ? sigmoid(logits) : softmax_channels(logits);
  if (tape) {
    tape->probs = probs;
    tape->valid = true;
  }
  return probs;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, Mode mode) {
  if (mode == Mode::infer) return infer(batch);
  return run(*this, batch, mode, &tape_, nullptr);
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& batch, SectionTrace<T>* trace) const {
  return run(*this, batch, Mode::infer, nullptr, trace);
}

template <typename T>
Tensor<T> Model<T>::section_backward(std::size_t index, const Tensor<T>& grad) {
  auto& section = sections_[index];
  auto& tapes = tape_.sections[index];
  Tensor<T> g = grad;
  for (std::size_t bi = section.blocks.size(); bi-- > 0;) {
    auto& block = section.blocks[bi];
    auto& bt = tapes[bi];
    if (block.bn) {
      g = relu_backward(bt.pre_activation, g);
      g = batch_norm_backward(g, *block.bn, bt.bn);
    }
    g = conv1d_backward(bt.input, block.kernel, block.bias, g);
  }
  return g;
}

template <typename T>
void Model<T>::backward(const Tensor<T>& grad_probs) {
  if (!tape_.valid) throw std::logic_error("Model::backward called without a preceding train-mode forward");
  if (grad_probs.shape() != tape_.probs.shape()) throw ShapeError("Model::backward gradient shape mismatch");
  const std::size_t D = spec_.depth;
  const std::size_t P = spec_.path_count();

  Tensor<T> g = spec_.label_mode == LabelMode::multi_label ? sigmoid_backward(tape_.probs, grad_probs)
                                                           : softmax_channels_backward(tape_.probs, grad_probs);
  g = section_backward(head_index_, g);

  std::vector<std::vector<Tensor<T>>> skip_grads(P, std::vector<Tensor<T>>(D));
  for (std::size_t l = 1; l <= D - 1; ++l) {
    Tensor<T> dcat = section_backward(decoder_index_[l - 1], g);
    std::vector<std::size_t> widths{spec_.width(l + 1)};
    for (std::size_t p = 0; p < P; ++p) widths.push_back(spec_.width(l));
    auto parts = split_channels(dcat, widths);
    for (std::size_t p = 0; p < P; ++p) skip_grads[p][l - 1] = std::move(parts[p + 1]);
    g = upsample1d_backward(parts[0], spec_.pool);
  }

  std::vector<Tensor<T>> pooled_grads(P);
  if (spec_.kind == ArchKind::unet) {
    skip_grads[0][D - 1] = std::move(g);
  } else {
    Tensor<T> dshared = section_backward(*shared_index_, g);
    std::vector<std::size_t> widths(P, spec_.width(D - 1));
    pooled_grads = split_channels(dshared, widths);
  }

  for (std::size_t p = 0; p < P; ++p) {
    Tensor<T> down = std::move(pooled_grads[p]);
    for (std::size_t l = spec_.path_levels(); l >= 1; --l) {
      Tensor<T> pre = std::move(skip_grads[p][l - 1]);
      if (l < D) {
        Tensor<T> routed = max_pool1d_backward(down, tape_.pool_argmax[p][l - 1], spec_.length_at(l));
        if (pre.empty()) {
          pre = std::move(routed);
        } else {
          for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += routed[i];
        }
      }
      down = section_backward(encoder_index_[p][l - 1], pre);
    }
  }
  tape_.valid = false;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& s : sections_) {
    auto ps = s.params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

template <typename T>
std::vector<const Param<T>*> Model<T>::params() const {
  std::vector<const Param<T>*> out;
  for (const auto& s : sections_) {
    auto ps = s.params();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : sections_) n += s.parameter_count();
  return n;
}

template <typename T>
Section<T>& Model<T>::section(std::string_view name) {
  for (auto& s : sections_)
    if (s.name == name) return s;
  throw SpecError("no section named '" + std::string(name) + "'");
}

template <typename T>
const Section<T>& Model<T>::section(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.name == name) return s;
  throw SpecError("no section named '" + std::string(name) + "'");
}

template <typename T>
bool Model<T>::has_section(std::string_view name) const {
  return std::any_of(sections_.begin(), sections_.end(), [&](const auto& s) { return s.name == name; });
}

template <typename T>
std::vector<Section<T>*> Model<T>::select(std::string_view selector) {
  std::vector<Section<T>*> out;
  for (auto& s : sections_) {
    const std::string_view n = s.name;
    if (n == selector || (n.size() > selector.size() && n.substr(0, selector.size()) == selector &&
                          n[selector.size()] == '.')) {
      out.push_back(&s);
    }
  }
  if (out.empty()) throw SpecError("section selector '" + std::string(selector) + "' matches nothing");
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Model<T>::named_arrays() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& s : sections_) {
    for (std::size_t bi = 0; bi < s.blocks.size(); ++bi) {
      const auto& b = s.blocks[bi];
      const std::string prefix = s.name + ".b" + std::to_string(bi) + ".";
      out.emplace_back(prefix + "kernel", &b.kernel.value);
      out.emplace_back(prefix + "bias", &b.bias.value);
      if (b.bn) {
        out.emplace_back(prefix + "gamma", &b.bn->gamma.value);
        out.emplace_back(prefix + "beta", &b.bn->beta.value);
        out.emplace_back(prefix + "running_mean", &b.bn->running_mean);
        out.emplace_back(prefix + "running_var", &b.bn->running_var);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::named_arrays() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& [name, ptr] : std::as_const(*this).named_arrays()) out.emplace_back(name, const_cast<Tensor<T>*>(ptr));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }
  void f64(double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    u64(u);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof()) throw FormatError(source_ + ": truncated model file");
    return static_cast<std::uint8_t>(c);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  double f64() {
    const std::uint64_t u = u64();
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError(source_ + ": truncated model file");
    return s;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
  const std::string& source() const { return source_; }

 private:
  std::istream& is_;
  std::string source_;
};

ModelFileInfo read_header(Reader& r) {
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError(r.source() + ": bad magic, not a TSU1 model file");
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion) {
    throw FormatError(r.source() + ": unsupported format version " + std::to_string(version));
  }
  ModelFileInfo info;
  info.scalar_bytes = r.u8();
  if (info.scalar_bytes != 4 && info.scalar_bytes != 8) throw FormatError(r.source() + ": bad scalar width");
  ArchSpec& s = info.spec;
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError(r.source() + ": bad architecture kind");
  s.kind = static_cast<ArchKind>(kind);
  s.input_length = r.u32();
  s.channels = r.u32();
  s.classes = r.u32();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw FormatError(r.source() + ": bad label mode");
  s.label_mode = static_cast<LabelMode>(mode);
  s.depth = r.u32();
  s.base_width = r.u32();
  s.pool = r.u32();
  s.kernel = r.u32();
  try {
    s.validate();
  } catch (const SpecError& e) {
    throw FormatError(r.source() + ": embedded spec is invalid: " + e.what());
  }
  return info;
}

}  // namespace

template <typename T>
void save_model(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  Writer w(os);
  w.bytes(kModelMagic, 4);
  w.u16(kModelFormatVersion);
  w.u8(sizeof(T));
  const ArchSpec& s = model.spec();
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.u32(static_cast<std::uint32_t>(s.input_length));
  w.u32(static_cast<std::uint32_t>(s.channels));
  w.u32(static_cast<std::uint32_t>(s.classes));
  w.u8(static_cast<std::uint8_t>(s.label_mode));
  w.u32(static_cast<std::uint32_t>(s.depth));
  w.u32(static_cast<std::uint32_t>(s.base_width));
  w.u32(static_cast<std::uint32_t>(s.pool));
  w.u32(static_cast<std::uint32_t>(s.kernel));
  const auto arrays = model.named_arrays();
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, tensor] : arrays) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(tensor->rank()));
    for (auto d : tensor->shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : tensor->values()) {
      if constexpr (sizeof(T) == 4) {
        w.f32(v);
      } else {
        w.f64(v);
      }
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

ModelFileInfo peek_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model file " + path.string());
  Reader r(is, path.string());
  return read_header(r);
}

template <typename T>
Model<T> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model file " + path.string());
  Reader r(is, path.string());
  const ModelFileInfo info = read_header(r);
  Model<T> model = Model<T>::build(info.spec, 0);
  auto arrays = model.named_arrays();
  const std::uint32_t count = r.u32();
  if (count != arrays.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(arrays.size()) + " arrays for the embedded spec, found " +
                      std::to_string(count));
  }
  for (auto& [name, tensor] : arrays) {
    const std::string got = r.str(r.u16());
    if (got != name) throw FormatError(path.string() + ": expected array '" + name + "', found '" + got + "'");
    Shape shape(r.u8());
    for (auto& d : shape) d = r.u32();
    if (shape != tensor->shape()) {
      throw FormatError(path.string() + ": array '" + name + "' has shape " + shape_to_string(shape) + ", spec implies " +
                        shape_to_string(tensor->shape()));
    }
    for (auto& v : tensor->values()) v = static_cast<T>(info.scalar_bytes == 4 ? double(r.f32()) : r.f64());
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after last array");
  return model;
}

// ---------------------------------------------------------------------------
// Transplanting
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void copy_section_weights(const Section<T>& src, Section<T>& dst) {
  if (src.blocks.size() != dst.blocks.size()) throw SpecError("section " + dst.name + ": block count mismatch");
  for (std::size_t i = 0; i < src.blocks.size(); ++i) {
    const auto& a = src.blocks[i];
    auto& b = dst.blocks[i];
    if (a.kernel.value.shape() != b.kernel.value.shape() || a.bn.has_value() != b.bn.has_value()) {
      throw SpecError("section " + dst.name + ": shape mismatch " + shape_to_string(a.kernel.value.shape()) + " vs " +
                      shape_to_string(b.kernel.value.shape()));
    }
    b.kernel = Param<T>(a.kernel.value);
    b.bias = Param<T>(a.bias.value);
    if (a.bn) {
      b.bn->gamma = Param<T>(a.bn->gamma.value);
      b.bn->beta = Param<T>(a.bn->beta.value);
      b.bn->running_mean = a.bn->running_mean;
      b.bn->running_var = a.bn->running_var;
    }
  }
}

}  // namespace

template <typename T>
Model<T> transplant_unet_to_unet(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed) {
  const ArchSpec& src = pretrained.spec();
  if (src.kind != ArchKind::unet || target.kind != ArchKind::unet) {
    throw SpecError("transplant_unet_to_unet needs U-Net source and target");
  }
  ArchSpec aligned = target;
  aligned.classes = src.classes;
  aligned.label_mode = src.label_mode;
  if (!(aligned == src)) {
    throw SpecError("transplant target differs from source beyond classes/label_mode: source {" + describe(src) +
                    "}, target {" + describe(target) + "}");
  }
  Model<T> out = Model<T>::build(target, seed);
  for (auto& s : out.sections()) {
    if (s.name == Model<T>::kHeadName) continue;
    copy_section_weights(pretrained.section(s.name), s);
  }
  return out;
}

template <typename T>
Model<T> transplant_unet_to_munet(const Model<T>& pretrained, const ArchSpec& target, std::uint64_t seed) {
  const ArchSpec& src = pretrained.spec();
  if (src.kind != ArchKind::unet || src.channels != 1) {
    throw SpecError("transplant_unet_to_munet needs a univariate U-Net source");
  }
  if (target.kind != ArchKind::munet) throw SpecError("transplant_unet_to_munet needs a MU-Net target");
  if (src.depth != target.depth || src.base_width != target.base_width || src.pool != target.pool ||
      src.kernel != target.kernel) {
    throw SpecError("transplant_unet_to_munet: depth/base_width/pool/kernel must match: source {" + describe(src) +
                    "}, target {" + describe(target) + "}");
  }
  Model<T> out = Model<T>::build(target, seed);
  for (std::size_t l = 1; l < target.depth; ++l) {
    const auto& from = pretrained.section(Model<T>::encoder_name(l));
    for (std::size_t c = 0; c < target.channels; ++c) copy_section_weights(from, out.section(Model<T>::encoder_name(l, c)));
  }
  return out;
}

template struct Section<float>;
template struct Section<double>;
template struct SectionTrace<float>;
template struct SectionTrace<double>;
template class Model<float>;
template class Model<double>;
template void save_model(const Model<float>&, const std::filesystem::path&);
template void save_model(const Model<double>&, const std::filesystem::path&);
template Model<float> load_model(const std::filesystem::path&);
template Model<double> load_model(const std::filesystem::path&);
template Model<float> transplant_unet_to_unet(const Model<float>&, const ArchSpec&, std::uint64_t);
template Model<double> transplant_unet_to_unet(const Model<double>&, const ArchSpec&, std::uint64_t);
template Model<float> transplant_unet_to_munet(const Model<float>&, const ArchSpec&, std::uint64_t);
template Model<double> transplant_unet_to_munet(const Model<double>&, const ArchSpec&, std::uint64_t);

}  // namespace tsseg
