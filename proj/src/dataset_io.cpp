#include "tsseg/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace tsseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSampleMagic[4] = {'T', 'S', 'D', '1'};

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      const auto b = static_cast<unsigned char>(v >> (8 * i));
      bytes(&b, 1);
    }
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

json meta_to_json(const SeriesMeta& m) {
  json j;
  j["family"] = to_string(m.family);
  j["cyclic"] = m.cyclic;
  j["period"] = m.period;
  j["knots"] = m.knots;
  j["seed"] = m.seed;
  j["anomalies"] = json::array();
  for (const auto& a : m.anomalies) {
    j["anomalies"].push_back({{"kind", to_string(a.kind)},
                              {"label", a.label},
                              {"begin", a.begin},
                              {"end", a.end},
                              {"intensity", a.intensity},
                              {"variant", a.variant}});
  }
  j["augmentations"] = m.augmentations;
  return j;
}

SeriesMeta meta_from_json(const json& j) {
  SeriesMeta m;
  m.family = parse_family(j.at("family").get<std::string>());
  m.cyclic = j.at("cyclic").get<bool>();
  m.period = j.at("period").get<std::size_t>();
  m.knots = j.value("knots", std::size_t{0});
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& a : j.at("anomalies")) {
    AnomalyDescriptor d;
    d.kind = parse_anomaly_kind(a.at("kind").get<std::string>());
    d.label = a.at("label").get<std::size_t>();
    d.begin = a.at("begin").get<std::size_t>();
    d.end = a.at("end").get<std::size_t>();
    d.intensity = a.at("intensity").get<double>();
    d.variant = a.at("variant").get<std::string>();
    m.anomalies.push_back(d);
  }
  m.augmentations = j.at("augmentations").get<std::vector<std::string>>();
  return m;
}

std::string sample_name(std::size_t i, SampleFormat f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu.%s", i, f == SampleFormat::csv ? "csv" : "bin");
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename V>
void put(std::ostream& os, V v) {
  unsigned char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(V));
  os.write(reinterpret_cast<const char*>(buf), sizeof(V));
}

template <typename V>
V get(std::istream& is, const fs::path& path) {
  unsigned char buf[sizeof(V)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(V))) throw DataError("truncated sample file " + path.string());
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(V));
  V v;
  std::memcpy(&v, buf, sizeof(V));
  return v;
}

void write_binary_sample(const LabeledSeries& s, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kSampleMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.length));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.classes));
  for (double v : s.values) put<double>(os, v);
  for (auto m : s.mask) put<std::uint8_t>(os, m);
}

LabeledSeries read_binary_sample(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kSampleMagic, 4) != 0) {
    throw DataError("bad magic in sample file " + path.string());
  }
  const auto len = get<std::uint32_t>(is, path);
  const auto ch = get<std::uint32_t>(is, path);
  const auto cl = get<std::uint32_t>(is, path);
  LabeledSeries s = LabeledSeries::zeros(len, ch, cl);
  for (auto& v : s.values) v = get<double>(is, path);
  for (auto& m : s.mask) m = get<std::uint8_t>(is, path);
  return s;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  char* end = nullptr;
  out = std::strtod(cell.c_str(), &end);
  return end && *end == '\0';
}

}  // namespace

std::string dataset_hash(const Dataset& ds) {
  Fnv1a f;
  f.str(ds.task);
  f.u64(static_cast<std::uint64_t>(ds.recipe_version));
  f.u64(ds.seed);
  f.u64(ds.length);
  f.u64(ds.channels);
  f.u64(ds.classes);
  for (auto k : ds.class_kinds) f.str(std::string(to_string(k)));
  f.u64(ds.samples.size());
  for (const auto& s : ds.samples) {
    f.str(meta_to_json(s.meta).dump());
    for (double v : s.values) f.u64(std::bit_cast<std::uint64_t>(v));
    f.bytes(s.mask.data(), s.mask.size());
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
  return buf;
}

void save_dataset(const Dataset& ds, const fs::path& dir, SampleFormat format) {
  ds.check();
  fs::create_directories(dir);
  json m;
  m["format"] = "tsseg-dataset";
  m["version"] = 1;
  m["task"] = ds.task;
  m["recipe_version"] = ds.recipe_version;
  m["seed"] = ds.seed;
  m["length"] = ds.length;
  m["channels"] = ds.channels;
  m["classes"] = ds.classes;
  m["class_kinds"] = json::array();
  for (auto k : ds.class_kinds) m["class_kinds"].push_back(to_string(k));
  m["sample_format"] = format == SampleFormat::csv ? "csv" : "binary";
  m["hash"] = dataset_hash(ds);
  m["samples"] = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string name = sample_name(i, format);
    if (format == SampleFormat::csv) {
      write_csv_table(series_to_table(s), dir / name);
    } else {
      write_binary_sample(s, dir / name);
    }
    json e = meta_to_json(s.meta);
    e["file"] = name;
    m["samples"].push_back(e);
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw DataError("cannot write manifest in " + dir.string());
  os << m.dump(1) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("no manifest.json in " + dir.string());
  json m;
  try {
    is >> m;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.task = m.at("task").get<std::string>();
    ds.recipe_version = m.at("recipe_version").get<int>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.length = m.at("length").get<std::size_t>();
    ds.channels = m.at("channels").get<std::size_t>();
    ds.classes = m.at("classes").get<std::size_t>();
    for (const auto& k : m.at("class_kinds")) ds.class_kinds.push_back(parse_anomaly_kind(k.get<std::string>()));
    for (const auto& e : m.at("samples")) {
      const fs::path file = dir / e.at("file").get<std::string>();
      LabeledSeries s;
      if (file.extension() == ".bin") {
        s = read_binary_sample(file);
      } else {
        s = table_to_series(read_csv_table(file));
        if (s.classes == 0) {
          s.classes = ds.classes;
          s.mask.assign(s.length * s.classes, 0);
        }
      }
      s.meta = meta_from_json(e);
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  ds.check();
  return ds;
}

CsvTable read_csv_table(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  std::vector<int> role;  // 0 time, 1 value, 2 mask, -1 ignored
  bool have_header = false;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    if (role.empty()) {
      double probe;
      have_header = !parse_number(cells[0], probe) || std::isnan(probe);
      if (have_header) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          const std::string& h = cells[i];
          if (i == 0 && (h == "t" || h == "time" || h == "timestamp")) role.push_back(0);
          else if (!h.empty() && (h[0] == 'v' || h[0] == 'x')) role.push_back(1);
          else if (!h.empty() && (h[0] == 'm' || h[0] == 'y')) role.push_back(2);
          else role.push_back(-1);
        }
      } else {
        role.push_back(0);
        for (std::size_t i = 1; i < cells.size(); ++i) role.push_back(1);
      }
      for (int r : role) {
        if (r == 1) ++t.channels;
        if (r == 2) ++t.classes;
      }
      if (t.channels == 0) throw DataError(path.string() + " has no value columns");
      if (have_header) continue;
    }
    if (cells.size() != role.size()) {
      throw DataError(path.string() + ":" + std::to_string(row) + ": expected " + std::to_string(role.size()) +
                      " columns, got " + std::to_string(cells.size()));
    }
    bool has_time = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v;
      if (!parse_number(cells[i], v)) {
        throw DataError(path.string() + ":" + std::to_string(row) + ": cannot parse '" + cells[i] + "'");
      }
      switch (role[i]) {
        case 0: t.time.push_back(v); has_time = true; break;
        case 1: t.values.push_back(v); break;
        case 2:
          if (!(v == 0.0 || v == 1.0)) throw DataError(path.string() + ":" + std::to_string(row) + ": mask must be 0/1");
          t.mask.push_back(static_cast<std::uint8_t>(v));
          break;
        default: break;
      }
    }
    if (!has_time) t.time.push_back(static_cast<double>(t.time.size()));
  }
  if (t.time.empty()) throw DataError(path.string() + " has no rows");
  return t;
}

void write_csv_table(const CsvTable& t, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "t";
  for (std::size_t c = 0; c < t.channels; ++c) os << ",v" << c + 1;
  for (std::size_t m = 0; m < t.classes; ++m) os << ",m" << m + 1;
  os << "\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    os << fmt_double(t.time[r]);
    for (std::size_t c = 0; c < t.channels; ++c) os << ',' << fmt_double(t.values[r * t.channels + c]);
    for (std::size_t m = 0; m < t.classes; ++m) os << ',' << int(t.mask[r * t.classes + m]);
    os << "\n";
  }
}

LabeledSeries table_to_series(const CsvTable& t) {
  LabeledSeries s = LabeledSeries::zeros(t.rows(), t.channels, t.classes);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    if (!std::isfinite(t.values[i])) throw DataError("series has missing or non-finite values");
    s.values[i] = t.values[i];
  }
  s.mask = t.mask;
  return s;
}

CsvTable series_to_table(const LabeledSeries& s) {
  CsvTable t;
  t.channels = s.channels;
  t.classes = s.classes;
  t.values = s.values;
  t.mask = s.mask;
  t.time.resize(s.length);
  for (std::size_t i = 0; i < s.length; ++i) t.time[i] = static_cast<double>(i);
  return t;
}

}  // namespace tsseg
