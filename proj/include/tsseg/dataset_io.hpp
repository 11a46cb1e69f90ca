#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsseg/synth.hpp"

namespace tsseg {

enum class SampleFormat { csv, binary };

/// Writes `manifest.json` plus one file per sample (`sample_00000.csv` with
/// columns t, v1..vC, m1..mM, or `sample_00000.bin`).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir, SampleFormat format = SampleFormat::csv);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a over the header, per-sample meta, value bit patterns and masks.
std::string dataset_hash(const Dataset& ds);

/// A table read from CSV. Columns named v* are values, m* are mask columns
/// and the first column is time when it is called t (or time). Without a
/// header every column after the first is a value column. Empty cells and
/// "nan" become NaN in `values`.
struct CsvTable {
  std::vector<double> time;
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> values;        // rows x channels
  std::vector<std::uint8_t> mask;    // rows x classes

  std::size_t rows() const { return time.size(); }
};

CsvTable read_csv_table(const std::filesystem::path& path);
void write_csv_table(const CsvTable& table, const std::filesystem::path& path);

/// CSV to LabeledSeries; missing values are rejected (impute them first).
LabeledSeries table_to_series(const CsvTable& table);
CsvTable series_to_table(const LabeledSeries& s);

}  // namespace tsseg
