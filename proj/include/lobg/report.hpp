#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lobg/bench.hpp"

// Aggregation and plotting over metric CSVs.
namespace lobg::report {

struct CsvData {
  std::vector<bench::MetricsRecord> rows;
  std::size_t skipped = 0;  // malformed rows, each logged as a warning
};

// Reads rows in the bench CSV schema. A file whose header does not match
// throws InvalidInput; malformed rows are skipped.
CsvData read_csv(const std::filesystem::path& path);
CsvData read_csvs(const std::vector<std::filesystem::path>& paths);

// Parses one data row; returns false (and leaves `out` unspecified) when it
// is malformed.
bool parse_row(const std::string& line, bench::MetricsRecord& out);

// Mean HM per distinct value of a swept variable, sorted by value.
struct SweepPoint {
  double x = 0;
  double hm_mean = 0;
  double hm_std = 0;
  std::size_t n = 0;
};
enum class Variable { kQ, kLambda, kGamma };
const char* variable_name(Variable v);
std::vector<SweepPoint> sweep(const std::vector<bench::MetricsRecord>& rows, Variable v);

// Mean and sample std per component combination.
struct ComponentRow {
  bool fif = false, stp = false, hld = false;
  std::size_t n = 0;
  double base_mean = 0, base_std = 0;
  double novel_mean = 0, novel_std = 0;
  double hm_mean = 0, hm_std = 0;
};
std::vector<ComponentRow> component_table(const std::vector<bench::MetricsRecord>& rows);

// Largest |hm - harmonic_mean(base, novel)| across rows.
double hm_consistency_error(const std::vector<bench::MetricsRecord>& rows);

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::vector<SweepPoint>& points);

struct Written {
  std::vector<std::filesystem::path> plots;
  std::filesystem::path table;
  std::filesystem::path summary;
};

// One SVG per variable that takes at least two values; when none does, a
// single-point plot over q. Also writes components.md and summary.txt.
Written write_report(const CsvData& data, const std::filesystem::path& out_dir);

}  // namespace lobg::report
