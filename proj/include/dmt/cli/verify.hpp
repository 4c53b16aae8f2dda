#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dmt::cli {

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Relative-error bound for every gradient check.
inline constexpr double kGradTolerance = 1e-4;
/// |recomputed F − printed F| bound for published rows (3-decimal rounding).
inline constexpr double kTableTolerance = 1e-3;

/// Central-difference checks on desk-profile shapes: CMA block, CMIM, SPM,
/// backbone, heads and the composed training loss.
std::vector<CheckLine> verify_gradcheck();

/// Brute-force equivalence of the metric kernels plus two identities.
std::vector<CheckLine> verify_metrics(std::size_t instances = 20, std::size_t frames = 10,
                                      std::uint64_t seed = 2024);

struct PublishedRow {
  std::string benchmark;
  std::string method;
  std::string type;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t line = 0;
};

/// Reads "benchmark,method,type,pr,re,f" rows; '#' lines and the header are skipped.
std::vector<PublishedRow> read_published_table(const std::filesystem::path& path);

/// One line per row: F recomputed from (Pr, Re) against the printed F.
std::vector<CheckLine> verify_tables(const std::filesystem::path& path);

/// Bundled fixture directory.
std::filesystem::path fixture_dir();

}  // namespace dmt::cli
