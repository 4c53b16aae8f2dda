#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmt/cli/profile.hpp"

namespace dmt::cli {

// Every command returns 0 on success, 1 on a runtime failure and 2 on a usage
// or parse error, after printing the message to `err`.

struct SynthOptions {
  std::filesystem::path spec;  // [suite] or [scene] sections
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

struct TrainOptions {
  std::string profile = "desk";
  std::filesystem::path config;  // optional overrides and [data]
  std::filesystem::path data;    // directory of sequences; else [data] in the config
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);

struct TrackOptions {
  std::string profile = "desk";
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::optional<double> gate;
};
int cmd_track(const TrackOptions& options, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path data;
  std::filesystem::path predictions;
  std::filesystem::path out;
  std::filesystem::path table;  // optional published (Pr, Re, F) rows
};
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

/// scope ∈ {gradcheck, metrics, tables, all}.
int cmd_verify(const std::string& scope, std::ostream& out, std::ostream& err);

int cmd_profile(const std::string& profile, const std::filesystem::path& config, std::ostream& out,
                std::ostream& err);

/// Sequence directories under `root` (those holding groundtruth.txt), sorted
/// by name; `root` itself when it is one.
std::vector<std::filesystem::path> sequence_dirs(const std::filesystem::path& root);

/// Profile plus the overrides of an optional config file.
Profile load_profile(const std::string& name, const std::filesystem::path& config);

/// Command-line entry point.
int run(int argc, char** argv);

}  // namespace dmt::cli
