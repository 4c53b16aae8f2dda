#pragma once

#include <string>

#include "dmt/cli/config.hpp"
#include "dmt/model/model.hpp"
#include "dmt/pipeline/pipeline.hpp"

namespace dmt::cli {

struct Profile {
  std::string name;
  model::ModelConfig model;
  pipeline::TrainConfig train;
  pipeline::TrackerConfig tracker;

  std::size_t patch_size() const { return model.backbone.input_size; }

  static Profile desk();
  static Profile paper();
  /// "desk" or "paper"; anything else is a UsageError.
  static Profile named(const std::string& name);

  /// Applies the [model], [train] and [tracker] sections of `config`.
  void apply(const Config& config);
  void validate() const;

  /// Resolved constants, one "key = value" per line.
  std::string describe() const;
};

}  // namespace dmt::cli
