#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dmt/numcore/rng.hpp"
#include "dmt/numcore/tensor.hpp"

namespace dmt {

/// Ordered, named collection of parameter tensors. Entries alias the
/// module-owned tensors, so loading into a ParamSet updates the module.
class ParamSet {
 public:
  void add(std::string name, Tensor tensor);
  void extend(const ParamSet& other);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  const Tensor& at(const std::string& name) const;
  std::size_t total_numel() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Fresh leaf with entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, SplitMix64& rng);
Tensor param(Tensor t);  // marks a leaf as trainable

// Checkpoint container: magic "DMF1", then records of
//   u64 name length, name bytes (UTF-8), u64 rank, rank × u64 extents,
//   numel × f64 payload
// all little-endian, until end of file.
void write_checkpoint(std::ostream& os, const ParamSet& params);
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);

std::vector<std::pair<std::string, Tensor>> read_checkpoint(std::istream& is);
/// Copies stored values into the matching entries of `params`; every entry
/// must be present with an identical shape.
void load_checkpoint(const std::filesystem::path& path, ParamSet& params);

}  // namespace dmt
