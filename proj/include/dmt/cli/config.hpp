#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dmt/numcore/errors.hpp"

namespace dmt::cli {

/// Malformed config or command line. Commands map it to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct ConfigSection {
  std::string name;  // "" for keys before the first header
  std::size_t line = 0;
  std::vector<ConfigEntry> entries;
};

/// Plain-text config: "[section]" headers, "key = value" lines, '#' comments.
/// Sections keep file order and may repeat.
struct Config {
  std::string source;
  std::vector<ConfigSection> sections;

  static Config parse(std::string_view text, const std::string& source);
  static Config load(const std::filesystem::path& path);

  /// Last section with this name, or nullptr.
  const ConfigSection* find(const std::string& name) const;
};

/// Typed access to one section. Every error names the source, line and key.
/// finish() rejects keys that were never read.
class SectionReader {
 public:
  SectionReader(const ConfigSection& section, std::string source);

  bool has(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback);
  double number(const std::string& key, double fallback);
  std::size_t count(const std::string& key, std::size_t fallback);
  std::uint64_t seed(const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::string> words(const std::string& key, const std::vector<std::string>& fallback);

  void finish() const;
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  const ConfigEntry* lookup(const std::string& key);

  const ConfigSection& section_;
  std::string source_;
  std::set<std::string> used_;
};

}  // namespace dmt::cli
