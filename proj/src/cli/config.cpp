#include "dmt/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dmt::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
  Config cfg;
  cfg.source = source;
  cfg.sections.push_back({"", 0, {}});
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    std::string line(raw);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(where + ": unterminated section header '" + line + "'");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) throw UsageError(where + ": empty section name");
      cfg.sections.push_back({name, lineno, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value, got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw UsageError(where + ": missing key before '='");
    auto& section = cfg.sections.back();
    for (const auto& e : section.entries) {
      if (e.key == key) {
        throw UsageError(where + ": key '" + key + "' repeated (first set on line " + std::to_string(e.line) + ")");
      }
    }
    section.entries.push_back({key, value, lineno});
  }
  if (cfg.sections.front().entries.empty()) cfg.sections.erase(cfg.sections.begin());
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const ConfigSection* Config::find(const std::string& name) const {
  for (auto it = sections.rbegin(); it != sections.rend(); ++it) {
    if (it->name == name) return &*it;
  }
  return nullptr;
}

SectionReader::SectionReader(const ConfigSection& section, std::string source)
    : section_(section), source_(std::move(source)) {}

bool SectionReader::has(const std::string& key) const {
  for (const auto& e : section_.entries) {
    if (e.key == key) return true;
  }
  return false;
}

const ConfigEntry* SectionReader::lookup(const std::string& key) {
  for (const auto& e : section_.entries) {
    if (e.key == key) {
      used_.insert(key);
      return &e;
    }
  }
  return nullptr;
}

void SectionReader::fail(const std::string& key, const std::string& message) const {
  std::size_t line = section_.line;
  for (const auto& e : section_.entries) {
    if (e.key == key) line = e.line;
  }
  const std::string scope = section_.name.empty() ? "" : " in [" + section_.name + "]";
  throw UsageError(source_ + ":" + std::to_string(line) + ": key '" + key + "'" + scope + ": " + message);
}

std::string SectionReader::text(const std::string& key, const std::string& fallback) {
  const auto* e = lookup(key);
  return e ? e->value : fallback;
}

double SectionReader::number(const std::string& key, double fallback) {
  const auto* e = lookup(key);
  if (!e) return fallback;
  double v = 0.0;
  if (!parse_number(e->value, v)) fail(key, "expected a number, got '" + e->value + "'");
  return v;
}

std::size_t SectionReader::count(const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(seed(key, fallback));
}

std::uint64_t SectionReader::seed(const std::string& key, std::uint64_t fallback) {
  const auto* e = lookup(key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
  if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
    fail(key, "expected a non-negative integer, got '" + e->value + "'");
  }
  return v;
}

bool SectionReader::flag(const std::string& key, bool fallback) {
  const auto* e = lookup(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(key, "expected true or false, got '" + e->value + "'");
}

std::vector<double> SectionReader::numbers(const std::string& key, const std::vector<double>& fallback) {
  const auto* e = lookup(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& tok : split_list(e->value)) {
    double v = 0.0;
    if (!parse_number(tok, v)) fail(key, "expected comma-separated numbers, got '" + e->value + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> SectionReader::words(const std::string& key, const std::vector<std::string>& fallback) {
  const auto* e = lookup(key);
  return e ? split_list(e->value) : fallback;
}

void SectionReader::finish() const {
  for (const auto& e : section_.entries) {
    if (!used_.count(e.key)) fail(e.key, "unknown key");
  }
}

}  // namespace dmt::cli
