#include "dmt/numcore/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "dmt/numcore/errors.hpp"

namespace dmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'M', 'F', '1'};

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

bool get_u64(std::istream& is, std::uint64_t& v) {
  is.read(reinterpret_cast<char*>(&v), 8);
  return is.gcount() == 8;
}

}  // namespace

void ParamSet::add(std::string name, Tensor tensor) {
  for (const auto& [n, _] : entries_) {
    if (n == name) throw ValueError("ParamSet: duplicate parameter name " + name);
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

void ParamSet::extend(const ParamSet& other) {
  for (const auto& [n, t] : other.entries_) add(n, t);
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValueError("ParamSet: no parameter named " + name);
}

std::size_t ParamSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return param(Tensor::from(std::move(shape), std::move(v)));
}

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

void write_checkpoint(std::ostream& os, const ParamSet& params) {
  os.write(kMagic, 4);
  for (const auto& [name, t] : params.entries()) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, t.rank());
    for (auto e : t.shape()) put_u64(os, e);
    auto d = t.data();
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * 8));
  }
  if (!os) throw IoError("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(os, params);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: missing DMF1 magic");
  }
  std::vector<std::pair<std::string, Tensor>> out;
  std::uint64_t name_len = 0;
  while (get_u64(is, name_len)) {
    const auto offset = static_cast<long long>(is.tellg()) - 8;
    if (name_len > (1u << 20)) throw IoError("checkpoint: implausible name length at offset " + std::to_string(offset));
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    std::uint64_t rank = 0;
    if (static_cast<std::uint64_t>(is.gcount()) != name_len || !get_u64(is, rank) || rank == 0 || rank > 16) {
      throw IoError("checkpoint: truncated header for record at offset " + std::to_string(offset));
    }
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint64_t v = 0;
      if (!get_u64(is, v) || v == 0) throw IoError("checkpoint: bad extents for " + name);
      e = v;
    }
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
    if (static_cast<std::size_t>(is.gcount()) != data.size() * 8) {
      throw IoError("checkpoint: truncated payload for " + name);
    }
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamSet& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  auto records = read_checkpoint(is);
  std::map<std::string, Tensor> by_name;
  for (auto& [n, t] : records) by_name.emplace(n, t);
  for (const auto& [name, t] : params.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint: " + path.string() + " lacks " + name);
    if (it->second.shape() != t.shape()) {
      throw IoError("checkpoint: shape of " + name + " is " + shape_str(it->second.shape()) +
                    ", expected " + shape_str(t.shape()));
    }
    Tensor dst = t;
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace dmt
