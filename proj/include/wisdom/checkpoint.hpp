#pragma once

// Checkpoint format: a directory holding manifest.json (metadata plus, per
// named array, its shape and file) and one flat <name>.bin file per array of
// little-endian IEEE-754 64-bit floats.

#include <bit>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wisdom/errors.hpp"
#include "wisdom/nn.hpp"

namespace wisdom {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, NamedArray> arrays;

  void add(std::string name, Shape shape, std::vector<double> data) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != data.size()) throw DimensionError("checkpoint array '" + name + "': shape/data size mismatch");
    if (arrays.count(name)) throw ContractError("checkpoint array '" + name + "' added twice");
    NamedArray a{name, std::move(shape), std::move(data)};
    arrays.emplace(a.name, std::move(a));
  }
  void add(const std::string& name, const std::vector<double>& data) { add(name, {data.size()}, data); }

  const NamedArray& at(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw ContractError("checkpoint has no array '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return arrays.count(name) > 0; }

  void add_params(const std::string& prefix, const ParamList& params) {
    for (const auto& [name, t] : params) add(prefix + name, t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  }

  /// Copies stored values into `params` (shapes must match exactly).
  void load_params(const std::string& prefix, const ParamList& params) const {
    for (const auto& [name, t] : params) {
      const auto& a = at(prefix + name);
      if (a.shape != t.shape())
        throw DimensionError("checkpoint array '" + prefix + name + "' has shape " + shape_str(a.shape) + ", expected " +
                             shape_str(t.shape()));
      Tensor handle = t;
      auto d = handle.mutable_data();
      std::copy(a.data.begin(), a.data.end(), d.begin());
    }
  }
};

namespace detail {

/// File name for an array: the name with path-hostile characters replaced.
inline std::string array_file_name(const std::string& name) {
  std::string f;
  for (char c : name) f += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-') ? c : '_';
  return f + ".bin";
}

inline void write_f64_le(std::ostream& out, const std::vector<double>& v) {
  std::vector<unsigned char> buf(v.size() * 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
  std::vector<unsigned char> buf(count * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw ContractError("checkpoint array file is truncated");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["encoding"] = "float64-little-endian";
  manifest["meta"] = ck.meta;
  manifest["arrays"] = nlohmann::json::array();
  std::map<std::string, std::string> used;
  for (const auto& [name, a] : ck.arrays) {
    const std::string file = detail::array_file_name(name);
    if (used.count(file)) throw ContractError("checkpoint arrays '" + name + "' and '" + used[file] + "' map to one file");
    used[file] = name;
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write " + (dir / file).string());
    detail::write_f64_le(out, a.data);
    manifest["arrays"].push_back({{"name", name}, {"shape", a.shape}, {"file", file}});
  }
  std::ofstream m(dir / "manifest.json", std::ios::trunc);
  if (!m) throw ContractError("cannot write " + (dir / "manifest.json").string());
  m << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw ContractError("no checkpoint manifest at " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("format_version", -1) != kCheckpointFormatVersion)
    throw ContractError("unsupported checkpoint format version");
  Checkpoint ck;
  ck.meta = manifest.at("meta");
  for (const auto& a : manifest.at("arrays")) {
    const auto shape = a.at("shape").get<Shape>();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::ifstream in(dir / a.at("file").get<std::string>(), std::ios::binary);
    if (!in) throw ContractError("missing checkpoint array file " + a.at("file").get<std::string>());
    ck.add(a.at("name").get<std::string>(), shape, detail::read_f64_le(in, n));
  }
  return ck;
}

}  // namespace wisdom
