#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jepa3d/binio.hpp"
#include "jepa3d/cloud_io.hpp"
#include "jepa3d/diff/tensor.hpp"

namespace jepa3d {

// Precomputed per-token teacher features, one [M, C_t] float32 record per
// cloud id. Layout (little-endian):
//   "J3DFEAT\0" | u32 version | u32 M | u32 C_t | u64 count
//   records: str id | f32[M * C_t]
//   u64 FNV-1a of everything above
// Rows follow the FPS order of the cloud patchified from its extremal start.
inline constexpr char kFeatureMagic[8] = {'J', '3', 'D', 'F', 'E', 'A', 'T', '\0'};
inline constexpr std::uint32_t kFeatureVersion = 1;

class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& id) const { return records_.count(id) > 0; }

  void put(const std::string& id, std::vector<float> values) {
    if (values.size() != rows_ * cols_)
      throw ShapeError("features: record '" + id + "' has " + std::to_string(values.size()) + " values, expected " +
                       std::to_string(rows_ * cols_));
    records_[id] = std::move(values);
  }

  template <class T>
  Tensor<T> get(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw DataError("teacher features: no record for cloud id '" + id + "'");
    Tensor<T> t({rows_, cols_});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(it->second[i]);
    return t;
  }

  std::string bytes() const {
    ByteWriter w;
    w.put_bytes({kFeatureMagic, 8});
    w.put<std::uint32_t>(kFeatureVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rows_));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cols_));
    w.put<std::uint64_t>(records_.size());
    for (const auto& [id, v] : records_) {
      w.put_string(id);
      w.put_bytes({reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float)});
    }
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    return std::move(w.bytes());
  }

  static FeatureStore parse(std::string_view bytes, const std::string& source = "<features>") {
    ByteReader head(bytes, source);
    if (head.get_bytes(8, "magic") != std::string_view(kFeatureMagic, 8)) head.fail("not a feature file (bad magic)");
    const auto version = head.get<std::uint32_t>("version");
    if (version != kFeatureVersion)
      throw DataError(source + ": feature file version " + std::to_string(version) + " is not supported (this build reads version " +
                      std::to_string(kFeatureVersion) + ")");
    ByteReader r(verify_checksum(bytes, source), source);
    r.seek(12);
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    const auto count = r.get<std::uint64_t>("record count");
    FeatureStore out(rows, cols);
    for (std::uint64_t i = 0; i < count; ++i) {
      auto id = r.get_string("cloud id");
      auto raw = r.get_bytes(std::size_t{rows} * cols * sizeof(float), "feature values");
      std::vector<float> v(std::size_t{rows} * cols);
      std::memcpy(v.data(), raw.data(), raw.size());
      out.records_[id] = std::move(v);
    }
    if (r.pos() != r.size()) r.fail("trailing bytes after the last record");
    return out;
  }

  void save(const std::string& path) const { write_file_bytes(path, bytes()); }
  static FeatureStore load(const std::string& path) { return parse(read_file_bytes(path), path); }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::map<std::string, std::vector<float>> records_;
};

}  // namespace jepa3d
