#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jepa3d/binio.hpp"
#include "jepa3d/cloud_io.hpp"
#include "jepa3d/config.hpp"
#include "jepa3d/diff/optim.hpp"
#include "jepa3d/model.hpp"

namespace jepa3d {

// Layout (little-endian):
//   "J3DCKPT\0" | u32 version | u32 entry count
//   entries: str name | u8 dtype | u32 rank | u64 dims[rank] | u64 offset | u64 nbytes
//   data blob (offsets are relative to its start)
//   u64 FNV-1a of everything above
// Entry prefixes: param/, adam_m/, adam_v/, teacher/, meta/.
inline constexpr char kCheckpointMagic[8] = {'J', '3', 'D', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u64 = 2, text = 3 };

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else return DType::f64;
}

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::string data;  // raw little-endian bytes
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  const CheckpointEntry& at(const std::string& name) const {
    if (auto* e = find(name)) return *e;
    throw DataError("checkpoint: missing entry '" + name + "'");
  }

  std::uint64_t meta_u64(const std::string& key) const {
    const auto& e = at("meta/" + key);
    if (e.dtype != DType::u64 || e.data.size() != 8) throw DataError("checkpoint: meta/" + key + " is not a u64");
    std::uint64_t v;
    std::memcpy(&v, e.data.data(), 8);
    return v;
  }
  std::string meta_text(const std::string& key) const {
    const auto& e = at("meta/" + key);
    if (e.dtype != DType::text) throw DataError("checkpoint: meta/" + key + " is not text");
    return e.data;
  }
  void set_u64(const std::string& key, std::uint64_t v) {
    entries.push_back({"meta/" + key, DType::u64, {}, std::string(reinterpret_cast<const char*>(&v), 8)});
  }
  void set_text(const std::string& key, std::string v) { entries.push_back({"meta/" + key, DType::text, {}, std::move(v)}); }

  template <class T>
  void add_tensor(const std::string& name, const Tensor<T>& t) {
    entries.push_back({name, dtype_of<T>(), t.shape(),
                       std::string(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T))});
  }

  template <class T>
  Tensor<T> tensor(const std::string& name) const {
    const auto& e = at(name);
    if (e.dtype != dtype_of<T>())
      throw DataError("checkpoint: entry '" + name + "' has a different floating-point type");
    Tensor<T> t(e.shape);
    if (e.data.size() != t.size() * sizeof(T)) throw DataError("checkpoint: entry '" + name + "' has the wrong size");
    std::memcpy(t.data(), e.data.data(), e.data.size());
    return t;
  }
};

inline std::string checkpoint_bytes(const Checkpoint& ck) {
  ByteWriter w;
  w.put_bytes({kCheckpointMagic, 8});
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : ck.entries) {
    w.put_string(e.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(e.data.size());
    offset += e.data.size();
  }
  for (const auto& e : ck.entries) w.put_bytes(e.data);
  w.put<std::uint64_t>(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

inline Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source = "<checkpoint>") {
  ByteReader head(bytes, source);
  if (head.get_bytes(8, "magic") != std::string_view(kCheckpointMagic, 8)) head.fail("not a checkpoint (bad magic)");
  const auto version = head.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw DataError(source + ": checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
                    std::to_string(kCheckpointVersion) + ")");
  const auto body = verify_checksum(bytes, source);
  ByteReader r(body, source);
  r.seek(12);
  const auto count = r.get<std::uint32_t>("entry count");
  struct Dir {
    CheckpointEntry e;
    std::uint64_t offset, nbytes;
  };
  std::vector<Dir> dir;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir d;
    d.e.name = r.get_string("entry name");
    const auto dt = r.get<std::uint8_t>("dtype");
    if (dt > static_cast<std::uint8_t>(DType::text)) r.fail("unknown dtype " + std::to_string(dt));
    d.e.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint32_t>("rank");
    for (std::uint32_t k = 0; k < rank; ++k) d.e.shape.push_back(r.get<std::uint64_t>("dimension"));
    d.offset = r.get<std::uint64_t>("offset");
    d.nbytes = r.get<std::uint64_t>("size");
    dir.push_back(std::move(d));
  }
  const std::size_t blob = r.pos();
  Checkpoint ck;
  for (auto& d : dir) {
    if (blob + d.offset + d.nbytes > body.size()) r.fail("entry '" + d.e.name + "' extends past the data blob");
    d.e.data = std::string(body.substr(blob + d.offset, d.nbytes));
    ck.entries.push_back(std::move(d.e));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file_bytes(path, checkpoint_bytes(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file_bytes(path), path); }

// Model, optimizer and progress counters. All training randomness derives
// from (seed, global step), so no generator state needs storing.
template <class T>
Checkpoint capture_checkpoint(const JepaModel<T>& model, const AdamW<T>* opt, const RunConfig& cfg,
                              std::uint64_t global_step) {
  Checkpoint ck;
  const auto params = model.parameters();
  for (const auto& p : params) ck.add_tensor("param/" + p.name, p.var.value());
  if (opt)
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.add_tensor("adam_m/" + params[i].name, opt->first_moment(i));
      ck.add_tensor("adam_v/" + params[i].name, opt->second_moment(i));
    }
  for (const auto& p : model.teacher_parameters()) ck.add_tensor("teacher/" + p.name, p.var.value());
  ck.set_u64("optimizer_step", opt ? opt->step_count() : 0);
  ck.set_u64("global_step", global_step);
  ck.set_u64("seed", cfg.seed);
  ck.set_u64("parameter_count", parameter_count(params));
  ck.set_text("config", config_to_text(cfg));
  return ck;
}

// Weights only, no optimizer state.
template <class T>
Checkpoint capture_checkpoint(const JepaModel<T>& model, const RunConfig& cfg, std::uint64_t global_step) {
  return capture_checkpoint<T>(model, nullptr, cfg, global_step);
}

inline RunConfig checkpoint_config(const Checkpoint& ck) {
  RunConfig cfg;
  apply_config_text(cfg, ck.meta_text("config"), "checkpoint config");
  return cfg;
}

// Throws listing every model field that differs.
inline void require_same_model(const ModelConfig& stored, const ModelConfig& current) {
  const auto a = stored.fields(), b = current.fields();
  std::string diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].second != b[i].second)
      diff += (diff.empty() ? "" : "; ") + a[i].first + ": checkpoint " + a[i].second + ", current " + b[i].second;
  if (!diff.empty()) throw ConfigError("checkpoint model config differs: " + diff);
}

template <class T>
void restore_checkpoint(const Checkpoint& ck, JepaModel<T>& model, AdamW<T>* opt) {
  require_same_model(checkpoint_config(ck).model, model.config());
  auto params = model.parameters();
  for (auto& p : params) {
    auto t = ck.tensor<T>("param/" + p.name);
    if (t.shape() != p.var.shape()) throw DataError("checkpoint: shape mismatch for '" + p.name + "'");
    p.var.mutable_value() = std::move(t);
  }
  for (auto& p : model.teacher_parameters()) p.var.mutable_value() = ck.tensor<T>("teacher/" + p.name);
  if (opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      opt->first_moment(i) = ck.tensor<T>("adam_m/" + params[i].name);
      opt->second_moment(i) = ck.tensor<T>("adam_v/" + params[i].name);
    }
    opt->set_step_count(ck.meta_u64("optimizer_step"));
  }
}

// Fresh model carrying the checkpoint's weights.
template <class T>
JepaModel<T> model_from_checkpoint(const Checkpoint& ck) {
  const RunConfig cfg = checkpoint_config(ck);
  JepaModel<T> model(cfg.model, cfg.seed);
  restore_checkpoint<T>(ck, model, nullptr);
  return model;
}

}  // namespace jepa3d
