#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "jepa3d/diff/optim.hpp"
#include "jepa3d/geometry.hpp"
#include "jepa3d/model.hpp"
#include "jepa3d/sampler.hpp"

namespace jepa3d {

struct OptimConfig {
  double lr = 1e-3;
  double min_lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  std::size_t warmup_epochs = 10;
};

struct DataConfig {
  std::string source = "synthetic";  // or "directory"
  std::string path;                  // directory of .xyz/.off/.ply files, one subdirectory per class
  std::size_t per_class = 200;
  double jitter = 0.01;
  // Plain shapes are separable from random-init features alone; these
  // defaults make the classes overlap enough for pretraining to matter.
  double anisotropy = 0.4;
  double occlusion = 0.4;
  double outliers = 0.1;
  std::uint64_t seed = 7;
};

struct EvalConfig {
  std::string pooling = "mean_max";  // or "mean"
  std::size_t probe_epochs = 300;
  double probe_lr = 0.01;
  double probe_weight_decay = 1e-4;
  std::size_t finetune_epochs = 30;
  double finetune_lr = 5e-4;
  std::size_t finetune_batch = 32;
  double dropout = 0.5;
  std::string fewshot_mode = "finetune";  // or "probe"
  std::size_t fewshot_epochs = 20;
  double fewshot_lr = 1e-4;
  std::size_t n_way = 5;
  std::size_t m_shot = 10;
  std::size_t n_query = 20;
  std::size_t runs = 10;
};

struct RunConfig {
  ModelConfig model;
  SamplerConfig sampler;
  OptimConfig optim;
  AugmentPolicy augment{0.8, 1.2, true, false, 0.0, 0.0};
  DataConfig data;
  EvalConfig eval;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t points_per_cloud = 512;
  std::size_t checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  std::string teacher_features;      // external teacher file

  void validate() const {
    model.validate();
    SamplerConfig s = sampler;
    s.a_targets = model.a_targets;
    s.validate();
    augment.validate();
    if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be >= 1");
    if (points_per_cloud < model.m_tokens || points_per_cloud < model.k_neighbors)
      throw ConfigError("points_per_cloud must be >= model.m_tokens and >= model.k_neighbors");
    if (!(optim.lr >= 0) || !(optim.min_lr >= 0) || !(optim.weight_decay >= 0))
      throw ConfigError("optim: lr, min_lr and weight_decay must be non-negative");
    if (!(0 <= optim.beta1 && optim.beta1 < 1) || !(0 <= optim.beta2 && optim.beta2 < 1) || !(optim.eps > 0))
      throw ConfigError("optim: betas must lie in [0, 1) and eps must be positive");
    if (data.source != "synthetic" && data.source != "directory")
      throw ConfigError("data.source must be 'synthetic' or 'directory'");
    if (data.source == "directory" && data.path.empty()) throw ConfigError("data.path is required for directory data");
    if (data.source == "synthetic" && data.per_class == 0) throw ConfigError("data.per_class must be >= 1");
    if (!(data.jitter >= 0) || !(0 <= data.anisotropy && data.anisotropy < 1) ||
        !(0 <= data.occlusion && data.occlusion < 1) || !(0 <= data.outliers && data.outliers < 1))
      throw ConfigError("data: jitter must be >= 0; anisotropy, occlusion and outliers must lie in [0, 1)");
    if (model.teacher_kind == TeacherKind::external_file && teacher_features.empty())
      throw ConfigError("teacher_features is required for the external_file teacher");
    if (eval.pooling != "mean_max" && eval.pooling != "mean") throw ConfigError("eval.pooling must be mean_max or mean");
    if (eval.fewshot_mode != "finetune" && eval.fewshot_mode != "probe")
      throw ConfigError("eval.fewshot_mode must be finetune or probe");
    if (!(0 <= eval.dropout && eval.dropout < 1)) throw ConfigError("eval.dropout must lie in [0, 1)");
  }

  SamplerConfig sampler_config() const {
    SamplerConfig s = sampler;
    s.a_targets = model.a_targets;
    return s;
  }

  AdamWConfig adamw() const { return {optim.lr, optim.beta1, optim.beta2, optim.eps, optim.weight_decay}; }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define JEPA3D_UINT(KEY, MEMBER)                                                                      \
  Field {                                                                                             \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = static_cast<decltype(c.MEMBER)>(to_uint(KEY, v)); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                                  \
  }
#define JEPA3D_REAL(KEY, MEMBER)                                                      \
  Field {                                                                             \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },    \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }                       \
  }
#define JEPA3D_BOOL(KEY, MEMBER)                                                        \
  Field {                                                                               \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },        \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }     \
  }
#define JEPA3D_TEXT(KEY, MEMBER)                                                     \
  Field {                                                                            \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                   \
        [](const RunConfig& c) { return "\"" + c.MEMBER + "\""; }                    \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      JEPA3D_UINT("epochs", epochs),
      JEPA3D_UINT("batch_size", batch_size),
      JEPA3D_UINT("seed", seed),
      JEPA3D_UINT("points_per_cloud", points_per_cloud),
      JEPA3D_UINT("checkpoint_every", checkpoint_every),
      JEPA3D_TEXT("teacher_features", teacher_features),
      JEPA3D_UINT("model.dim", model.dim),
      JEPA3D_UINT("model.teacher_dim", model.teacher_dim),
      JEPA3D_UINT("model.proj_dim", model.proj_dim),
      JEPA3D_UINT("model.encoder_layers", model.encoder_layers),
      JEPA3D_UINT("model.decoder_layers", model.decoder_layers),
      JEPA3D_UINT("model.heads", model.heads),
      JEPA3D_REAL("model.mlp_ratio", model.mlp_ratio),
      JEPA3D_UINT("model.m_tokens", model.m_tokens),
      JEPA3D_UINT("model.k_neighbors", model.k_neighbors),
      JEPA3D_UINT("model.a_targets", model.a_targets),
      JEPA3D_BOOL("model.context_aware", model.context_aware),
      Field{"model.teacher_kind",
            [](RunConfig& c, const std::string& v) { c.model.teacher_kind = parse_teacher_kind(v); },
            [](const RunConfig& c) { return to_string(c.model.teacher_kind); }},
      JEPA3D_REAL("model.ema_start", model.ema_start),
      JEPA3D_REAL("model.ema_end", model.ema_end),
      JEPA3D_BOOL("model.shared_projection", model.shared_projection),
      JEPA3D_UINT("model.embed_width1", model.widths.first),
      JEPA3D_UINT("model.embed_width2", model.widths.second),
      JEPA3D_UINT("model.embed_width3", model.widths.third),
      JEPA3D_UINT("model.pos_hidden", model.pos_hidden),
      Field{"sampler.strategy",
            [](RunConfig& c, const std::string& v) { c.sampler.strategy = parse_sampling_strategy(v); },
            [](const RunConfig& c) { return to_string(c.sampler.strategy); }},
      JEPA3D_REAL("sampler.target_scale_min", sampler.target_scale_min),
      JEPA3D_REAL("sampler.target_scale_max", sampler.target_scale_max),
      JEPA3D_REAL("sampler.context_scale_min", sampler.context_scale_min),
      JEPA3D_REAL("sampler.context_scale_max", sampler.context_scale_max),
      JEPA3D_REAL("sampler.mask_ratio", sampler.mask_ratio),
      Field{"sampler.max_attempts",
            [](RunConfig& c, const std::string& v) {
              c.sampler.max_attempts = static_cast<int>(to_uint("sampler.max_attempts", v));
            },
            [](const RunConfig& c) { return std::to_string(c.sampler.max_attempts); }},
      JEPA3D_REAL("optim.lr", optim.lr),
      JEPA3D_REAL("optim.min_lr", optim.min_lr),
      JEPA3D_REAL("optim.beta1", optim.beta1),
      JEPA3D_REAL("optim.beta2", optim.beta2),
      JEPA3D_REAL("optim.eps", optim.eps),
      JEPA3D_REAL("optim.weight_decay", optim.weight_decay),
      JEPA3D_UINT("optim.warmup_epochs", optim.warmup_epochs),
      JEPA3D_REAL("augment.scale_min", augment.scale_min),
      JEPA3D_REAL("augment.scale_max", augment.scale_max),
      JEPA3D_BOOL("augment.rotate", augment.rotate),
      JEPA3D_BOOL("augment.full_rotation", augment.full_rotation),
      JEPA3D_REAL("augment.translate_min", augment.translate_min),
      JEPA3D_REAL("augment.translate_max", augment.translate_max),
      JEPA3D_TEXT("data.source", data.source),
      JEPA3D_TEXT("data.path", data.path),
      JEPA3D_UINT("data.per_class", data.per_class),
      JEPA3D_REAL("data.jitter", data.jitter),
      JEPA3D_REAL("data.anisotropy", data.anisotropy),
      JEPA3D_REAL("data.occlusion", data.occlusion),
      JEPA3D_REAL("data.outliers", data.outliers),
      JEPA3D_UINT("data.seed", data.seed),
      JEPA3D_TEXT("eval.pooling", eval.pooling),
      JEPA3D_UINT("eval.probe_epochs", eval.probe_epochs),
      JEPA3D_REAL("eval.probe_lr", eval.probe_lr),
      JEPA3D_REAL("eval.probe_weight_decay", eval.probe_weight_decay),
      JEPA3D_UINT("eval.finetune_epochs", eval.finetune_epochs),
      JEPA3D_REAL("eval.finetune_lr", eval.finetune_lr),
      JEPA3D_UINT("eval.finetune_batch", eval.finetune_batch),
      JEPA3D_REAL("eval.dropout", eval.dropout),
      JEPA3D_TEXT("eval.fewshot_mode", eval.fewshot_mode),
      JEPA3D_UINT("eval.fewshot_epochs", eval.fewshot_epochs),
      JEPA3D_REAL("eval.fewshot_lr", eval.fewshot_lr),
      JEPA3D_UINT("eval.n_way", eval.n_way),
      JEPA3D_UINT("eval.m_shot", eval.m_shot),
      JEPA3D_UINT("eval.n_query", eval.n_query),
      JEPA3D_UINT("eval.runs", eval.runs),
  };
  return table;
}

#undef JEPA3D_UINT
#undef JEPA3D_REAL
#undef JEPA3D_BOOL
#undef JEPA3D_TEXT

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Strips quotes from "..." values; bare values are taken as written.
inline std::string unquote(const std::string& key, const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (!v.empty() && v.front() == '"') throw ConfigError(key + ": unterminated string");
  return v;
}

}  // namespace config_detail

// Up to `count` valid keys closest to `key` by edit distance.
inline std::vector<std::string> nearest_keys(const std::string& key, std::size_t count = 3) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& f : config_detail::fields()) scored.push_back({config_detail::edit_distance(key, f.key), f.key});
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(count, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

class UnknownKeyError : public ConfigError {
 public:
  UnknownKeyError(const std::string& key, std::vector<std::string> suggestions)
      : ConfigError(message(key, suggestions)), key_(key), suggestions_(std::move(suggestions)) {}
  const std::string& key() const { return key_; }
  const std::vector<std::string>& suggestions() const { return suggestions_; }

 private:
  static std::string message(const std::string& key, const std::vector<std::string>& s) {
    std::string m = "unknown config key '" + key + "'; nearest valid keys:";
    for (const auto& k : s) m += " " + k;
    return m;
  }
  std::string key_;
  std::vector<std::string> suggestions_;
};

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) {
      f.set(cfg, config_detail::unquote(key, config_detail::trim(raw)));
      return;
    }
  throw UnknownKeyError(key, nearest_keys(key));
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) return f.get(cfg);
  throw UnknownKeyError(key, nearest_keys(key));
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : config_detail::fields()) out.push_back(f.key);
  return out;
}

// Applies `key = value` lines onto `cfg`. `#` starts a comment outside quotes.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "<config>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const UnknownKeyError&) {
      throw;
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

// `key=value` override, as given to --set.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, config_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

// Every key with its resolved value; parses back to the same config.
inline std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

// The desk-scale smoke configuration.
inline RunConfig smoke_config() { return RunConfig{}; }

}  // namespace jepa3d
