#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "jepa3d/eval.hpp"
#include "jepa3d/pretrain.hpp"

namespace jepa3d {

enum class AblationAxis { sampling_strategy, a_targets, decoder_depth, context_aware };

inline AblationAxis parse_ablation_axis(const std::string& s) {
  if (s == "sampling_strategy") return AblationAxis::sampling_strategy;
  if (s == "a_targets") return AblationAxis::a_targets;
  if (s == "decoder_depth") return AblationAxis::decoder_depth;
  if (s == "context_aware") return AblationAxis::context_aware;
  throw ConfigError("unknown ablation axis '" + s + "' (sampling_strategy, a_targets, decoder_depth, context_aware)");
}

inline std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::sampling_strategy:
      return "sampling_strategy";
    case AblationAxis::a_targets:
      return "a_targets";
    case AblationAxis::decoder_depth:
      return "decoder_depth";
    case AblationAxis::context_aware:
      return "context_aware";
  }
  return "?";
}

inline std::string axis_key(AblationAxis a) {
  switch (a) {
    case AblationAxis::sampling_strategy:
      return "sampler.strategy";
    case AblationAxis::a_targets:
      return "model.a_targets";
    case AblationAxis::decoder_depth:
      return "model.decoder_layers";
    case AblationAxis::context_aware:
      return "model.context_aware";
  }
  return "";
}

// Config for one cell; validates so a bad value fails before any training.
inline RunConfig ablation_config(const RunConfig& base, AblationAxis axis, const std::string& value) {
  RunConfig cfg = base;
  set_config_value(cfg, axis_key(axis), value);
  cfg.validate();
  return cfg;
}

struct AblationCell {
  std::string value;
  std::uint64_t seed = 0;
  double probe_accuracy = 0.0;
  double first_epoch_loss = 0.0;
  double final_epoch_loss = 0.0;
  std::string run_dir;
};

struct AblationRow {
  std::string value;
  std::vector<AblationCell> cells;

  double mean_accuracy() const {
    double s = 0;
    for (const auto& c : cells) s += c.probe_accuracy;
    return cells.empty() ? std::nan("") : s / static_cast<double>(cells.size());
  }
};

struct AblationTable {
  AblationAxis axis = AblationAxis::sampling_strategy;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  bool complete = false;
  std::string failure;  // first error when the sweep stopped early

  const AblationRow* find(const std::string& value) const {
    for (const auto& r : rows)
      if (r.value == value) return &r;
    return nullptr;
  }
};

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// Expected direction for the sampling axis: multi-block targets should probe
// at least as well as random masking. Empty when either row is missing.
inline std::string ordering_check(const AblationTable& t) {
  if (t.axis != AblationAxis::sampling_strategy) return "";
  const auto* mb = t.find("multi_block");
  const auto* rm = t.find("random_mask");
  if (!mb || !rm || mb->cells.empty() || rm->cells.empty()) return "";
  const bool ok = mb->mean_accuracy() >= rm->mean_accuracy();
  return std::string("Ordering check (multi_block >= random_mask): ") + (ok ? "holds" : "FLAGGED, does not hold") + " (" +
         percent(mb->mean_accuracy()) + " vs " + percent(rm->mean_accuracy()) + ")";
}

// Markdown: one row per axis value, linear-probe accuracy per seed and mean.
inline std::string ablation_markdown(const AblationTable& t) {
  std::string header = "| " + to_string(t.axis) + " |", rule = "|---|";
  for (auto s : t.seeds) {
    header += " seed " + std::to_string(s) + " |";
    rule += "---:|";
  }
  header += " mean acc. (%) |";
  rule += "---:|";
  std::string out = "# Ablation: " + to_string(t.axis) + "\n\n" + header + "\n" + rule + "\n";
  for (const auto& r : t.rows) {
    out += "| " + r.value + " |";
    for (std::size_t i = 0; i < t.seeds.size(); ++i) out += " " + (i < r.cells.size() ? percent(r.cells[i].probe_accuracy) : "-") + " |";
    out += " " + (r.cells.empty() ? std::string("-") : percent(r.mean_accuracy())) + " |\n";
  }
  if (const auto check = ordering_check(t); !check.empty()) out += "\n" + check + "\n";
  if (!t.complete) out += "\nIncomplete sweep: " + t.failure + "\n";
  return out;
}

inline std::string ablation_tsv(const AblationTable& t) {
  std::string out = "axis\tvalue\tseed\tprobe_accuracy\tfirst_epoch_loss\tfinal_epoch_loss\trun_dir\n";
  char buf[160];
  for (const auto& r : t.rows)
    for (const auto& c : r.cells) {
      std::snprintf(buf, sizeof buf, "\t%llu\t%.6f\t%.9g\t%.9g\t", static_cast<unsigned long long>(c.seed), c.probe_accuracy,
                    c.first_epoch_loss, c.final_epoch_loss);
      out += to_string(t.axis) + "\t" + r.value + buf + c.run_dir + "\n";
    }
  return out;
}

inline void write_ablation_table(const AblationTable& t, const std::string& dir) {
  write_file_bytes((std::filesystem::path(dir) / "table.md").string(), ablation_markdown(t));
  write_file_bytes((std::filesystem::path(dir) / "table.tsv").string(), ablation_tsv(t));
}

// Pretrain then linear-probe one cell, logging metrics into `run_dir`.
template <class T>
AblationCell run_ablation_cell(const RunConfig& cfg, const Dataset& ds, const std::string& value,
                               const std::string& run_dir) {
  std::filesystem::create_directories(run_dir);
  write_file_bytes((std::filesystem::path(run_dir) / "config.cfg").string(), config_to_text(cfg));
  Trainer<T> tr(cfg, ds.train);
  tr.set_dump_dir(run_dir);
  std::ofstream metrics(std::filesystem::path(run_dir) / "metrics.tsv");
  MetricsLog log(metrics, blocks_per_plan(cfg));
  std::vector<LossReport> reps;
  while (!tr.done()) {
    reps.push_back(tr.step());
    log.write(reps.back(), cfg.seed);
  }
  const auto means = epoch_means(reps);
  const auto probe = linear_probe(tr.model(), ds, cfg.eval);
  write_file_bytes((std::filesystem::path(run_dir) / "predictions.tsv").string(), predictions_tsv(probe.predictions));
  AblationCell cell;
  cell.value = value;
  cell.seed = cfg.seed;
  cell.probe_accuracy = probe.accuracy;
  cell.first_epoch_loss = means.front();
  cell.final_epoch_loss = means.back();
  cell.run_dir = run_dir;
  return cell;
}

using AblationProgress = std::function<void(const AblationCell&)>;

// Every (value, seed) cell pretrains on the same dataset instance with the
// seed as the only other difference. The table is rewritten after each cell,
// so a failure leaves the finished cells on disk before the error propagates.
template <class T>
AblationTable run_ablation(const RunConfig& base, const Dataset& ds, AblationAxis axis,
                           const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir, const AblationProgress& progress = {}) {
  if (values.empty() || seeds.empty()) throw ConfigError("ablate: need at least one value and one seed");
  for (const auto& v : values) ablation_config(base, axis, v);
  AblationTable table;
  table.axis = axis;
  table.seeds = seeds;
  std::filesystem::create_directories(out_dir);
  for (const auto& v : values) table.rows.push_back({v, {}});
  for (std::size_t r = 0; r < values.size(); ++r)
    for (auto seed : seeds) {
      RunConfig cfg = ablation_config(base, axis, values[r]);
      cfg.seed = seed;
      const std::string dir =
          (std::filesystem::path(out_dir) / (to_string(axis) + "=" + values[r] + "_seed" + std::to_string(seed))).string();
      try {
        table.rows[r].cells.push_back(run_ablation_cell<T>(cfg, ds, values[r], dir));
        write_ablation_table(table, out_dir);
        if (progress) progress(table.rows[r].cells.back());
      } catch (const std::exception& e) {
        table.failure = values[r] + " seed " + std::to_string(seed) + ": " + e.what();
        write_ablation_table(table, out_dir);
        throw;
      }
    }
  table.complete = true;
  write_ablation_table(table, out_dir);
  return table;
}

}  // namespace jepa3d
