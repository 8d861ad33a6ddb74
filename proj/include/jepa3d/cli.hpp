#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jepa3d/ablation.hpp"
#include "jepa3d/checkpoint.hpp"
#include "jepa3d/data.hpp"
#include "jepa3d/eval.hpp"
#include "jepa3d/features.hpp"
#include "jepa3d/plot.hpp"
#include "jepa3d/pretrain.hpp"

namespace jepa3d::cli {

namespace fs = std::filesystem;

// Options shared by every subcommand that builds a RunConfig.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_base = "runs";
  std::string run_dir;  // exact directory; overrides the timestamped default
};

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// `<base>/<command>_<timestamp>`, with a numeric suffix if that exists.
inline std::string make_run_dir(const CommonOptions& o, const std::string& command) {
  fs::path dir;
  if (!o.run_dir.empty()) {
    dir = o.run_dir;
  } else {
    const fs::path stem = fs::path(o.out_base) / (command + "_" + timestamp());
    dir = stem;
    for (int i = 1; fs::exists(dir); ++i) dir = stem.string() + "_" + std::to_string(i);
  }
  fs::create_directories(dir);
  return dir.string();
}

inline std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// File config (or `base`), then each --set in order.
inline RunConfig resolve_config(const CommonOptions& o, RunConfig base = {}) {
  RunConfig cfg = o.config_path.empty() ? std::move(base) : load_config_file(o.config_path);
  for (const auto& s : o.overrides) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

inline void write_config(const std::string& dir, const RunConfig& cfg) { write_file_bytes(join(dir, "config.cfg"), config_to_text(cfg)); }

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(config_detail::trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!config_detail::trim(cur).empty() || !out.empty()) out.push_back(config_detail::trim(cur));
  for (const auto& v : out)
    if (v.empty()) throw ConfigError("empty entry in list '" + s + "'");
  return out;
}

inline std::string fmt(double v, const char* f = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// key/value summary of an evaluation.
inline std::string results_tsv(const ProbeResult& r, const std::vector<std::string>& class_names) {
  std::string out = "key\tvalue\nprotocol\t" + to_string(r.protocol) + "\naccuracy\t" + fmt(r.accuracy) + "\nn_test\t" +
                    std::to_string(r.n_test) + "\ncorrect\t" + std::to_string(r.correct) + "\n";
  for (std::size_t c = 0; c < r.per_class.size() && c < class_names.size(); ++c)
    out += "class_" + class_names[c] + "\t" + (std::isnan(r.per_class[c]) ? std::string("nan") : fmt(r.per_class[c])) + "\n";
  if (!r.episodes.empty())
    out += "runs\t" + std::to_string(r.episodes.size()) + "\nmean\t" + fmt(r.mean) + "\nstd\t" + fmt(r.stddev) + "\n";
  return out;
}

// Evaluation model: a checkpoint's weights, or a fresh init for the random baseline.
struct EvalSource {
  std::string ckpt;
  bool random_init = false;
};

inline RunConfig eval_config(const CommonOptions& o, const EvalSource& src, std::optional<Checkpoint>& ck) {
  if (src.ckpt.empty() == !src.random_init) throw ConfigError("give exactly one of --ckpt or --random-init");
  if (!src.ckpt.empty()) {
    ck = load_checkpoint(src.ckpt);
    RunConfig cfg = resolve_config(o, checkpoint_config(*ck));
    require_same_model(checkpoint_config(*ck).model, cfg.model);
    return cfg;
  }
  return resolve_config(o);
}

inline JepaModel<float> eval_model(const RunConfig& cfg, const std::optional<Checkpoint>& ck) {
  JepaModel<float> model(cfg.model, cfg.seed);
  if (ck) restore_checkpoint<float>(*ck, model, nullptr);
  return model;
}

inline void write_eval(const std::string& dir, const ProbeResult& r, const Dataset& ds) {
  write_file_bytes(join(dir, "metrics.tsv"), results_tsv(r, ds.class_names));
  write_file_bytes(join(dir, "predictions.tsv"), predictions_tsv(r.predictions));
}

// ---- pretrain ----

inline int cmd_pretrain(const CommonOptions& o, const std::string& resume, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  std::optional<Checkpoint> ck;
  if (!resume.empty()) ck = load_checkpoint(resume);
  const std::string dir = make_run_dir(o, "pretrain");
  write_config(dir, cfg);
  out << "run directory: " << dir << "\n";
  const Dataset ds = load_dataset(cfg);
  std::unique_ptr<FeatureStore> features;
  if (cfg.model.teacher_kind == TeacherKind::external_file)
    features = std::make_unique<FeatureStore>(FeatureStore::load(cfg.teacher_features));
  Trainer<float> tr(cfg, ds.train, features.get());
  tr.set_dump_dir(dir);
  if (ck) {
    tr.resume(*ck);
    out << "resumed at step " << tr.global_step() << "\n";
  }
  out << "pretraining on " << ds.train.size() << " clouds, " << tr.total_steps() << " steps\n";
  {
    std::ofstream metrics(join(dir, "metrics.tsv"));
    MetricsLog log(metrics, blocks_per_plan(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    double sum = 0;
    std::size_t n = 0;
    while (!tr.done()) {
      const LossReport r = tr.step();
      log.write(r, cfg.seed);
      sum += r.total;
      ++n;
      if (tr.global_step() % tr.steps_per_epoch() == 0) {
        const std::uint64_t epoch = tr.global_step() / tr.steps_per_epoch();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out << "epoch " << epoch << "/" << cfg.epochs << " loss " << fmt(sum / static_cast<double>(n)) << " lr "
            << fmt(r.lr, "%.3g") << " (" << fmt(secs, "%.1f") << " s)\n";
        sum = 0;
        n = 0;
        if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0 && !tr.done())
          save_checkpoint(join(dir, "epoch" + std::to_string(epoch) + ".ckpt"), tr.checkpoint());
      }
    }
  }
  save_checkpoint(join(dir, "final.ckpt"), tr.checkpoint());
  const Table metrics = parse_tsv(read_file_bytes(join(dir, "metrics.tsv")), join(dir, "metrics.tsv"));
  if (!metrics.rows.empty()) write_file_bytes(join(dir, "loss.svg"), metrics_svg(metrics, "pretraining loss"));
  out << "checkpoint: " << join(dir, "final.ckpt") << "\n";
  return 0;
}

// ---- probe / finetune / fewshot ----

inline int cmd_probe(const CommonOptions& o, const EvalSource& src, std::ostream& out) {
  std::optional<Checkpoint> ck;
  const RunConfig cfg = eval_config(o, src, ck);
  const std::string dir = make_run_dir(o, "probe");
  write_config(dir, cfg);
  out << "run directory: " << dir << "\n";
  const Dataset ds = load_dataset(cfg);
  const auto r = linear_probe(eval_model(cfg, ck), ds, cfg.eval);
  write_eval(dir, r, ds);
  out << "linear probe accuracy: " << percent(r.accuracy) << "% (" << r.correct << "/" << r.n_test << ")\n";
  return 0;
}

inline int cmd_finetune(const CommonOptions& o, const EvalSource& src, bool frozen, std::ostream& out) {
  std::optional<Checkpoint> ck;
  const RunConfig cfg = eval_config(o, src, ck);
  const std::string dir = make_run_dir(o, "finetune");
  write_config(dir, cfg);
  out << "run directory: " << dir << "\n";
  const Dataset ds = load_dataset(cfg);
  const auto r = finetune_classify(eval_model(cfg, ck), ds, cfg.eval, frozen, cfg.seed);
  write_eval(dir, r, ds);
  out << (frozen ? "frozen-encoder" : "fine-tune") << " accuracy: " << percent(r.accuracy) << "% (" << r.correct << "/"
      << r.n_test << ")\n";
  return 0;
}

inline int cmd_fewshot(CommonOptions o, const EvalSource& src, std::ostream& out) {
  std::optional<Checkpoint> ck;
  const RunConfig cfg = eval_config(o, src, ck);
  const std::string dir = make_run_dir(o, "fewshot");
  write_config(dir, cfg);
  out << "run directory: " << dir << "\n";
  const Dataset ds = load_dataset(cfg);
  const auto r = fewshot(eval_model(cfg, ck), ds, cfg.eval, cfg.seed);
  write_eval(dir, r, ds);
  std::string episodes = "run\taccuracy\n";
  for (std::size_t i = 0; i < r.episodes.size(); ++i) episodes += std::to_string(i) + "\t" + fmt(r.episodes[i]) + "\n";
  write_file_bytes(join(dir, "episodes.tsv"), episodes);
  out << cfg.eval.n_way << "-way " << cfg.eval.m_shot << "-shot (" << cfg.eval.fewshot_mode << "): " << percent(r.mean)
      << " +/- " << percent(r.stddev) << " % over " << r.episodes.size() << " runs\n";
  return 0;
}

// ---- ablate ----

inline int cmd_ablate(const CommonOptions& o, const std::string& axis_name, const std::string& values,
                      const std::string& seeds, std::ostream& out) {
  const RunConfig base = resolve_config(o);
  const AblationAxis axis = parse_ablation_axis(axis_name);
  const auto vals = split_list(values);
  std::vector<std::uint64_t> seed_list;
  if (seeds.empty()) seed_list.push_back(base.seed);
  for (const auto& s : seeds.empty() ? std::vector<std::string>{} : split_list(seeds))
    seed_list.push_back(config_detail::to_uint("--seeds", s));
  if (vals.empty()) throw ConfigError("--values is empty");
  for (const auto& v : vals) ablation_config(base, axis, v);
  const std::string dir = make_run_dir(o, "ablate");
  write_config(dir, base);
  out << "run directory: " << dir << "\n";
  const Dataset ds = load_dataset(base);
  const auto table = run_ablation<float>(base, ds, axis, vals, seed_list, dir, [&](const AblationCell& c) {
    out << to_string(axis) << "=" << c.value << " seed " << c.seed << ": probe " << percent(c.probe_accuracy) << "%\n";
  });
  out << "\n" << ablation_markdown(table);
  return 0;
}

// ---- sample-viz ----

struct VizOptions {
  std::string cloud;
  std::string shape = "torus";
  std::size_t index = 0;
  std::optional<std::uint64_t> seed;
};

enum class TokenRole { context, target, removed, unused };

// Per token: role and, for targets, the first block holding it.
struct TokenLabel {
  TokenRole role = TokenRole::unused;
  std::size_t block = 0;
};

// Tokens dropped from the sampled context because a target took them are
// marked first, then targets, then context.
inline std::vector<TokenLabel> label_tokens(const BlockPlan& plan) {
  std::vector<TokenLabel> out(plan.tokens());
  for (auto i : plan.context.indices) out[i].role = TokenRole::context;
  for (std::size_t t = plan.targets.size(); t-- > 0;)
    for (auto i : plan.targets[t].indices) out[i] = {TokenRole::target, t};
  for (auto i : plan.context_before_removal.indices)
    if (!plan.context.contains(i)) out[i].role = TokenRole::removed;
  return out;
}

inline Color role_color(const TokenLabel& l) {
  static const Color hues[] = {{228, 26, 28},  {55, 126, 184}, {77, 175, 74},  {255, 127, 0},
                               {152, 78, 163}, {0, 190, 200},  {230, 60, 170}, {200, 180, 0}};
  switch (l.role) {
    case TokenRole::target:
      return hues[l.block % 8];
    case TokenRole::removed:
      return {20, 20, 20};
    case TokenRole::context:
      return {150, 150, 150};
    case TokenRole::unused:
      break;
  }
  return {235, 235, 235};
}

inline std::string role_name(const TokenLabel& l) {
  switch (l.role) {
    case TokenRole::target:
      return "target_" + std::to_string(l.block);
    case TokenRole::removed:
      return "removed";
    case TokenRole::context:
      return "context";
    case TokenRole::unused:
      break;
  }
  return "unused";
}

// Index of the nearest center; ties go to the lower index.
inline std::size_t nearest_center(const Point3& p, const std::vector<Point3>& centers) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    double d = 0;
    for (int k = 0; k < 3; ++k) d += (p[k] - centers[c][k]) * (p[k] - centers[c][k]);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best;
}

inline ShapeClass parse_shape(const std::string& s) {
  std::string names;
  for (auto c : all_shape_classes()) {
    if (to_string(c) == s) return c;
    names += " " + to_string(c);
  }
  throw ConfigError("unknown shape '" + s + "' (choices:" + names + ")");
}

inline int cmd_sample_viz(const CommonOptions& o, const VizOptions& v, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const std::uint64_t seed = v.seed.value_or(cfg.seed);
  PointCloud pc;
  if (!v.cloud.empty()) {
    Rng load_rng(derive_seed(cfg.data.seed, {hash_string(v.cloud)}));
    pc = load_cloud(v.cloud, cfg.points_per_cloud, load_rng);
  } else {
    const ShapeClass cls = parse_shape(v.shape);
    SyntheticShapeSpec spec;
    spec.points = cfg.points_per_cloud;
    spec.jitter = cfg.data.jitter;
    spec.anisotropy = cfg.data.anisotropy;
    spec.occlusion = cfg.data.occlusion;
    spec.outliers = cfg.data.outliers;
    Rng shape_rng(derive_seed(cfg.data.seed, {hash_string("viz"), hash_string(v.shape), v.index}));
    pc.points = synthetic_points(cls, spec, shape_rng);
    pc.id = cloud_id(v.shape, v.index);
    pc = normalize_unit_sphere(pc);
  }
  const std::string dir = make_run_dir(o, "sample-viz");
  RunConfig saved = cfg;
  saved.seed = seed;
  write_config(dir, saved);
  out << "run directory: " << dir << "\n";

  Rng rng(derive_seed(seed, {hash_string("sample-viz")}));
  const PatchSet patches = patchify(pc, cfg.model.m_tokens, cfg.model.k_neighbors, rng);
  const SamplerConfig sc = cfg.sampler_config();
  const BlockPlan plan = plan_blocks(patches.centers, sc, rng);
  check_plan(plan, sc);
  const auto labels = label_tokens(plan);

  std::vector<Color> colors;
  for (const auto& p : pc.points) colors.push_back(role_color(labels[nearest_center(p, patches.centers)]));
  write_ply(join(dir, "plan.ply"), pc.points, colors, PlyEncoding::ascii);

  std::string tsv = "token\tx\ty\tz\trole\tin_context\tin_targets\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::string in_t;
    for (std::size_t t = 0; t < plan.targets.size(); ++t)
      if (plan.targets[t].contains(i)) in_t += (in_t.empty() ? "" : ",") + std::to_string(t);
    tsv += std::to_string(i) + "\t" + fmt(patches.centers[i][0], "%.17g") + "\t" + fmt(patches.centers[i][1], "%.17g") +
           "\t" + fmt(patches.centers[i][2], "%.17g") + "\t" + role_name(labels[i]) + "\t" +
           (plan.context.contains(i) ? "1" : "0") + "\t" + (in_t.empty() ? "-" : in_t) + "\n";
  }
  write_file_bytes(join(dir, "plan.tsv"), tsv);
  out << to_string(plan.strategy) << " plan for '" << pc.id << "': context " << plan.context.size() << " tokens, "
      << plan.targets.size() << " targets, " << plan.context_before_removal.size() - plan.context.size()
      << " removed; " << pc.points.size() << " vertices written\n";
  return 0;
}

// ---- plot ----

inline int cmd_plot(const CommonOptions& o, const std::vector<std::string>& files, const std::string& y_column,
                    const std::string& x_column, const std::string& title, const std::string& output, std::ostream& out) {
  std::string svg;
  if (files.size() == 1 && x_column == "step") {
    svg = metrics_svg(parse_tsv(read_file_bytes(files[0]), files[0]), title.empty() ? y_column : title, y_column);
  } else {
    std::vector<Series> series;
    for (const auto& f : files) {
      const Table t = parse_tsv(read_file_bytes(f), f);
      const fs::path p(f);
      const std::string label = p.has_parent_path() ? p.parent_path().filename().string() : p.stem().string();
      series.push_back({label.empty() ? p.stem().string() : label, t.numbers(x_column), t.numbers(y_column)});
    }
    PlotSpec spec;
    spec.title = title.empty() ? y_column : title;
    spec.x_label = x_column;
    spec.y_label = y_column;
    svg = line_chart_svg(series, spec);
  }
  std::string path = output;
  if (path.empty()) path = join(make_run_dir(o, "plot"), y_column + ".svg");
  else if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_file_bytes(path, svg);
  out << "wrote " << path << "\n";
  return 0;
}

// ---- inspect-ckpt ----

inline std::string dtype_name(DType d) {
  switch (d) {
    case DType::f32:
      return "f32";
    case DType::f64:
      return "f64";
    case DType::u64:
      return "u64";
    case DType::text:
      return "text";
  }
  return "?";
}

inline int cmd_inspect(const std::string& path, bool show_config, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(path);
  out << "checkpoint: " << path << "\nformat version: " << kCheckpointVersion << "\nglobal_step: " << ck.meta_u64("global_step")
      << "\noptimizer_step: " << ck.meta_u64("optimizer_step") << "\nseed: " << ck.meta_u64("seed")
      << "\nparameters: " << ck.meta_u64("parameter_count") << "\n";
  const RunConfig cfg = checkpoint_config(ck);
  out << "model:";
  for (const auto& [k, v] : cfg.model.fields()) out << " " << k << "=" << v;
  out << "\nentries:\n";
  for (const auto& e : ck.entries) {
    if (e.name.rfind("meta/", 0) == 0) continue;
    out << "  " << e.name << "\t" << dtype_name(e.dtype) << "\t[";
    for (std::size_t i = 0; i < e.shape.size(); ++i) out << (i ? ", " : "") << e.shape[i];
    out << "]\n";
  }
  if (show_config) out << "config:\n" << ck.meta_text("config");
  return 0;
}

// ---- entry point ----

inline void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config,-c", o.config_path, "config file (key = value lines)");
  sub->add_option("--set,-s", o.overrides, "override one config key, key=value (repeatable)")->allow_extra_args(false);
  sub->add_option("--out,-o", o.out_base, "base directory for timestamped run directories");
  sub->add_option("--run-dir", o.run_dir, "exact run directory to use instead of a timestamped one");
}

// 0 on success, 1 on usage or config errors, 2 on runtime failures.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"JEPA-style self-supervised pretraining and evaluation for point clouds", "jepa3d"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  CommonOptions common;
  EvalSource src;
  std::string resume, axis, values, seeds, y_column = "loss", x_column = "step", title, output, ckpt_path;
  bool frozen = false, show_config = false;
  VizOptions viz;
  std::uint64_t viz_seed = 0;
  std::size_t n_way = 0, m_shot = 0, n_query = 0, runs = 0;
  std::string mode;
  std::vector<std::string> files;

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining; writes checkpoints and a metrics log");
  add_common(pretrain, common);
  pretrain->add_option("--resume", resume, "checkpoint to continue from");

  auto add_source = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--ckpt", src.ckpt, "pretrained checkpoint");
    sub->add_flag("--random-init", src.random_init, "evaluate a randomly initialized encoder");
  };
  auto* probe = app.add_subcommand("probe", "linear probe on frozen pooled features");
  add_source(probe);
  auto* finetune = app.add_subcommand("finetune", "train a classification head, with or without the encoder");
  add_source(finetune);
  finetune->add_flag("--frozen", frozen, "keep the encoder fixed and train only the head");
  auto* few = app.add_subcommand("fewshot", "N-way M-shot episodes; reports mean and std accuracy");
  add_source(few);
  few->add_option("--n-way", n_way, "classes per episode");
  few->add_option("--m-shot", m_shot, "support samples per class");
  few->add_option("--n-query", n_query, "query samples per class");
  few->add_option("--runs", runs, "number of episodes");
  few->add_option("--mode", mode, "finetune or probe")->check(CLI::IsMember({"finetune", "probe"}));

  auto* ablate = app.add_subcommand("ablate", "pretrain and probe once per axis value and seed");
  add_common(ablate, common);
  ablate->add_option("--axis", axis, "sampling_strategy, a_targets, decoder_depth or context_aware")->required();
  ablate->add_option("--values", values, "comma-separated values for the axis")->required();
  ablate->add_option("--seeds", seeds, "comma-separated seeds (default: the config seed)");

  auto* sviz = app.add_subcommand("sample-viz", "export one block plan as a colored PLY");
  add_common(sviz, common);
  sviz->add_option("--cloud", viz.cloud, "cloud file (.xyz, .off, .ply)");
  sviz->add_option("--shape", viz.shape, "synthetic shape when no --cloud is given");
  sviz->add_option("--index", viz.index, "synthetic instance index");
  auto* seed_opt = sviz->add_option("--seed", viz_seed, "plan seed (default: the config seed)");

  auto* plot = app.add_subcommand("plot", "render metrics logs as an SVG line chart");
  add_common(plot, common);
  plot->add_option("files", files, "metrics or results TSV files")->required();
  plot->add_option("--y", y_column, "column to plot");
  plot->add_option("--x", x_column, "x-axis column");
  plot->add_option("--title", title, "chart title");
  plot->add_option("--output", output, "SVG path (default: inside a new run directory)");

  auto* inspect = app.add_subcommand("inspect-ckpt", "print checkpoint metadata and tensor shapes");
  inspect->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  inspect->add_flag("--config", show_config, "also print the stored config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1]))
      what = std::string("unknown subcommand '") + argv[1] + "'";
    err << "error: " << what << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*pretrain) return cmd_pretrain(common, resume, out);
    if (*probe) return cmd_probe(common, src, out);
    if (*finetune) return cmd_finetune(common, src, frozen, out);
    if (*few) {
      // Flag values become ordinary overrides so they land in the saved config.
      if (n_way) common.overrides.push_back("eval.n_way=" + std::to_string(n_way));
      if (m_shot) common.overrides.push_back("eval.m_shot=" + std::to_string(m_shot));
      if (n_query) common.overrides.push_back("eval.n_query=" + std::to_string(n_query));
      if (runs) common.overrides.push_back("eval.runs=" + std::to_string(runs));
      if (!mode.empty()) common.overrides.push_back("eval.fewshot_mode=" + mode);
      return cmd_fewshot(common, src, out);
    }
    if (*ablate) return cmd_ablate(common, axis, values, seeds, out);
    if (*sviz) {
      if (seed_opt->count()) viz.seed = viz_seed;
      return cmd_sample_viz(common, viz, out);
    }
    if (*plot) return cmd_plot(common, files, y_column, x_column, title, output, out);
    if (*inspect) return cmd_inspect(ckpt_path, show_config, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace jepa3d::cli
