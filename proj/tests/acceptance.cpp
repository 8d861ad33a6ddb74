// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [criteria...] [--out DIR] [--set key=value ...] [--seeds 0,1,2]
//
// With no criteria listed all ten run. Criteria 7 and 8 pretrain the smoke
// configuration six times and take over an hour on one core; their logs and
// the sampling comparison table go to --out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "jepa3d/cli.hpp"
#include "jepa3d/jepa3d.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"

using namespace jepa3d;
using namespace jepa3d::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Collects failures without stopping at the first one.
struct Checker {
  std::size_t checks = 0, failures = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures++ == 0) first = what;
  }
  Outcome outcome(const std::string& summary) const {
    return {failures == 0, failures == 0 ? summary : std::to_string(failures) + " of " + std::to_string(checks) +
                                                         " checks failed; first: " + first};
  }
};

// ---- 1: FPS and KNN against brute force ----

Outcome geometry_oracles() {
  const auto t0 = Clock::now();
  Checker c;
  Rng rng(101);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.index(64);
    const std::size_t m = 1 + rng.index(std::min<std::size_t>(n, 16));
    const auto pts = t % 2 ? tie_heavy_cloud(rng, n) : uniform_cloud(rng, n);
    const std::size_t start = rng.index(n);
    c.expect(farthest_point_sampling(pts, m, start).indices == oracle_fps(pts, m, start), "fps instance " + std::to_string(t));
  }
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.index(64);
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(n, 16));
    const auto corpus = t % 2 ? tie_heavy_cloud(rng, n) : uniform_cloud(rng, n);
    const auto queries = t % 2 ? tie_heavy_cloud(rng, 4) : uniform_cloud(rng, 4);
    const auto grid = knn(queries, corpus, k);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const std::vector<std::size_t> got(grid.row(q).begin(), grid.row(q).end());
      c.expect(got == oracle_knn(queries[q], corpus, k), "knn instance " + std::to_string(t));
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10, "runtime " + fmt("%.2f s", secs));
  return c.outcome("200 FPS + 200 KNN instances match, " + fmt("%.2f s", secs));
}

// ---- 2: sampler invariants ----

Outcome sampler_invariants() {
  const auto t0 = Clock::now();
  Checker c;
  Rng rng(202);
  const std::size_t sizes[] = {20, 32, 64, 100};
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = sizes[t % 4];
    SamplerConfig cfg;
    cfg.a_targets = 1 + static_cast<std::size_t>((t / 4) % 6);
    const auto centers = uniform_cloud(rng, m);
    const auto seed = derive_seed(2, {static_cast<std::uint64_t>(t)});
    Rng a(seed), b(seed);
    const auto plan = plan_blocks(centers, cfg, a);
    const std::string at = "plan " + std::to_string(t) + " (M=" + std::to_string(m) + ")";
    std::set<std::size_t> ctx(plan.context.indices.begin(), plan.context.indices.end());
    const auto lo = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(m)));
    const auto hi = static_cast<std::size_t>(std::lround(0.20 * static_cast<double>(m)));
    c.expect(plan.targets.size() == cfg.a_targets, at + ": target count");
    for (const auto& tb : plan.targets) {
      c.expect(tb.size() >= lo && tb.size() <= hi, at + ": target size " + std::to_string(tb.size()));
      for (auto i : tb.indices) c.expect(!ctx.count(i), at + ": token " + std::to_string(i) + " in context and target");
    }
    const std::size_t pre = plan.context_before_removal.size();
    c.expect(pre >= static_cast<std::size_t>(std::lround(0.85 * static_cast<double>(m))) && pre <= m,
             at + ": pre-removal context " + std::to_string(pre));
    const auto again = plan_blocks(centers, cfg, b);
    c.expect(again.context == plan.context && again.targets == plan.targets &&
                 again.context_before_removal == plan.context_before_removal,
             at + ": not deterministic");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10, "runtime " + fmt("%.2f s", secs));
  return c.outcome("1000 plans satisfy every invariant, " + fmt("%.2f s", secs));
}

// ---- 3: gradient checks ----

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  constexpr double tol = 1e-4;
  constexpr int instances = 20;
  std::map<std::string, double> worst;
  auto record = [&](const std::string& op, const GradCheckResult& r) {
    worst[op] = std::max(worst[op], r.checked ? r.max_error : INFINITY);
  };
  Rng rng(303);
  for (int t = 0; t < instances; ++t) {
    const auto s = static_cast<std::uint64_t>(t);
    auto a = random_var({3, 4}, rng), b = random_var({4, 5}, rng);
    record("matmul", gradcheck({a, b}, [s](const auto& in) { return weighted_sum(matmul(in[0], in[1]), s); }));
    auto x = random_var({3, 7}, rng, 2.0);
    record("softmax", gradcheck({x}, [s](const auto& in) { return weighted_sum(softmax(in[0], -1), s); }));
    auto ln = random_var({2, 8}, rng), g = random_var({8}, rng), bb = random_var({8}, rng);
    record("layer_norm",
           gradcheck({ln, g, bb}, [s](const auto& in) { return weighted_sum(layer_norm(in[0], in[1], in[2]), s); }));
    auto gx = random_var({9}, rng, 3.0);
    record("gelu", gradcheck({gx}, [s](const auto& in) { return weighted_sum(gelu(in[0]), s); }));
    auto lx = random_var({3, 5}, rng), lw = random_var({5, 4}, rng), lb = random_var({4}, rng);
    record("linear",
           gradcheck({lx, lw, lb}, [s](const auto& in) { return weighted_sum(linear(in[0], in[1], in[2]), s); }));

    MultiHeadAttention<double> attn(8, 2, rng);
    ParameterList<double> ap;
    attn.collect(ap, "attn");
    for (auto& p : ap)
      for (auto& v : p.var.mutable_value().values()) v = rng.uniform(-0.8, 0.8);
    std::vector<Var<double>> ain{random_var({3, 8}, rng), random_var({5, 8}, rng)};
    for (auto& p : ap) ain.push_back(p.var);
    record("attention", gradcheck(ain, [&attn, s](const auto& in) { return weighted_sum(attn(in[0], in[1]), s); }));

    auto cfg = tiny_config(6, 2);
    cfg.widths = {4, 4, 6};
    cfg.pos_hidden = 5;
    JepaModel<double> model(cfg, 400 + s);
    randomize(model.parameters(), rng, 0.5);
    const auto in = tiny_input<double>(cfg, 500 + s, 30);
    auto params_with = [&](const std::string& prefix) {
      std::vector<Var<double>> out;
      for (const auto& p : model.parameters())
        if (p.name.rfind(prefix, 0) == 0) out.push_back(p.var);
      return out;
    };
    // Max pooling is piecewise linear; a small step keeps the difference inside one piece.
    record("patch embedder", gradcheck(
                                 params_with("embed."),
                                 [&](const auto&) { return weighted_sum(model.embed(in.patch_tensor), s); }, 1e-7));
    record("positional mlp", gradcheck(params_with("pos."), [&](const auto&) {
             return weighted_sum(model.positions(in.centers), s);
           }));
    auto hx = random_var({3, cfg.dim}, rng);
    auto head = params_with("head.student");
    head.insert(head.begin(), hx);
    record("projection head",
           gradcheck(head, [&](const auto& v) { return weighted_sum(model.project_student(v[0]), s); }));
    auto cp = random_var({4, 6}, rng);
    const auto ct = random_tensor({4, 6}, rng);
    record("cosine loss", gradcheck({cp}, [&ct](const auto& v) { return cosine_loss(v[0], ct); }));
  }
  const double secs = seconds_since(t0);
  Checker c;
  std::string summary;
  double overall = 0;
  for (const auto& [op, err] : worst) {
    c.expect(err <= tol, op + " max rel. error " + fmt("%.2e", err));
    overall = std::max(overall, err);
  }
  c.expect(worst.size() == 10, "expected 10 operations, got " + std::to_string(worst.size()));
  c.expect(secs < 60, "runtime " + fmt("%.1f s", secs));
  return c.outcome(std::to_string(worst.size()) + " operations x 20 instances, worst rel. error " + fmt("%.2e", overall) +
                   ", " + fmt("%.1f s", secs));
}

// ---- 4: cosine loss contract ----

double cos_loss(const Tensor<double>& p, const Tensor<double>& q) { return cosine_loss(Var<double>(p), q).value().item(); }

Outcome loss_contract() {
  Checker c;
  Rng rng(404);
  double lo = INFINITY, hi = -INFINITY;
  for (int t = 0; t < 10000; ++t) {
    const auto p = random_tensor({1, 5}, rng, 3), q = random_tensor({1, 5}, rng, 3);
    const double l = cos_loss(p, q);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    c.expect(l >= 0 && l <= 2, "pair " + std::to_string(t) + " loss " + fmt("%.17g", l));
  }
  for (int t = 0; t < 100; ++t) {
    auto p = random_tensor({3, 6}, rng);
    Tensor<double> neg = p;
    for (auto& v : neg.values()) v = -v;
    c.expect(std::abs(cos_loss(p, p)) < 1e-6, "identical rows not 0");
    c.expect(std::abs(cos_loss(p, neg) - 2) < 1e-6, "antipodal rows not 2");
  }
  for (int t = 0; t < 200; ++t) {
    auto p = random_tensor({3, 6}, rng);
    const auto q = random_tensor({3, 6}, rng);
    const double base = cos_loss(p, q);
    const double s = std::exp(rng.uniform(-4, 4));
    for (auto& v : p.values()) v *= s;
    c.expect(std::abs(cos_loss(p, q) - base) <= 1e-6, "scale " + fmt("%.3g", s) + " changed the loss");
  }
  // Teacher rows are plain tensors; a Var that requires grad gets none through the target slot.
  auto pred = random_var({4, 6}, rng);
  Var<double> teacher(random_tensor({4, 6}, rng), true);
  cosine_loss(pred, teacher).backward();
  c.expect(pred.has_grad(), "prediction received no gradient");
  c.expect(!teacher.has_grad(), "teacher rows received a gradient");
  return c.outcome("10000 pairs in " + fmt("[%.4f, ", lo) + fmt("%.4f]", hi) +
                   "; identity 0, antipodal 2, scale invariant, teacher gradient-free");
}

// ---- 5: information barrier ----

Outcome information_barrier() {
  Checker c;
  auto cfg = ModelConfig{};
  cfg.m_tokens = 32;
  for (std::uint64_t s = 0; s < 10; ++s) {
    JepaModel<float> m(cfg, 50 + s);
    const auto in = tiny_input<float>(cfg, 60 + s, 256);
    const Tensor<float> tokens = m.embed(in.patch_tensor).value();
    Tensor<float> noisy = tokens;
    Rng rng(s);
    std::size_t replaced = 0;
    for (const auto& t : in.plan.targets)
      for (auto i : t.indices)
        for (std::size_t d = 0; d < cfg.dim; ++d, ++replaced) noisy[i * cfg.dim + d] = static_cast<float>(rng.normal() * 10);
    const auto a = m.predict(Var<float>(tokens), in.centers, in.plan);
    const auto b = m.predict(Var<float>(noisy), in.centers, in.plan);
    c.expect(replaced > 0, "no target tokens");
    for (std::size_t i = 0; i < a.size(); ++i)
      c.expect(a[i].value().identical(b[i].value()), "seed " + std::to_string(s) + " block " + std::to_string(i) + " changed");
  }
  return c.outcome("10 models: predictions bit-identical with target tokens replaced by noise");
}

// ---- 6: context-aware toggle and depth 0 ----

Outcome context_toggle() {
  Checker c;
  Rng pick(606);
  for (int t = 0; t < 10; ++t) {
    const std::size_t heads = 1 + pick.index(3);
    auto cfg = tiny_config(heads * (2 + pick.index(4)), heads);
    cfg.decoder_layers = 1 + pick.index(3);
    cfg.context_aware = false;
    const std::uint64_t seed = 700 + static_cast<std::uint64_t>(t);
    JepaModel<float> m(cfg, seed);
    const auto in = tiny_input<float>(cfg, 800 + static_cast<std::uint64_t>(t));
    const auto tokens = m.embed(in.patch_tensor);
    const auto pos = m.positions(in.centers);
    const auto ctx_pos = index_select(pos, in.plan.context.indices);
    const auto ctx = m.encode_context(index_select(tokens, in.plan.context.indices), ctx_pos);
    // Reference decoder: plain self-attention blocks with the same seeds.
    const std::uint64_t init = derive_seed(seed, {hash_string("init")});
    std::vector<TransformerBlock<float>> blocks;
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i)
      blocks.emplace_back(cfg.dim, cfg.heads, cfg.mlp_hidden(), module_seed(init, "decoder.blocks." + std::to_string(i)));
    const auto got = m.predict(tokens, in.centers, in.plan);
    for (std::size_t b = 0; b < in.plan.targets.size(); ++b) {
      const auto& tb = in.plan.targets[b];
      Var<float> mask = broadcast_to(reshape(m.mask_token(), {1, cfg.dim}), {tb.size(), cfg.dim}) + index_select(pos, tb.indices);
      Var<float> seq = concat<float>({ctx + ctx_pos, mask}, 0);
      for (const auto& blk : blocks) seq = blk(seq);
      seq = m.decoder_norm()(seq);
      const auto ref = index_select(seq, iota_indices(ctx.dim(0), tb.size()));
      c.expect(got[b].value().identical(ref.value()), "config " + std::to_string(t) + " block " + std::to_string(b));
    }
  }
  // Depth 0: no decoder; mask tokens join the context in the encoder.
  auto cfg = tiny_config();
  cfg.decoder_layers = 0;
  JepaModel<float> m(cfg, 9);
  c.expect(m.decoder().empty(), "depth-0 model has decoder blocks");
  const auto in = tiny_input<float>(cfg, 13);
  const auto tokens = m.embed(in.patch_tensor);
  const auto got = m.predict(tokens, in.centers, in.plan);
  const auto pos = m.positions(in.centers);
  const auto ctx_rows = index_select(tokens, in.plan.context.indices) + index_select(pos, in.plan.context.indices);
  for (std::size_t i = 0; i < in.plan.targets.size(); ++i) {
    const auto& tb = in.plan.targets[i];
    const auto mask = broadcast_to(reshape(m.mask_token(), {1, cfg.dim}), {tb.size(), cfg.dim}) + index_select(pos, tb.indices);
    const auto seq = m.student().encoder()(concat<float>({ctx_rows, mask}, 0));
    c.expect(got[i].value().identical(index_select(seq, iota_indices(ctx_rows.dim(0), tb.size())).value()),
             "depth-0 block " + std::to_string(i));
  }
  return c.outcome("10 random configs bit-identical to a cross-attention-free decoder; depth 0 runs encoder-only");
}

// ---- 7 and 8: smoke-scale training ----

struct SmokeRun {
  std::string strategy;
  std::uint64_t seed = 0;
  double pretrain_seconds = 0;
  double first_loss = 0, final_loss = 0;
  double probe = 0, random_probe = NAN;
};

class TrainingStudy {
 public:
  TrainingStudy(RunConfig base, std::vector<std::uint64_t> seeds, std::string out)
      : base_(std::move(base)), seeds_(std::move(seeds)), out_(std::move(out)) {}

  const RunConfig& config() const { return base_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

  const std::vector<SmokeRun>& runs(const std::string& strategy) {
    auto& v = runs_[strategy];
    if (v.empty())
      for (auto seed : seeds_) v.push_back(run(strategy, seed));
    return v;
  }

 private:
  const Dataset& data() {
    if (!data_) {
      data_ = load_dataset(base_);
      std::cout << "  dataset: " << data_->size() << " clouds (" << data_->train.size() << " train, " << data_->test.size()
                << " test)\n";
    }
    return *data_;
  }

  SmokeRun run(const std::string& strategy, std::uint64_t seed) {
    RunConfig cfg = base_;
    cfg.sampler.strategy = parse_sampling_strategy(strategy);
    cfg.seed = seed;
    const std::string dir = (fs::path(out_) / (strategy + "_seed" + std::to_string(seed))).string();
    fs::create_directories(dir);
    write_file_bytes(dir + "/config.cfg", config_to_text(cfg));
    SmokeRun r;
    r.strategy = strategy;
    r.seed = seed;
    const auto t0 = Clock::now();
    Trainer<float> tr(cfg, data().train);
    tr.set_dump_dir(dir);
    std::vector<LossReport> reps;
    {
      std::ofstream metrics(dir + "/metrics.tsv");
      MetricsLog log(metrics, blocks_per_plan(cfg));
      while (!tr.done()) {
        reps.push_back(tr.step());
        log.write(reps.back(), seed);
      }
    }
    r.pretrain_seconds = seconds_since(t0);
    const auto means = epoch_means(reps);
    r.first_loss = means.front();
    r.final_loss = means.back();
    save_checkpoint(dir + "/final.ckpt", tr.checkpoint());
    const auto probe = linear_probe(tr.model(), data(), cfg.eval);
    write_file_bytes(dir + "/predictions.tsv", predictions_tsv(probe.predictions));
    r.probe = probe.accuracy;
    if (strategy == "multi_block") {
      const JepaModel<float> fresh(cfg.model, seed);
      r.random_probe = linear_probe(fresh, data(), cfg.eval).accuracy;
    }
    std::cout << "  " << strategy << " seed " << seed << ": pretrain " << fmt("%.0f s", r.pretrain_seconds) << ", loss "
              << fmt("%.4f", r.first_loss) << " -> " << fmt("%.4f", r.final_loss) << ", probe " << percent(r.probe) << "%";
    if (!std::isnan(r.random_probe)) std::cout << " (random init " << percent(r.random_probe) << "%)";
    std::cout << std::endl;
    return r;
  }

  RunConfig base_;
  std::vector<std::uint64_t> seeds_;
  std::string out_;
  std::optional<Dataset> data_;
  std::map<std::string, std::vector<SmokeRun>> runs_;
};

Outcome smoke_training(TrainingStudy& study) {
  const auto& cfg = study.config();
  Checker c;
  c.expect(cfg.model.m_tokens == 32 && cfg.model.k_neighbors == 16 && cfg.model.dim == 96 && cfg.model.encoder_layers == 3 &&
               cfg.model.decoder_layers == 2 && cfg.model.a_targets == 4 && cfg.model.teacher_kind == TeacherKind::ema &&
               cfg.epochs == 60,
           "configuration is not the smoke configuration");
  const auto& runs = study.runs("multi_block");
  double gap = 0, worst_drop = INFINITY, slowest = 0;
  for (const auto& r : runs) {
    const double drop = 1 - r.final_loss / r.first_loss;
    worst_drop = std::min(worst_drop, drop);
    slowest = std::max(slowest, r.pretrain_seconds);
    c.expect(drop >= 0.30, "seed " + std::to_string(r.seed) + " loss drop " + fmt("%.1f%%", 100 * drop));
    c.expect(r.pretrain_seconds <= 1200, "seed " + std::to_string(r.seed) + " took " + fmt("%.0f s", r.pretrain_seconds));
    gap += (r.probe - r.random_probe) / static_cast<double>(runs.size());
  }
  c.expect(100 * gap >= 10, "mean probe gap " + fmt("%+.2f points", 100 * gap));
  std::string per_seed;
  for (const auto& r : runs)
    per_seed += (per_seed.empty() ? "" : ", ") + percent(r.probe) + " vs " + percent(r.random_probe);
  return c.outcome("loss drop >= " + fmt("%.1f%%", 100 * worst_drop) + ", probe gap " + fmt("%+.2f points", 100 * gap) +
                   " (" + per_seed + "), slowest run " + fmt("%.0f s", slowest));
}

Outcome ablation_direction(TrainingStudy& study, const std::string& out) {
  AblationTable table;
  table.axis = AblationAxis::sampling_strategy;
  table.seeds = study.seeds();
  for (const std::string strategy : {"random_mask", "multi_block"}) {
    AblationRow row{strategy, {}};
    for (const auto& r : study.runs(strategy)) {
      const std::string dir = (fs::path(out) / (strategy + "_seed" + std::to_string(r.seed))).string();
      row.cells.push_back({strategy, r.seed, r.probe, r.first_loss, r.final_loss, dir});
    }
    table.rows.push_back(std::move(row));
  }
  table.complete = true;
  write_ablation_table(table, out);
  const std::string md = ablation_markdown(table);
  // The hard part of this criterion is the generated table; the ordering is reported either way.
  Checker c;
  c.expect(md.find("| sampling_strategy |") != std::string::npos, "table header missing");
  c.expect(md.find("| random_mask |") != std::string::npos && md.find("| multi_block |") != std::string::npos,
           "table rows missing");
  c.expect(fs::exists(fs::path(out) / "table.md") && fs::exists(fs::path(out) / "table.tsv"), "table files missing");
  const std::string check = ordering_check(table);
  c.expect(!check.empty(), "ordering check missing");
  std::cout << md;
  return c.outcome(check + "; table at " + (fs::path(out) / "table.md").string());
}

// ---- 9: reproducibility ----

RunConfig repro_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.model = tiny_config(32, 4);
  cfg.model.m_tokens = 16;
  cfg.model.k_neighbors = 8;
  cfg.model.a_targets = 3;
  cfg.points_per_cloud = 96;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.optim.warmup_epochs = 1;
  cfg.seed = seed;
  return cfg;
}

Outcome reproducibility() {
  Checker c;
  SyntheticShapeSpec spec;
  spec.per_class = 5;
  spec.points = 96;
  const auto data = generate_synthetic(spec, 9).train;
  const auto cfg = repro_config(12);
  auto log_of = [&] {
    Trainer<float> tr(cfg, data);
    std::ostringstream out;
    MetricsLog log(out, blocks_per_plan(cfg));
    while (!tr.done()) log.write(tr.step(), cfg.seed);
    return out.str();
  };
  c.expect(log_of() == log_of(), "metrics logs differ between identical runs");

  Trainer<float> full(cfg, data);
  std::vector<std::string> checkpoints;
  std::vector<double> losses;
  while (!full.done()) {
    checkpoints.push_back(checkpoint_bytes(full.checkpoint()));
    losses.push_back(full.step().total);
  }
  double worst = 0;
  for (std::size_t s = 0; s < checkpoints.size(); ++s) {
    Trainer<float> resumed(cfg, data);
    resumed.resume(parse_checkpoint(checkpoints[s]));
    for (std::size_t k = s; k < losses.size(); ++k) worst = std::max(worst, std::abs(resumed.step().total - losses[k]));
  }
  c.expect(worst <= 1e-6, "resume loss difference " + fmt("%.3g", worst));
  return c.outcome("identical logs; resume from each of " + std::to_string(checkpoints.size()) +
                   " steps matches, max loss difference " + fmt("%.3g", worst));
}

// ---- 10: format round trips ----

template <class F>
std::optional<ParseError> parse_failure(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  } catch (...) {
  }
  return std::nullopt;
}

Outcome format_round_trips() {
  Checker c;
  Rng rng(1010);
  const auto quiet = [](const std::string&) {};
  for (int t = 0; t < 20; ++t) {
    std::vector<Point3> pts;
    for (std::size_t i = 0; i < 50 + rng.index(200); ++i)
      pts.push_back({rng.normal() * 1e3, rng.uniform(-1e-7, 1e-7), std::nextafter(rng.uniform(), 2.0)});
    for (auto enc : {PlyEncoding::binary_little_endian, PlyEncoding::ascii})
      c.expect(read_ply(ply_bytes(pts, {}, enc), "rt.ply", quiet).points == pts, "PLY round trip " + std::to_string(t));
  }
  const auto dir = fs::temp_directory_path() / "jepa3d_acceptance_io";
  fs::create_directories(dir);
  RunConfig cfg = repro_config(3);
  JepaModel<float> model(cfg.model, 3);
  AdamW<float> opt(model.parameters(), cfg.adamw());
  const auto path = (dir / "a.ckpt").string();
  save_checkpoint(path, capture_checkpoint(model, &opt, cfg, 5));
  const std::string first = read_file_bytes(path);
  save_checkpoint((dir / "b.ckpt").string(), load_checkpoint(path));
  c.expect(read_file_bytes((dir / "b.ckpt").string()) == first, "checkpoint bytes changed after load and save");
  fs::remove_all(dir);

  struct Fixture {
    std::string name, bytes;
    bool ply;
    ParseError::Unit unit;
    std::size_t position;
  };
  std::string bin = ply_bytes({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}});
  const std::size_t header = bin.size() - 72;
  bin.resize(bin.size() - 10);
  const std::vector<Fixture> fixtures{
      {"off bad header", "OFF\n3 x 0\n", false, ParseError::Unit::line, 2},
      {"off short vertices", "OFF\n3 0 0\n0 0 0\n1 1 1\n", false, ParseError::Unit::line, 5},
      {"off bad coordinate", "OFF\n2 0 0\n0 0 0\n1 q 1\n", false, ParseError::Unit::line, 4},
      {"ply bad magic", "plx\nformat ascii 1.0\n", true, ParseError::Unit::line, 1},
      {"ply bad vertex row", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                             "property float z\nend_header\n0 0 0\n1 zz 1\n",
       true, ParseError::Unit::line, 9},
      {"ply truncated binary", bin, true, ParseError::Unit::byte, header + 56},
  };
  for (const auto& f : fixtures) {
    const auto e = parse_failure([&] {
      if (f.ply) read_ply(f.bytes, f.name, quiet);
      else read_off(f.bytes, f.name);
    });
    c.expect(e.has_value(), f.name + ": no parse error");
    if (e) {
      c.expect(e->unit() == f.unit, f.name + ": wrong position unit");
      c.expect(e->position() == f.position,
               f.name + ": position " + std::to_string(e->position()) + ", expected " + std::to_string(f.position));
      c.expect(std::string(e->what()).find(f.name) == 0, f.name + ": message lacks the source");
    }
  }
  return c.outcome("PLY coordinates exact (binary and ascii), checkpoint bytes identical, " +
                   std::to_string(fixtures.size()) + " malformed fixtures report their position");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::vector<std::string> overrides;
  std::string out = "acceptance_report", seed_list = "0,1,2";
  app.add_option("criteria", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--out", out, "directory for training logs and the ablation table");
  app.add_option("--set", overrides, "override a smoke-config key, key=value");
  app.add_option("--seeds", seed_list, "seeds for criteria 7 and 8");
  CLI11_PARSE(app, argc, argv);

  RunConfig smoke;
  std::vector<std::uint64_t> seeds;
  try {
    for (const auto& o : overrides) apply_override(smoke, o);
    smoke.validate();
    for (const auto& s : cli::split_list(seed_list)) seeds.push_back(std::stoull(s));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  TrainingStudy study(smoke, seeds, out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"geometry oracles (FPS, KNN)", geometry_oracles},
      {"sampler invariants", sampler_invariants},
      {"gradient checks", gradient_checks},
      {"cosine loss contract", loss_contract},
      {"information barrier", information_barrier},
      {"context-aware toggle", context_toggle},
      {"smoke training", [&] { return smoke_training(study); }},
      {"sampling ablation table", [&] { return ablation_direction(study, out); }},
      {"reproducibility", reproducibility},
      {"format round trips", format_round_trips},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": " << o.detail
              << " [" << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
