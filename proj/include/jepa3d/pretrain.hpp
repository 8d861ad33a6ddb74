#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "jepa3d/checkpoint.hpp"
#include "jepa3d/config.hpp"
#include "jepa3d/features.hpp"
#include "jepa3d/objective.hpp"
#include "jepa3d/runtime.hpp"
#include "jepa3d/tokenizer.hpp"

namespace jepa3d {

// Tab-separated, one row per optimizer step, header first.
class MetricsLog {
 public:
  MetricsLog(std::ostream& out, std::size_t blocks) : out_(out) {
    out_ << "step\tepoch\tseed\tloss\tlr\tmomentum";
    for (std::size_t i = 0; i < blocks; ++i) out_ << "\tblock_" << i;
    out_ << "\n";
  }

  void write(const LossReport& r, std::uint64_t seed) {
    char buf[64];
    out_ << r.step << "\t" << r.epoch << "\t" << seed;
    for (double v : {r.total, r.lr, r.ema_momentum}) {
      std::snprintf(buf, sizeof buf, "\t%.9g", v);
      out_ << buf;
    }
    for (double v : r.per_block) {
      std::snprintf(buf, sizeof buf, "\t%.9g", v);
      out_ << buf;
    }
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ostream& out_;
};

inline std::size_t blocks_per_plan(const RunConfig& cfg) {
  return cfg.sampler.strategy == SamplingStrategy::multi_block ? cfg.model.a_targets : 1;
}

// Everything one training sample contributes before the network runs.
template <class T>
struct PreparedSample {
  PatchSet patches;
  Tensor<T> patch_tensor;  // [M, K, 3]
  Tensor<T> centers;       // [M, 3]
  BlockPlan plan;
};

// Rows `idx` of a [M, K, 3] patch tensor.
template <class T>
Tensor<T> gather_patches(const Tensor<T>& patches, const std::vector<std::size_t>& idx) {
  const std::size_t row = patches.dim(1) * patches.dim(2);
  Tensor<T> out({idx.size(), patches.dim(1), patches.dim(2)});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(patches.data() + idx[r] * row, patches.data() + (idx[r] + 1) * row, out.data() + r * row);
  return out;
}

// Stacks tensors along their first axis.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to stack");
  Shape shape = parts[0].shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
      throw ShapeError("concat_rows: " + shape_str(p.shape()) + " does not stack with " + shape_str(shape));
    rows += p.dim(0);
  }
  shape[0] = rows;
  Tensor<T> out(shape);
  T* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

template <class T>
class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<PointCloud> train, const FeatureStore* features = nullptr)
      : cfg_(std::move(cfg)), train_(std::move(train)), features_(features), model_(cfg_.model, cfg_.seed),
        opt_(model_.parameters(), cfg_.adamw()) {
    tune_allocator();
    cfg_.validate();
    if (train_.empty()) throw DataError("pretrain: empty training set");
    if (cfg_.model.teacher_kind == TeacherKind::external_file) {
      if (!features_) throw ConfigError("pretrain: external_file teacher needs a feature store");
      if (features_->rows() != cfg_.model.m_tokens || features_->cols() != cfg_.model.teacher_dim)
        throw ShapeError("teacher features are [" + std::to_string(features_->rows()) + ", " +
                         std::to_string(features_->cols()) + "] per cloud, model expects [" +
                         std::to_string(cfg_.model.m_tokens) + ", " + std::to_string(cfg_.model.teacher_dim) + "]");
      for (const auto& pc : train_)
        if (!features_->contains(pc.id)) throw DataError("teacher features: no record for cloud id '" + pc.id + "'");
    }
  }

  const RunConfig& config() const { return cfg_; }
  JepaModel<T>& model() { return model_; }
  const JepaModel<T>& model() const { return model_; }
  AdamW<T>& optimizer() { return opt_; }
  const std::vector<PointCloud>& train_set() const { return train_; }

  std::size_t steps_per_epoch() const { return (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size; }
  std::uint64_t total_steps() const { return cfg_.epochs * steps_per_epoch(); }
  std::uint64_t global_step() const { return step_; }
  bool done() const { return step_ >= total_steps(); }

  double lr_at(std::uint64_t step) const {
    return warmup_cosine(step, total_steps(), cfg_.optim.warmup_epochs * steps_per_epoch(), cfg_.optim.lr,
                         cfg_.optim.min_lr);
  }

  // Cosine ramp from ema_start to ema_end over the run.
  double momentum_at(std::uint64_t step) const {
    const double progress = static_cast<double>(step + 1) / static_cast<double>(total_steps());
    return cfg_.model.ema_end -
           (cfg_.model.ema_end - cfg_.model.ema_start) * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  }

  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg_.seed, {hash_string("shuffle"), epoch}));
    rng.shuffle(order);
    return order;
  }

  // Training-set indices consumed by `step`; the last batch of an epoch may be short.
  std::vector<std::size_t> batch_indices(std::uint64_t step) const {
    const auto order = epoch_order(step / steps_per_epoch());
    const std::size_t b0 = (step % steps_per_epoch()) * cfg_.batch_size;
    const std::size_t b1 = std::min(b0 + cfg_.batch_size, train_.size());
    return {order.begin() + static_cast<long>(b0), order.begin() + static_cast<long>(b1)};
  }

  PreparedSample<T> prepare(const PointCloud& source, Rng& rng) const {
    PreparedSample<T> s;
    const auto& mc = cfg_.model;
    if (mc.teacher_kind == TeacherKind::external_file) {
      // Stored features follow the unaugmented, extremal-start tokenization.
      s.patches = patchify(source, mc.m_tokens, mc.k_neighbors, extremal_start(source.points));
    } else {
      const PointCloud aug = normalize_unit_sphere(augment(source, rng, cfg_.augment));
      s.patches = patchify(aug, mc.m_tokens, mc.k_neighbors, rng);
    }
    s.patch_tensor = s.patches.template patches_tensor<T>();
    s.centers = s.patches.template centers_tensor<T>();
    const SamplerConfig sc = cfg_.sampler_config();
    s.plan = plan_blocks(s.patches.centers, sc, rng);
    check_plan(s.plan, sc);
    return s;
  }

  Rng sample_rng(std::uint64_t step, std::size_t slot) const {
    return Rng(derive_seed(cfg_.seed, {hash_string("sample"), step, slot}));
  }

  // Batch loss (mean of per-cloud losses) with one report per cloud. The
  // whole batch runs packed; no cloud attends to another.
  std::pair<Var<T>, std::vector<LossReport>> batch_loss(const std::vector<PreparedSample<T>>& samples,
                                                        const std::vector<std::string>& ids) const {
    const std::size_t nb = samples.size(), m = cfg_.model.m_tokens;
    std::vector<Tensor<T>> ctx_patches, all_patches, all_centers;
    std::vector<BlockPlan> plans;
    for (const auto& s : samples) {
      ctx_patches.push_back(gather_patches(s.patch_tensor, s.plan.context.indices));
      all_patches.push_back(s.patch_tensor);
      all_centers.push_back(s.centers);
      plans.push_back(s.plan);
    }
    const Tensor<T> centers = concat_rows(all_centers);
    const Var<T> tokens = model_.embed(concat_rows(ctx_patches));
    const auto packed = model_.predict_packed(tokens, model_.positions(centers), plans);
    const Var<T> proj = model_.project_student(packed.rows);

    Tensor<T> teacher;
    if (model_.has_teacher_network()) {
      teacher = model_.teacher_targets(concat_rows(all_patches), centers, m);
    } else {
      std::vector<Tensor<T>> feats;
      for (const auto& id : ids) feats.push_back(features_->template get<T>(id));
      teacher = model_.project_teacher(concat_rows(feats));
    }

    std::vector<Var<T>> losses;
    std::vector<LossReport> reports;
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<Var<T>> preds;
      std::vector<Tensor<T>> targets;
      for (std::size_t t = 0; t < plans[b].targets.size(); ++t) {
        const auto [first, count] = packed.blocks[b][t];
        preds.push_back(index_select(proj, iota_indices(first, count)));
        std::vector<std::size_t> rows;
        for (auto i : plans[b].targets[t].indices) rows.push_back(b * m + i);
        targets.push_back(index_select(Var<T>(teacher), rows).value());
      }
      auto rl = rec_loss(preds, targets);
      losses.push_back(reshape(rl.loss, {1}));
      reports.push_back(rl.report);
    }
    return {mean(concat<T>(losses, 0)), reports};
  }

  // One optimizer step over the next batch.
  LossReport step() {
    if (done()) throw ConfigError("pretrain: all " + std::to_string(total_steps()) + " steps already taken");
    const auto batch = batch_indices(step_);
    LossReport rep;
    rep.step = step_;
    rep.epoch = step_ / steps_per_epoch();
    rep.lr = lr_at(step_);
    rep.ema_momentum = momentum_at(step_);
    std::vector<PreparedSample<T>> samples;
    std::vector<std::string> ids;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Rng rng = sample_rng(step_, b);
      samples.push_back(prepare(train_[batch[b]], rng));
      ids.push_back(train_[batch[b]].id);
    }
    opt_.zero_grad();
    Var<T> loss;
    std::vector<LossReport> reports;
    try {
      std::tie(loss, reports) = batch_loss(samples, ids);
    } catch (const NumericError& e) {
      fail_non_finite(batch, samples, e.what());
    }
    for (std::size_t b = 0; b < batch.size(); ++b)
      if (!std::isfinite(reports[b].total))
        fail_non_finite(batch, samples, "loss " + std::to_string(reports[b].total) + " for cloud '" + ids[b] + "'");
    loss.backward();
    rep.total = static_cast<double>(loss.value().item());
    rep.per_block.assign(reports[0].per_block.size(), 0.0);
    for (const auto& r : reports)
      for (std::size_t i = 0; i < rep.per_block.size() && i < r.per_block.size(); ++i)
        rep.per_block[i] += r.per_block[i] / static_cast<double>(reports.size());
    opt_.set_lr(rep.lr);
    opt_.step();
    model_.update_teacher(rep.ema_momentum);
    ++step_;
    return rep;
  }

  Checkpoint checkpoint() const { return capture_checkpoint(model_, &opt_, cfg_, step_); }

  void resume(const Checkpoint& ck) {
    restore_checkpoint(ck, model_, &opt_);
    const std::uint64_t s = ck.meta_u64("global_step");
    if (ck.meta_u64("seed") != cfg_.seed)
      throw ConfigError("resume: checkpoint seed " + std::to_string(ck.meta_u64("seed")) + " differs from run seed " +
                        std::to_string(cfg_.seed));
    if (s > total_steps()) throw ConfigError("resume: checkpoint step is past the end of this run");
    step_ = s;
  }

  void set_dump_dir(std::string dir) { dump_dir_ = std::move(dir); }

 private:
  // Writes every plan of the failing batch so the step can be replayed.
  [[noreturn]] void fail_non_finite(const std::vector<std::size_t>& batch, const std::vector<PreparedSample<T>>& samples,
                                    const std::string& what) const {
    std::string dump = "seed\t" + std::to_string(cfg_.seed) + "\nstep\t" + std::to_string(step_) + "\nerror\t" + what + "\n";
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& plan = samples[b].plan;
      dump += "slot\t" + std::to_string(b) + "\ncloud\t" + train_[batch[b]].id + "\nstrategy\t" + to_string(plan.strategy) +
              "\ncontext";
      for (auto i : plan.context.indices) dump += "\t" + std::to_string(i);
      for (std::size_t t = 0; t < plan.targets.size(); ++t) {
        dump += "\ntarget_" + std::to_string(t);
        for (auto i : plan.targets[t].indices) dump += "\t" + std::to_string(i);
      }
      dump += "\n";
    }
    std::string where;
    if (!dump_dir_.empty()) {
      where = (std::filesystem::path(dump_dir_) / ("nonfinite_step" + std::to_string(step_) + ".tsv")).string();
      std::ofstream(where) << dump;
    }
    throw NumericError("non-finite loss at step " + std::to_string(step_) + " (seed " + std::to_string(cfg_.seed) +
                       "): " + what + (where.empty() ? "\n" + dump : "; replay data in " + where));
  }

  RunConfig cfg_;
  std::vector<PointCloud> train_;
  const FeatureStore* features_;
  JepaModel<T> model_;
  AdamW<T> opt_;
  std::uint64_t step_ = 0;
  std::string dump_dir_;
};

// Per-epoch mean of step losses, in epoch order.
inline std::vector<double> epoch_means(const std::vector<LossReport>& steps) {
  std::vector<double> sum, n;
  for (const auto& r : steps) {
    if (r.epoch >= sum.size()) {
      sum.resize(r.epoch + 1, 0.0);
      n.resize(r.epoch + 1, 0.0);
    }
    sum[r.epoch] += r.total;
    n[r.epoch] += 1;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = n[i] > 0 ? sum[i] / n[i] : 0.0;
  return sum;
}

}  // namespace jepa3d
