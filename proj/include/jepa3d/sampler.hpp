#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "jepa3d/geometry.hpp"

namespace jepa3d {

enum class SamplingStrategy { multi_block, random_mask, block_mask };

inline std::string to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::multi_block:
      return "multi_block";
    case SamplingStrategy::random_mask:
      return "random_mask";
    case SamplingStrategy::block_mask:
      return "block_mask";
  }
  return "?";
}

inline SamplingStrategy parse_sampling_strategy(const std::string& s) {
  if (s == "multi_block") return SamplingStrategy::multi_block;
  if (s == "random_mask") return SamplingStrategy::random_mask;
  if (s == "block_mask") return SamplingStrategy::block_mask;
  throw ConfigError("unknown sampling strategy '" + s + "' (multi_block, random_mask, block_mask)");
}

struct SamplerConfig {
  SamplingStrategy strategy = SamplingStrategy::multi_block;
  std::size_t a_targets = 4;
  double target_scale_min = 0.15;
  double target_scale_max = 0.20;
  double context_scale_min = 0.85;
  double context_scale_max = 1.0;
  double mask_ratio = 0.25;
  int max_attempts = 8;

  void validate() const {
    if (a_targets < 1 || a_targets > 8) throw ConfigError("sampler: a_targets must lie in [1, 8]");
    if (!(0 < target_scale_min && target_scale_min <= target_scale_max && target_scale_max <= 1))
      throw ConfigError("sampler: target scale range must satisfy 0 < min <= max <= 1");
    if (!(0 < context_scale_min && context_scale_min <= context_scale_max && context_scale_max <= 1))
      throw ConfigError("sampler: context scale range must satisfy 0 < min <= max <= 1");
    if (!(0 < mask_ratio && mask_ratio < 1)) throw ConfigError("sampler: mask_ratio must lie in (0, 1)");
    if (max_attempts < 1) throw ConfigError("sampler: max_attempts must be >= 1");
  }
};

// Context and target token positions for one cloud.
struct BlockPlan {
  IndexSet context;                 // after overlap removal
  IndexSet context_before_removal;  // as sampled
  std::vector<IndexSet> targets;
  std::size_t fps_start = 0;        // first FPS index over the token centers
  SamplingStrategy strategy = SamplingStrategy::multi_block;

  std::size_t tokens() const { return context.universe; }
};

// Number of tokens a block of fractional scale `s` holds among `m`.
inline std::size_t block_size(double s, std::size_t m) {
  const auto n = static_cast<std::size_t>(std::lround(s * static_cast<double>(m)));
  return std::clamp<std::size_t>(n, 1, m);
}

inline IndexSet nearest_block(std::span<const Point3> centers, std::size_t anchor, std::size_t count) {
  const Point3 q = centers[anchor];
  auto grid = knn(std::span<const Point3>(&q, 1), centers, count);
  return IndexSet{grid.data, centers.size()};
}

// A target blocks: FPS picks the block centers among the token centers, then
// each block takes the round(s * M) nearest tokens, s ~ U(min, max) per block.
inline std::vector<IndexSet> sample_target_blocks(std::span<const Point3> centers, std::size_t a, double scale_min,
                                                  double scale_max, Rng& rng, std::size_t* fps_start = nullptr) {
  const std::size_t m = centers.size();
  if (a < 1) throw ConfigError("sampler: need at least one target block");
  if (a > m) throw ConfigError("sampler: " + std::to_string(a) + " target blocks exceed " + std::to_string(m) + " tokens");
  if (std::lround(scale_max * static_cast<double>(m)) < 1)
    throw ConfigError("sampler: " + std::to_string(m) + " tokens are too few for target scale " +
                      std::to_string(scale_max) + "; use more tokens");
  const std::size_t start = rng.index(m);
  if (fps_start) *fps_start = start;
  const IndexSet block_centers = farthest_point_sampling(centers, a, start);
  std::vector<IndexSet> blocks;
  blocks.reserve(a);
  for (auto c : block_centers.indices) {
    const double s = rng.uniform(scale_min, scale_max);
    blocks.push_back(nearest_block(centers, c, block_size(s, m)));
  }
  return blocks;
}

// One spatially coherent block: random anchor, round(s * M) nearest tokens.
inline IndexSet sample_context_block(std::span<const Point3> centers, double scale_min, double scale_max, Rng& rng) {
  const std::size_t m = centers.size();
  if (m < 2) throw ConfigError("sampler: context sampling needs at least 2 tokens");
  const double s = rng.uniform(scale_min, scale_max);
  const std::size_t anchor = rng.index(m);
  return nearest_block(centers, anchor, block_size(s, m));
}

// Context minus the union of all targets, original order preserved.
inline IndexSet resolve_overlap(const IndexSet& context, const std::vector<IndexSet>& targets) {
  std::vector<bool> hidden(context.universe, false);
  for (const auto& t : targets)
    for (auto i : t.indices) {
      if (i >= context.universe) throw ShapeError("resolve_overlap: target index out of range");
      hidden[i] = true;
    }
  IndexSet out{{}, context.universe};
  for (auto i : context.indices)
    if (!hidden[i]) out.indices.push_back(i);
  return out;
}

inline IndexSet complement(const IndexSet& s) {
  std::vector<bool> in(s.universe, false);
  for (auto i : s.indices) in[i] = true;
  IndexSet out{{}, s.universe};
  for (std::size_t i = 0; i < s.universe; ++i)
    if (!in[i]) out.indices.push_back(i);
  return out;
}

inline BlockPlan plan_multi_block(std::span<const Point3> centers, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    BlockPlan plan;
    plan.strategy = SamplingStrategy::multi_block;
    plan.targets =
        sample_target_blocks(centers, cfg.a_targets, cfg.target_scale_min, cfg.target_scale_max, rng, &plan.fps_start);
    plan.context_before_removal = sample_context_block(centers, cfg.context_scale_min, cfg.context_scale_max, rng);
    plan.context = resolve_overlap(plan.context_before_removal, plan.targets);
    if (!plan.context.empty()) return plan;
  }
  throw DataError("sampler: context block empty after overlap removal in " + std::to_string(cfg.max_attempts) +
                  " attempts");
}

// Ablation baselines: one target of round(ratio * M) tokens, context is
// its complement. random_mask draws positions uniformly; block_mask takes
// the nearest tokens around a random anchor.
inline BlockPlan sample_baseline(SamplingStrategy strategy, std::span<const Point3> centers, double mask_ratio,
                                 Rng& rng) {
  const std::size_t m = centers.size();
  if (!(0 < mask_ratio && mask_ratio < 1)) throw ConfigError("sampler: mask_ratio must lie in (0, 1)");
  if (m < 2) throw ConfigError("sampler: masking needs at least 2 tokens");
  const std::size_t n = std::min(block_size(mask_ratio, m), m - 1);
  BlockPlan plan;
  plan.strategy = strategy;
  IndexSet target{{}, m};
  if (strategy == SamplingStrategy::random_mask) {
    std::vector<std::size_t> all(m);
    for (std::size_t i = 0; i < m; ++i) all[i] = i;
    rng.shuffle(all);
    target.indices.assign(all.begin(), all.begin() + static_cast<long>(n));
  } else if (strategy == SamplingStrategy::block_mask) {
    plan.fps_start = rng.index(m);
    target = nearest_block(centers, plan.fps_start, n);
  } else {
    throw ConfigError("sample_baseline: strategy must be random_mask or block_mask");
  }
  plan.targets = {target};
  plan.context = complement(target);
  plan.context_before_removal = plan.context;
  return plan;
}

inline BlockPlan plan_blocks(std::span<const Point3> centers, const SamplerConfig& cfg, Rng& rng) {
  if (cfg.strategy == SamplingStrategy::multi_block) return plan_multi_block(centers, cfg, rng);
  return sample_baseline(cfg.strategy, centers, cfg.mask_ratio, rng);
}

// Throws DataError describing the first violated plan invariant.
inline void check_plan(const BlockPlan& plan, const SamplerConfig& cfg) {
  const std::size_t m = plan.context.universe;
  plan.context.validate("plan context");
  if (plan.context.empty()) throw DataError("plan: empty context");
  std::vector<bool> ctx(m, false);
  for (auto i : plan.context.indices) ctx[i] = true;
  for (std::size_t b = 0; b < plan.targets.size(); ++b) {
    const auto& t = plan.targets[b];
    if (t.universe != m) throw DataError("plan: target universe mismatch");
    t.validate("plan target");
    for (auto i : t.indices)
      if (ctx[i]) throw DataError("plan: token " + std::to_string(i) + " in context and target " + std::to_string(b));
    if (plan.strategy == SamplingStrategy::multi_block) {
      const std::size_t lo = block_size(cfg.target_scale_min, m), hi = block_size(cfg.target_scale_max, m);
      if (t.size() < lo || t.size() > hi)
        throw DataError("plan: target " + std::to_string(b) + " has " + std::to_string(t.size()) +
                        " tokens, outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
  if (plan.strategy == SamplingStrategy::multi_block) {
    if (plan.targets.size() != cfg.a_targets) throw DataError("plan: wrong number of target blocks");
    const std::size_t lo = block_size(cfg.context_scale_min, m);
    if (plan.context_before_removal.size() < lo || plan.context_before_removal.size() > m)
      throw DataError("plan: sampled context size outside range");
  }
}

}  // namespace jepa3d
