#pragma once

#include <string>
#include <vector>

#include "jepa3d/diff/ops.hpp"
#include "jepa3d/sampler.hpp"

namespace jepa3d {

// Teacher rows of every target block, in the block's index order.
template <class T>
std::vector<Tensor<T>> gather_targets(const Tensor<T>& teacher_out, const BlockPlan& plan) {
  if (teacher_out.rank() != 2) throw ShapeError("gather_targets: teacher output must be [M, C]");
  const std::size_t m = teacher_out.dim(0), c = teacher_out.dim(1);
  std::vector<Tensor<T>> out;
  out.reserve(plan.targets.size());
  for (const auto& t : plan.targets) {
    Tensor<T> rows({t.size(), c});
    for (std::size_t r = 0; r < t.size(); ++r) {
      const std::size_t i = t.indices[r];
      if (i >= m) throw ShapeError("gather_targets: index " + std::to_string(i) + " >= " + std::to_string(m) + " tokens");
      std::copy(teacher_out.data() + i * c, teacher_out.data() + (i + 1) * c, rows.data() + r * c);
    }
    out.push_back(std::move(rows));
  }
  return out;
}

// Mean over rows of 1 - cos(pred, target). The target is read as a constant.
template <class T>
Var<T> cosine_loss(const Var<T>& pred, const Tensor<T>& target) {
  return mean(cosine_distance_rows(pred, target));
}

template <class T>
Var<T> cosine_loss(const Var<T>& pred, const Var<T>& target) {
  return cosine_loss(pred, target.value());
}

struct LossReport {
  double total = 0.0;
  std::vector<double> per_block;
  std::vector<std::size_t> per_block_sizes;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double lr = 0.0;
  double ema_momentum = 0.0;
};

template <class T>
struct RecLoss {
  Var<T> loss;  // differentiable total
  LossReport report;
};

// Block losses averaged with weight 1/A, whatever the block sizes.
template <class T>
RecLoss<T> rec_loss(const std::vector<Var<T>>& pred_blocks, const std::vector<Tensor<T>>& target_blocks) {
  if (pred_blocks.size() != target_blocks.size())
    throw ShapeError("rec_loss: " + std::to_string(pred_blocks.size()) + " predicted blocks vs " +
                     std::to_string(target_blocks.size()) + " target blocks");
  if (pred_blocks.empty()) throw ShapeError("rec_loss: no blocks");
  RecLoss<T> out;
  std::vector<Var<T>> parts;
  for (std::size_t i = 0; i < pred_blocks.size(); ++i) {
    Var<T> l = cosine_loss(pred_blocks[i], target_blocks[i]);
    out.report.per_block.push_back(static_cast<double>(l.value().item()));
    out.report.per_block_sizes.push_back(pred_blocks[i].dim(0));
    parts.push_back(reshape(l, {1}));
  }
  out.loss = mean(concat<T>(parts, 0));
  out.report.total = static_cast<double>(out.loss.value().item());
  return out;
}

}  // namespace jepa3d
