#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "jepa3d/diff/nn.hpp"

namespace jepa3d {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// AdamW with decoupled weight decay and bias-corrected moments.
template <class T>
class AdamW {
 public:
  AdamW(ParameterList<T> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      first_.emplace_back(p.var.shape());
      second_.emplace_back(p.var.shape());
    }
  }

  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

  const ParameterList<T>& parameters() const { return params_; }
  Tensor<T>& first_moment(std::size_t i) { return first_[i]; }
  Tensor<T>& second_moment(std::size_t i) { return second_[i]; }
  const Tensor<T>& first_moment(std::size_t i) const { return first_[i]; }
  const Tensor<T>& second_moment(std::size_t i) const { return second_[i]; }

  void zero_grad() { zero_grads(params_); }

  void step() {
    std::string missing;
    for (const auto& p : params_)
      if (!p.var.has_grad()) missing += (missing.empty() ? "" : ", ") + p.name;
    if (!missing.empty()) throw ShapeError("adamw: no gradient for parameter(s): " + missing);

    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    const double decay = 1.0 - config_.lr * config_.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].var.mutable_value();
      const auto& g = params_[i].var.grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        const double mj = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
        const double vj = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double update = (mj / bc1) / (std::sqrt(vj / bc2) + config_.eps);
        w[j] = static_cast<T>(w[j] * decay - config_.lr * update);
      }
    }
  }

 private:
  ParameterList<T> params_;
  AdamWConfig config_;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
  std::uint64_t step_ = 0;
};

// teacher <- momentum * teacher + (1 - momentum) * student, matched by name.
template <class T>
void ema_update(ParameterList<T>& teacher, const ParameterList<T>& student, double momentum) {
  if (momentum < 0.0 || momentum > 1.0) throw ConfigError("ema: momentum must lie in [0, 1]");
  if (teacher.size() != student.size())
    throw ShapeError("ema: teacher has " + std::to_string(teacher.size()) + " parameters, student " +
                     std::to_string(student.size()));
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].name != student[i].name || teacher[i].var.shape() != student[i].var.shape())
      throw ShapeError("ema: parameter mismatch " + teacher[i].name + shape_str(teacher[i].var.shape()) + " vs " +
                       student[i].name + shape_str(student[i].var.shape()));
    auto& t = teacher[i].var.mutable_value();
    const auto& s = student[i].var.value();
    if (momentum == 1.0) continue;
    if (momentum == 0.0) {
      t = s;
      continue;
    }
    const T m = static_cast<T>(momentum), r = static_cast<T>(1.0 - momentum);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = m * t[j] + r * s[j];
  }
}

// Linear warmup to `base`, then cosine decay to `final_value`.
inline double warmup_cosine(std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps, double base,
                            double final_value) {
  if (warmup_steps > 0 && step < warmup_steps)
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps));
  return final_value + 0.5 * (base - final_value) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace jepa3d
