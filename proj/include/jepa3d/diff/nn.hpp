#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jepa3d/diff/ops.hpp"
#include "jepa3d/random.hpp"

namespace jepa3d {

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
};

template <class T>
using ParameterList = std::vector<Parameter<T>>;

template <class T>
std::size_t parameter_count(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.size();
  return n;
}

template <class T>
void zero_grads(ParameterList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

template <class T>
Var<T> truncated_normal_parameter(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.truncated_normal(stddev));
  return Var<T>(std::move(t), true);
}

template <class T>
Var<T> constant_parameter(Shape shape, T value) {
  return Var<T>(Tensor<T>(std::move(shape), value), true);
}

// Affine map over the last dimension. Weight is stored [in, out].
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true)
      : weight_(truncated_normal_parameter<T>({in, out}, 0.02, rng)) {
    if (bias) bias_ = constant_parameter<T>({out}, T(0));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight_, bias_); }

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

  Var<T>& weight() { return weight_; }
  const Var<T>& weight() const { return weight_; }
  Var<T>& bias() { return bias_; }
  const Var<T>& bias() const { return bias_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
  }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim) : gain_(constant_parameter<T>({dim}, T(1))), bias_(constant_parameter<T>({dim}, T(0))) {}

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gain_, bias_); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain_});
    out.push_back({prefix + ".bias", bias_});
  }

 private:
  Var<T> gain_;
  Var<T> bias_;
};

// Two-layer perceptron with GELU in between.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) : fc1_(in, hidden, rng), fc2_(hidden, out, rng) {}

  Var<T> operator()(const Var<T>& x) const { return fc2_(gelu(fc1_(x))); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
};

// Multi-head scaled dot-product attention. Queries come from `query`
// [n, C]; keys and values from `memory` [s, C]. No masking; packed batches
// pass spans to keep sequences apart.
template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng)
      : heads_(heads), q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng), out_(dim, dim, rng) {
    if (heads == 0 || dim % heads != 0)
      throw ConfigError("attention: width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                        " heads");
  }

  Var<T> operator()(const Var<T>& query, const Var<T>& memory) const {
    if (query.rank() != 2 || memory.rank() != 2)
      throw ShapeError("attention: query " + shape_str(query.shape()) + " / memory " + shape_str(memory.shape()) +
                       " must be rank 2");
    return (*this)(query, memory, {AttentionSpan{0, query.dim(0), 0, memory.dim(0)}});
  }

  Var<T> operator()(const Var<T>& query, const Var<T>& memory, const std::vector<AttentionSpan>& spans) const {
    const std::size_t dim = q_.out_features();
    if (query.rank() != 2 || memory.rank() != 2 || query.dim(1) != dim || memory.dim(1) != dim)
      throw ShapeError("attention: query " + shape_str(query.shape()) + " / memory " + shape_str(memory.shape()) +
                       " do not have width " + std::to_string(dim));
    return out_(segment_attention(q_(query), k_(memory), v_(memory), heads_, spans));
  }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    q_.collect(out, prefix + ".q");
    k_.collect(out, prefix + ".k");
    v_.collect(out, prefix + ".v");
    out_.collect(out, prefix + ".out");
  }

 private:
  std::size_t heads_ = 1;
  Linear<T> q_, k_, v_, out_;
};

}  // namespace jepa3d
