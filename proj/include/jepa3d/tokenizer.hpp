#pragma once

#include <string>
#include <vector>

#include "jepa3d/diff/nn.hpp"
#include "jepa3d/geometry.hpp"

namespace jepa3d {

// FPS centers plus their K-NN groups, with members stored relative to the
// owning center: offsets[i * k + j] + centers[i] is an original point.
struct PatchSet {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<Point3> centers;
  std::vector<Point3> offsets;
  IndexSet center_indices;  // into the source cloud, FPS order
  IndexGrid members;        // [m, k] source indices

  template <class T>
  Tensor<T> centers_tensor() const {
    Tensor<T> t({m, 3});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t d = 0; d < 3; ++d) t[i * 3 + d] = static_cast<T>(centers[i][d]);
    return t;
  }

  template <class T>
  Tensor<T> patches_tensor() const {
    Tensor<T> t({m, k, 3});
    for (std::size_t i = 0; i < m * k; ++i)
      for (std::size_t d = 0; d < 3; ++d) t[i * 3 + d] = static_cast<T>(offsets[i][d]);
    return t;
  }
};

inline PatchSet patchify(const PointCloud& pc, std::size_t m, std::size_t k, std::size_t fps_start) {
  PatchSet out;
  out.m = m;
  out.k = k;
  out.center_indices = farthest_point_sampling(pc.points, m, fps_start);
  for (auto i : out.center_indices.indices) out.centers.push_back(pc.points[i]);
  out.members = knn(out.centers, pc.points, k);
  out.offsets.resize(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const auto& p = pc.points[out.members(i, j)];
      for (int d = 0; d < 3; ++d) out.offsets[i * k + j][d] = p[d] - out.centers[i][d];
    }
  return out;
}

inline PatchSet patchify(const PointCloud& pc, std::size_t m, std::size_t k, Rng& rng) {
  if (pc.points.empty()) throw DataError("cloud '" + pc.id + "': no points");
  return patchify(pc, m, k, rng.index(pc.size()));
}

// Stacks several patch sets into one [sum m, k, 3] batch for the embedder.
template <class T>
Tensor<T> stack_patches(const std::vector<PatchSet>& sets) {
  if (sets.empty()) throw ShapeError("stack_patches: empty batch");
  const std::size_t k = sets[0].k;
  std::size_t rows = 0;
  for (const auto& s : sets) {
    if (s.k != k) throw ShapeError("stack_patches: mixed patch sizes");
    rows += s.m;
  }
  Tensor<T> t({rows, k, 3});
  std::size_t off = 0;
  for (const auto& s : sets)
    for (const auto& p : s.offsets)
      for (int d = 0; d < 3; ++d) t[off++] = static_cast<T>(p[d]);
  return t;
}

template <class T>
Tensor<T> stack_centers(const std::vector<PatchSet>& sets) {
  std::size_t rows = 0;
  for (const auto& s : sets) rows += s.m;
  Tensor<T> t({rows, 3});
  std::size_t off = 0;
  for (const auto& s : sets)
    for (const auto& c : s.centers)
      for (int d = 0; d < 3; ++d) t[off++] = static_cast<T>(c[d]);
  return t;
}

struct EmbedderWidths {
  std::size_t first = 64;    // per-point 3 -> 64
  std::size_t second = 128;  // 64 -> 128, max-pooled and concatenated back
  std::size_t third = 256;   // 2 * second -> 256 -> C
};

// Lightweight PointNet over each patch: shared per-point MLP, max-pool,
// concatenate the pooled vector back onto every point, second shared MLP,
// final max-pool over the K points.
template <class T>
class PatchEmbedder {
 public:
  PatchEmbedder() = default;
  PatchEmbedder(std::size_t dim, EmbedderWidths widths, Rng& rng)
      : dim_(dim),
        first_a_(3, widths.first, rng),
        first_b_(widths.first, widths.second, rng),
        second_a_(2 * widths.second, widths.third, rng),
        second_b_(widths.third, dim, rng) {}

  // patches [P, K, 3] -> tokens [P, C]
  Var<T> operator()(const Var<T>& patches) const {
    if (patches.rank() != 3 || patches.dim(2) != 3)
      throw ShapeError("embed_patches: expected [P, K, 3], got " + shape_str(patches.shape()));
    const std::size_t p = patches.dim(0), k = patches.dim(1);
    Var<T> local = first_b_(gelu(first_a_(patches)));  // [P, K, h2]
    const std::size_t h2 = local.dim(2);
    Var<T> pooled = broadcast_to(reshape(max(local, 1), {p, 1, h2}), {p, k, h2});
    Var<T> joint = concat<T>({pooled, local}, 2);        // [P, K, 2 h2]
    Var<T> feat = second_b_(gelu(second_a_(joint)));      // [P, K, C]
    return max(feat, 1);
  }

  std::size_t dim() const { return dim_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    first_a_.collect(out, prefix + ".mlp1.fc1");
    first_b_.collect(out, prefix + ".mlp1.fc2");
    second_a_.collect(out, prefix + ".mlp2.fc1");
    second_b_.collect(out, prefix + ".mlp2.fc2");
  }

 private:
  std::size_t dim_ = 0;
  Linear<T> first_a_, first_b_, second_a_, second_b_;
};

// Learned positional embedding of patch centers: 3 -> 128 -> C.
template <class T>
class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(std::size_t dim, Rng& rng, std::size_t hidden = 128) : mlp_(3, hidden, dim, rng) {}

  Var<T> operator()(const Var<T>& centers) const {
    if (centers.rank() != 2 || centers.dim(1) != 3)
      throw ShapeError("positional_embedding: expected [M, 3], got " + shape_str(centers.shape()));
    return mlp_(centers);
  }

  void collect(ParameterList<T>& out, const std::string& prefix) const { mlp_.collect(out, prefix); }

 private:
  Mlp<T> mlp_;
};

template <class T>
struct TokenizedCloud {
  Var<T> tokens;       // [M, C]
  Tensor<T> centers;   // [M, 3]
  Tensor<T> patches;   // [M, K, 3] center-relative
  std::string source_id;
};

template <class T>
TokenizedCloud<T> tokenize(const PatchSet& patches, const PatchEmbedder<T>& embedder, std::string source_id) {
  TokenizedCloud<T> out;
  out.patches = patches.patches_tensor<T>();
  out.centers = patches.centers_tensor<T>();
  out.tokens = embedder(Var<T>(out.patches));
  out.source_id = std::move(source_id);
  return out;
}

}  // namespace jepa3d
