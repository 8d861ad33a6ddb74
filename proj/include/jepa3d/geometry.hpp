#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jepa3d/errors.hpp"
#include "jepa3d/random.hpp"

namespace jepa3d {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::optional<int> label;
  std::string id;

  std::size_t size() const { return points.size(); }
};

// Ordered, duplicate-free indices into [0, universe).
struct IndexSet {
  std::vector<std::size_t> indices;
  std::size_t universe = 0;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  bool contains(std::size_t i) const { return std::find(indices.begin(), indices.end(), i) != indices.end(); }

  // Throws if any index is out of range or repeated.
  void validate(const char* what = "index set") const {
    std::vector<bool> seen(universe, false);
    for (auto i : indices) {
      if (i >= universe)
        throw ShapeError(std::string(what) + ": index " + std::to_string(i) + " >= universe " +
                         std::to_string(universe));
      if (seen[i]) throw ShapeError(std::string(what) + ": duplicate index " + std::to_string(i));
      seen[i] = true;
    }
  }

  friend bool operator==(const IndexSet&, const IndexSet&) = default;
};

// Row-major [rows, cols] table of indices, as produced by knn.
struct IndexGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> data;

  std::span<const std::size_t> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

inline void require_finite(const PointCloud& pc) {
  for (std::size_t i = 0; i < pc.points.size(); ++i)
    for (double c : pc.points[i])
      if (!std::isfinite(c))
        throw DataError("cloud '" + pc.id + "': non-finite coordinate at point " + std::to_string(i));
}

// Centers at the origin and scales the farthest point to radius 1.
// An all-identical cloud maps to all zeros.
inline PointCloud normalize_unit_sphere(const PointCloud& pc) {
  if (pc.points.empty()) throw DataError("cloud '" + pc.id + "': no points");
  require_finite(pc);
  Point3 centroid{0, 0, 0};
  for (const auto& p : pc.points)
    for (int d = 0; d < 3; ++d) centroid[d] += p[d];
  for (auto& c : centroid) c /= static_cast<double>(pc.points.size());
  PointCloud out = pc;
  double radius = 0;
  for (auto& p : out.points) {
    for (int d = 0; d < 3; ++d) p[d] -= centroid[d];
    radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (radius > 0)
    for (auto& p : out.points)
      for (auto& c : p) c /= radius;
  return out;
}

struct AugmentPolicy {
  double scale_min = 1.0;
  double scale_max = 1.0;
  bool rotate = false;
  bool full_rotation = false;  // uniform SO(3) instead of up-axis only
  double translate_min = 0.0;
  double translate_max = 0.0;

  void validate() const {
    if (!(scale_min > 0) || !(scale_max > 0)) throw ConfigError("augment: scale range must be positive");
    if (scale_min > scale_max) throw ConfigError("augment: scale range has min > max");
    if (translate_min > translate_max) throw ConfigError("augment: translate range has min > max");
    if (!std::isfinite(scale_max) || !std::isfinite(translate_min) || !std::isfinite(translate_max))
      throw ConfigError("augment: ranges must be finite");
  }
};

using Rotation = std::array<std::array<double, 3>, 3>;

// Rotation about the y (up) axis.
inline Rotation up_axis_rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}

// Uniform random rotation from a uniform unit quaternion.
inline Rotation random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(2 * std::numbers::pi * u2), x = a * std::cos(2 * std::numbers::pi * u2);
  const double y = b * std::sin(2 * std::numbers::pi * u3), z = b * std::cos(2 * std::numbers::pi * u3);
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

// Anisotropic scale, then rotation, then translation.
inline PointCloud augment(const PointCloud& pc, Rng& rng, const AugmentPolicy& policy) {
  policy.validate();
  Point3 s{};
  for (auto& v : s) v = rng.uniform(policy.scale_min, policy.scale_max);
  std::optional<Rotation> rot;
  if (policy.rotate)
    rot = policy.full_rotation ? random_rotation(rng) : up_axis_rotation(rng.uniform(0, 2 * std::numbers::pi));
  Point3 t{};
  for (auto& v : t) v = rng.uniform(policy.translate_min, policy.translate_max);

  PointCloud out = pc;
  for (auto& p : out.points) {
    Point3 q{p[0] * s[0], p[1] * s[1], p[2] * s[2]};
    if (rot) {
      const auto& r = *rot;
      q = {r[0][0] * q[0] + r[0][1] * q[1] + r[0][2] * q[2], r[1][0] * q[0] + r[1][1] * q[1] + r[1][2] * q[2],
           r[2][0] * q[0] + r[2][1] * q[1] + r[2][2] * q[2]};
    }
    for (int d = 0; d < 3; ++d) p[d] = q[d] + t[d];
  }
  return out;
}

// Greedy max-min selection starting at `start`. Each next index maximizes
// its squared distance to the selected set; ties go to the lowest index.
inline IndexSet farthest_point_sampling(std::span<const Point3> points, std::size_t m, std::size_t start) {
  const std::size_t n = points.size();
  if (m == 0) throw ConfigError("fps: sample count must be positive");
  if (m > n) throw ConfigError("fps: cannot pick " + std::to_string(m) + " of " + std::to_string(n) + " points");
  if (start >= n) throw ConfigError("fps: start index out of range");
  IndexSet out{{}, n};
  out.indices.reserve(m);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::size_t current = start;
  for (std::size_t s = 0; s < m; ++s) {
    out.indices.push_back(current);
    taken[current] = true;
    if (s + 1 == m) break;
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d[i] = std::min(min_d[i], squared_distance(points[i], points[current]));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

// FPS with the first index drawn uniformly from `rng`; the start is indices[0].
inline IndexSet farthest_point_sampling(std::span<const Point3> points, std::size_t m, Rng& rng) {
  if (points.empty()) throw ConfigError("fps: empty point set");
  return farthest_point_sampling(points, m, rng.index(points.size()));
}

// Order-independent start: the point farthest from the origin, ties broken
// by the lexicographically largest coordinates.
inline std::size_t extremal_start(std::span<const Point3> points) {
  std::size_t best = 0;
  double best_d = -1;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const double d = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    if (d > best_d || (d == best_d && p > points[best])) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

// For every query, the k nearest corpus indices by Euclidean distance in
// nondecreasing order. Exact ties resolve to the lower corpus index.
inline IndexGrid knn(std::span<const Point3> queries, std::span<const Point3> corpus, std::size_t k) {
  const std::size_t n = corpus.size();
  if (k == 0) throw ConfigError("knn: k must be positive");
  if (k > n) throw ConfigError("knn: k = " + std::to_string(k) + " exceeds corpus size " + std::to_string(n));
  IndexGrid out{queries.size(), k, std::vector<std::size_t>(queries.size() * k)};
  std::vector<std::pair<double, std::size_t>> cand(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t i = 0; i < n; ++i) cand[i] = {squared_distance(queries[q], corpus[i]), i};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end());
    for (std::size_t j = 0; j < k; ++j) out.data[q * k + j] = cand[j].second;
  }
  return out;
}

// Brings a cloud to exactly `count` points: FPS from the extremal start when
// it has more, all points plus uniform draws with replacement when fewer.
inline PointCloud resample(const PointCloud& pc, std::size_t count, Rng& rng) {
  if (pc.points.empty()) throw DataError("cloud '" + pc.id + "': no points");
  if (count == 0) throw ConfigError("resample: point count must be positive");
  PointCloud out = pc;
  if (pc.size() == count) return out;
  out.points.clear();
  if (pc.size() > count) {
    for (auto i : farthest_point_sampling(pc.points, count, extremal_start(pc.points)).indices)
      out.points.push_back(pc.points[i]);
  } else {
    out.points = pc.points;
    while (out.points.size() < count) out.points.push_back(pc.points[rng.index(pc.size())]);
  }
  return out;
}

}  // namespace jepa3d
