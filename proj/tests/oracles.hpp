#pragma once

// Slow, obviously-correct reference implementations used to cross-check the
// library. Nothing here calls into the code under test.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "jepa3d/geometry.hpp"

namespace jepa3d::testing {

inline double oracle_d2(const Point3& a, const Point3& b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

// Greedy max-min, recomputing every candidate's distance to the whole
// selected set at every step. O(N^2 m).
inline std::vector<std::size_t> oracle_fps(std::span<const Point3> pts, std::size_t m, std::size_t start) {
  std::vector<std::size_t> sel{start};
  while (sel.size() < m) {
    std::size_t best = pts.size();
    double best_d = -1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double dmin = INFINITY;
      for (auto s : sel) dmin = std::min(dmin, oracle_d2(pts[i], pts[s]));
      if (dmin > best_d) {
        best_d = dmin;
        best = i;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

// Full sort of every corpus point by (distance, index).
inline std::vector<std::size_t> oracle_knn(const Point3& q, std::span<const Point3> corpus, std::size_t k) {
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return oracle_d2(q, corpus[a]) < oracle_d2(q, corpus[b]); });
  order.resize(k);
  return order;
}

// Random cloud on a coarse integer lattice with forced duplicates, so that
// exact distance ties are common.
inline std::vector<Point3> tie_heavy_cloud(Rng& rng, std::size_t n) {
  std::vector<Point3> pts(n);
  for (auto& p : pts)
    for (auto& c : p) c = static_cast<double>(rng.index(5)) - 2.0;
  for (std::size_t i = 0; i < n / 4; ++i) pts[rng.index(n)] = pts[rng.index(n)];
  return pts;
}

inline std::vector<Point3> uniform_cloud(Rng& rng, std::size_t n) {
  std::vector<Point3> pts(n);
  for (auto& p : pts)
    for (auto& c : p) c = rng.uniform(-1, 1);
  return pts;
}

inline double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> x = a, y = b, inter, uni;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
  std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(uni));
  return uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

}  // namespace jepa3d::testing
