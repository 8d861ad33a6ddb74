#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "jepa3d/geometry.hpp"

namespace jepa3d {

enum class ShapeClass { sphere, box, cylinder, torus, plane, cone };

inline const std::vector<ShapeClass>& all_shape_classes() {
  static const std::vector<ShapeClass> v{ShapeClass::sphere, ShapeClass::box,   ShapeClass::cylinder,
                                         ShapeClass::torus,  ShapeClass::plane, ShapeClass::cone};
  return v;
}

inline std::string to_string(ShapeClass c) {
  static const char* names[] = {"sphere", "box", "cylinder", "torus", "plane", "cone"};
  return names[static_cast<int>(c)];
}

struct Dataset {
  std::vector<PointCloud> train, val, test;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

struct SyntheticShapeSpec {
  std::vector<ShapeClass> classes = all_shape_classes();
  std::size_t per_class = 200;
  std::size_t points = 512;
  double jitter = 0.01;     // Gaussian std, before normalization
  double anisotropy = 0.0;  // per-axis stretch drawn from [1 - a, 1 + a]
  double occlusion = 0.0;   // fraction of the surface cut away by a random half-space
  double outliers = 0.0;    // fraction of points replaced by uniform clutter

  void validate() const {
    if (per_class == 0 || points == 0 || classes.empty())
      throw ConfigError("synthetic: per_class, points and classes must be nonempty");
    if (!(jitter >= 0) || !(0 <= anisotropy && anisotropy < 1) || !(0 <= occlusion && occlusion < 1) ||
        !(0 <= outliers && outliers < 1))
      throw ConfigError("synthetic: jitter >= 0 and anisotropy, occlusion, outliers in [0, 1) required");
  }
};

namespace synth_detail {

inline Point3 on_sphere(Rng& rng, double r) {
  const double z = rng.uniform(-1, 1), phi = rng.uniform(0, 2 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1 - z * z));
  return {r * s * std::cos(phi), r * z, r * s * std::sin(phi)};
}

// Surface of an axis-aligned box with half extents (a, b, c).
inline Point3 on_box(Rng& rng, double a, double b, double c) {
  const double areas[3] = {b * c, a * c, a * b};  // faces normal to x, y, z
  const double u = rng.uniform(0, areas[0] + areas[1] + areas[2]);
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double s = rng.uniform(-1, 1), t = rng.uniform(-1, 1);
  if (u < areas[0]) return {sign * a, s * b, t * c};
  if (u < areas[0] + areas[1]) return {s * a, sign * b, t * c};
  return {s * a, t * b, sign * c};
}

inline Point3 on_cylinder(Rng& rng, double r, double h) {
  const double side = 2 * std::numbers::pi * r * h, cap = std::numbers::pi * r * r;
  const double phi = rng.uniform(0, 2 * std::numbers::pi);
  const double u = rng.uniform(0, side + 2 * cap);
  if (u < side) return {r * std::cos(phi), rng.uniform(-h / 2, h / 2), r * std::sin(phi)};
  const double rr = r * std::sqrt(rng.uniform());
  return {rr * std::cos(phi), u < side + cap ? h / 2 : -h / 2, rr * std::sin(phi)};
}

// Area-uniform torus in the xz plane by rejection on the tube angle.
inline Point3 on_torus(Rng& rng, double big, double small) {
  for (;;) {
    const double u = rng.uniform(0, 2 * std::numbers::pi), v = rng.uniform(0, 2 * std::numbers::pi);
    if (rng.uniform(0, big + small) <= big + small * std::cos(v)) {
      const double w = big + small * std::cos(v);
      return {w * std::cos(u), small * std::sin(v), w * std::sin(u)};
    }
  }
}

inline Point3 on_plane(Rng& rng, double w, double d) { return {rng.uniform(-w / 2, w / 2), 0.0, rng.uniform(-d / 2, d / 2)}; }

// Cone with apex up, base disk at -h/2.
inline Point3 on_cone(Rng& rng, double r, double h) {
  const double slant = std::sqrt(r * r + h * h);
  const double side = std::numbers::pi * r * slant, base = std::numbers::pi * r * r;
  const double phi = rng.uniform(0, 2 * std::numbers::pi);
  const double rr = r * std::sqrt(rng.uniform());
  if (rng.uniform(0, side + base) < side) return {rr * std::cos(phi), h / 2 - h * rr / r, rr * std::sin(phi)};
  return {rr * std::cos(phi), -h / 2, rr * std::sin(phi)};
}

}  // namespace synth_detail

// One raw, un-normalized shape centered near the origin, y up.
inline std::vector<Point3> sample_shape(ShapeClass cls, std::size_t n, double jitter, Rng& rng) {
  using namespace synth_detail;
  std::vector<Point3> pts;
  pts.reserve(n);
  const double p0 = rng.uniform(), p1 = rng.uniform(), p2 = rng.uniform();
  auto lerp = [](double lo, double hi, double t) { return lo + (hi - lo) * t; };
  for (std::size_t i = 0; i < n; ++i) {
    Point3 p{};
    switch (cls) {
      case ShapeClass::sphere:
        p = on_sphere(rng, lerp(0.5, 1.5, p0));
        break;
      case ShapeClass::box:
        p = on_box(rng, lerp(0.3, 1.0, p0), lerp(0.3, 1.0, p1), lerp(0.3, 1.0, p2));
        break;
      case ShapeClass::cylinder:
        p = on_cylinder(rng, lerp(0.3, 0.8, p0), lerp(0.6, 2.0, p1));
        break;
      case ShapeClass::torus:
        p = on_torus(rng, lerp(0.6, 1.0, p0), lerp(0.15, 0.4, p1));
        break;
      case ShapeClass::plane:
        p = on_plane(rng, lerp(0.5, 1.5, p0), lerp(0.5, 1.5, p1));
        break;
      case ShapeClass::cone:
        p = on_cone(rng, lerp(0.4, 1.0, p0), lerp(0.6, 2.0, p1));
        break;
    }
    pts.push_back(p);
  }
  if (jitter > 0)
    for (auto& p : pts)
      for (auto& c : p) c += jitter * rng.normal();
  return pts;
}

inline std::string cloud_id(const std::string& cls, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return cls + "_" + buf;
}

// Seeded 70/15/15 split of a labeled collection.
inline Dataset split_dataset(std::vector<PointCloud> all, std::vector<std::string> class_names, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {hash_string("split")}));
  rng.shuffle(all);
  const std::size_t n = all.size();
  const auto n_train = static_cast<std::size_t>(std::lround(0.70 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n)));
  Dataset ds;
  ds.class_names = std::move(class_names);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? ds.train : (i < n_train + n_val ? ds.val : ds.test);
    dst.push_back(std::move(all[i]));
  }
  return ds;
}

// Shape, stretch, cut, clutter and jitter for one cloud, in that order.
inline std::vector<Point3> synthetic_points(ShapeClass cls, const SyntheticShapeSpec& spec, Rng& rng) {
  const std::size_t raw = static_cast<std::size_t>(std::ceil(static_cast<double>(spec.points) / (1.0 - spec.occlusion)));
  std::vector<Point3> pts = sample_shape(cls, raw, 0.0, rng);
  if (spec.anisotropy > 0) {
    Point3 s;
    for (auto& v : s) v = rng.uniform(1 - spec.anisotropy, 1 + spec.anisotropy);
    for (auto& p : pts)
      for (int d = 0; d < 3; ++d) p[d] *= s[d];
  }
  if (raw > spec.points) {
    // Keep the points least far along a random direction: a one-sided view.
    const Point3 dir = synth_detail::on_sphere(rng, 1.0);
    std::vector<std::pair<double, std::size_t>> key(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
      key[i] = {pts[i][0] * dir[0] + pts[i][1] * dir[1] + pts[i][2] * dir[2], i};
    std::sort(key.begin(), key.end());
    std::vector<Point3> kept;
    for (std::size_t i = 0; i < spec.points; ++i) kept.push_back(pts[key[i].second]);
    pts = std::move(kept);
  }
  if (spec.outliers > 0) {
    Point3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts)
      for (int d = 0; d < 3; ++d) lo[d] = std::min(lo[d], p[d]), hi[d] = std::max(hi[d], p[d]);
    const auto n_out = static_cast<std::size_t>(std::lround(spec.outliers * static_cast<double>(pts.size())));
    for (std::size_t i = 0; i < n_out; ++i) {
      auto& p = pts[rng.index(pts.size())];
      for (int d = 0; d < 3; ++d) p[d] = rng.uniform(lo[d], hi[d]);
    }
  }
  if (spec.jitter > 0)
    for (auto& p : pts)
      for (auto& c : p) c += spec.jitter * rng.normal();
  return pts;
}

// Each cloud is turned about the up axis by a random angle and normalized
// to the unit sphere.
inline Dataset generate_synthetic(const SyntheticShapeSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<PointCloud> all;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    names.push_back(to_string(spec.classes[c]));
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Rng rng(derive_seed(seed, {hash_string("shape"), c, i}));
      PointCloud pc;
      pc.points = synthetic_points(spec.classes[c], spec, rng);
      const Rotation r = up_axis_rotation(rng.uniform(0, 2 * std::numbers::pi));
      for (auto& p : pc.points)
        p = {r[0][0] * p[0] + r[0][2] * p[2], p[1], r[2][0] * p[0] + r[2][2] * p[2]};
      pc.label = static_cast<int>(c);
      pc.id = cloud_id(names.back(), i);
      all.push_back(normalize_unit_sphere(pc));
    }
  }
  return split_dataset(std::move(all), std::move(names), seed);
}

}  // namespace jepa3d
