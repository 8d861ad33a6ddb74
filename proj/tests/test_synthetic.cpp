#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "jepa3d/synthetic.hpp"

using namespace jepa3d;

TEST(Synthetic, ZeroJitterSphereHasConstantRadius) {
  Rng rng(1);
  auto pts = sample_shape(ShapeClass::sphere, 500, 0.0, rng);
  const double r = std::sqrt(pts[0][0] * pts[0][0] + pts[0][1] * pts[0][1] + pts[0][2] * pts[0][2]);
  EXPECT_GE(r, 0.5);
  EXPECT_LE(r, 1.5);
  for (const auto& p : pts) EXPECT_NEAR(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]), r, 1e-6);
}

TEST(Synthetic, ZeroJitterSurfacesSatisfyTheirEquations) {
  Rng rng(2);
  for (const auto& p : sample_shape(ShapeClass::plane, 200, 0.0, rng)) EXPECT_EQ(p[1], 0.0);
  auto box = sample_shape(ShapeClass::box, 300, 0.0, rng);
  Point3 half{};
  for (const auto& p : box)
    for (int d = 0; d < 3; ++d) half[d] = std::max(half[d], std::abs(p[d]));
  for (const auto& p : box) {
    bool on_face = false;
    for (int d = 0; d < 3; ++d) on_face |= std::abs(std::abs(p[d]) - half[d]) < 1e-12;
    EXPECT_TRUE(on_face);
  }
  auto cyl = sample_shape(ShapeClass::cylinder, 400, 0.0, rng);
  double rmax = 0;
  for (const auto& p : cyl) rmax = std::max(rmax, std::hypot(p[0], p[2]));
  for (const auto& p : cyl) {
    const double rho = std::hypot(p[0], p[2]);
    EXPECT_LE(rho, rmax + 1e-12);
  }
}

TEST(Synthetic, SplitSizesIdsAndDeterminism) {
  SyntheticShapeSpec spec;
  spec.points = 64;
  auto a = generate_synthetic(spec, 7);
  EXPECT_EQ(a.num_classes(), 6u);
  EXPECT_EQ(a.train.size(), 840u);
  EXPECT_EQ(a.val.size(), 180u);
  EXPECT_EQ(a.test.size(), 180u);
  std::set<std::string> ids;
  for (auto* part : {&a.train, &a.val, &a.test})
    for (const auto& pc : *part) {
      ids.insert(pc.id);
      ASSERT_TRUE(pc.label.has_value());
      EXPECT_EQ(pc.id.rfind(a.class_names[static_cast<std::size_t>(*pc.label)] + "_", 0), 0u);
      double r = 0;
      for (const auto& p : pc.points) r = std::max(r, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
      EXPECT_NEAR(r, 1.0, 1e-9);
    }
  EXPECT_EQ(ids.size(), 1200u);
  EXPECT_TRUE(ids.count("sphere_0000"));
  auto b = generate_synthetic(spec, 7);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    EXPECT_EQ(a.train[i].points, b.train[i].points);
  }
  auto c = generate_synthetic(spec, 8);
  EXPECT_NE(a.train[0].points, c.train[0].points);
}

TEST(Synthetic, EveryClassInEverySplit) {
  SyntheticShapeSpec spec;
  spec.points = 32;
  spec.per_class = 50;
  auto ds = generate_synthetic(spec, 3);
  for (auto* part : {&ds.train, &ds.val, &ds.test}) {
    std::set<int> labels;
    for (const auto& pc : *part) labels.insert(*pc.label);
    EXPECT_EQ(labels.size(), 6u);
  }
}

namespace {

double radius(const Point3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

SyntheticShapeSpec clean_sphere(std::size_t points) {
  SyntheticShapeSpec spec;
  spec.points = points;
  spec.jitter = 0.0;
  return spec;
}

}  // namespace

TEST(SyntheticDifficulty, KnobsKeepCountAndDeterminism) {
  SyntheticShapeSpec spec;
  spec.points = 300;
  spec.anisotropy = 0.4;
  spec.occlusion = 0.4;
  spec.outliers = 0.1;
  for (auto cls : all_shape_classes()) {
    Rng a(5), b(5);
    const auto pa = synthetic_points(cls, spec, a);
    EXPECT_EQ(pa.size(), 300u);
    EXPECT_EQ(pa, synthetic_points(cls, spec, b));
  }
  Rng a(5), b(5);
  SyntheticShapeSpec plain;
  plain.points = 300;
  EXPECT_NE(synthetic_points(ShapeClass::torus, spec, a), synthetic_points(ShapeClass::torus, plain, b));
}

TEST(SyntheticDifficulty, ZeroKnobsMatchPlainSampling) {
  SyntheticShapeSpec spec;
  spec.points = 100;
  Rng a(9), b(9);
  EXPECT_EQ(synthetic_points(ShapeClass::cone, spec, a), sample_shape(ShapeClass::cone, 100, spec.jitter, b));
}

TEST(SyntheticDifficulty, AnisotropyStretchIsBounded) {
  auto spec = clean_sphere(400);
  spec.anisotropy = 0.3;
  Rng rng(3);
  const auto pts = synthetic_points(ShapeClass::sphere, spec, rng);
  double lo = 1e9, hi = 0;
  for (const auto& p : pts) lo = std::min(lo, radius(p)), hi = std::max(hi, radius(p));
  EXPECT_GT(hi / lo, 1.01);
  EXPECT_LE(hi / lo, 1.3 / 0.7 + 1e-9);
}

TEST(SyntheticDifficulty, OcclusionKeepsOneSide) {
  auto spec = clean_sphere(400);
  spec.occlusion = 0.5;
  Rng rng(4);
  const auto pts = synthetic_points(ShapeClass::sphere, spec, rng);
  Point3 c{};
  for (const auto& p : pts)
    for (int d = 0; d < 3; ++d) c[d] += p[d] / 400.0;
  // A full sphere has its centroid at the origin; a hemisphere sits R/2 off it.
  EXPECT_GT(radius(c), 0.35 * radius(pts[0]));
}

TEST(SyntheticDifficulty, OutlierFractionLeavesTheSurface) {
  auto spec = clean_sphere(500);
  spec.outliers = 0.2;
  Rng rng(5);
  const auto pts = synthetic_points(ShapeClass::sphere, spec, rng);
  Rng ref(5);
  const double r = radius(sample_shape(ShapeClass::sphere, 1, 0.0, ref)[0]);
  std::size_t off = 0;
  for (const auto& p : pts) off += std::abs(radius(p) - r) > 1e-9;
  EXPECT_GT(off, 60u);
  EXPECT_LE(off, 100u);
}

TEST(SyntheticDifficulty, ValidateRejectsOutOfRange) {
  SyntheticShapeSpec spec;
  spec.occlusion = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.occlusion = 0.0;
  spec.anisotropy = -0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.anisotropy = 0.0;
  spec.outliers = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.outliers = 0.0;
  spec.jitter = -1;
  EXPECT_THROW(generate_synthetic(spec, 1), ConfigError);
}
