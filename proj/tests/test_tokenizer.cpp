#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "jepa3d/tokenizer.hpp"
#include "oracles.hpp"

using namespace jepa3d;
using namespace jepa3d::testing;

namespace {

PointCloud sphere(std::size_t n, Rng& rng) {
  PointCloud pc;
  pc.id = "sphere";
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.uniform(-1, 1), phi = rng.uniform(0, 2 * std::numbers::pi);
    const double r = std::sqrt(1 - z * z);
    pc.points.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return normalize_unit_sphere(pc);
}

const EmbedderWidths kSmall{8, 8, 16};

}  // namespace

TEST(Patchify, EveryPointItsOwnPatch) {
  Rng rng(1);
  PointCloud pc{uniform_cloud(rng, 12), std::nullopt, "c"};
  auto ps = patchify(pc, 12, 1, std::size_t{0});
  ASSERT_EQ(ps.centers.size(), 12u);
  for (const auto& o : ps.offsets) EXPECT_EQ(o, (Point3{0, 0, 0}));
}

TEST(Patchify, OffsetsReconstructSourcePoints) {
  Rng rng(2);
  PointCloud pc{uniform_cloud(rng, 100), std::nullopt, "c"};
  auto ps = patchify(pc, 16, 8, rng);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(ps.centers[i], pc.points[ps.center_indices.indices[i]]);
    for (std::size_t j = 0; j < 8; ++j) {
      const auto& o = ps.offsets[i * 8 + j];
      const auto& src = pc.points[ps.members(i, j)];
      for (int d = 0; d < 3; ++d) EXPECT_NEAR(o[d] + ps.centers[i][d], src[d], 1e-15);
      EXPECT_NE(std::find(pc.points.begin(), pc.points.end(), src), pc.points.end());
    }
  }
}

TEST(Patchify, SpherePatchRadiiBounded) {
  Rng rng(3);
  auto pc = sphere(512, rng);
  auto ps = patchify(pc, 32, 16, rng);
  for (const auto& o : ps.offsets) EXPECT_LE(std::sqrt(oracle_d2(o, {0, 0, 0})), 2.0);
  auto t = ps.patches_tensor<float>();
  EXPECT_EQ(t.shape(), (Shape{32, 16, 3}));
}

TEST(Patchify, PropagatesGeometryErrors) {
  Rng rng(1);
  PointCloud pc{uniform_cloud(rng, 5), std::nullopt, "c"};
  EXPECT_THROW(patchify(pc, 6, 2, rng), ConfigError);
  EXPECT_THROW(patchify(pc, 2, 6, rng), ConfigError);
}

TEST(StackPatches, ConcatenatesInOrder) {
  Rng rng(4);
  PointCloud a{uniform_cloud(rng, 20), std::nullopt, "a"}, b{uniform_cloud(rng, 20), std::nullopt, "b"};
  auto pa = patchify(a, 4, 3, rng), pb = patchify(b, 5, 3, rng);
  auto t = stack_patches<double>({pa, pb});
  ASSERT_EQ(t.shape(), (Shape{9, 3, 3}));
  EXPECT_EQ(t[0], pa.offsets[0][0]);
  EXPECT_EQ(t[4 * 9], pb.offsets[0][0]);
  EXPECT_EQ(stack_centers<double>({pa, pb}).shape(), (Shape{9, 3}));
}

TEST(Embedder, PermutationInvariantBitwise) {
  Rng rng(5);
  PatchEmbedder<float> embed(32, EmbedderWidths{}, rng);
  PointCloud pc{uniform_cloud(rng, 200), std::nullopt, "c"};
  auto ps = patchify(pc, 8, 16, rng);
  auto tokens = embed(Var<float>(ps.patches_tensor<float>())).value();
  for (int trial = 0; trial < 5; ++trial) {
    PatchSet shuffled = ps;
    for (std::size_t i = 0; i < ps.m; ++i) {
      std::vector<Point3> row(ps.offsets.begin() + i * 16, ps.offsets.begin() + (i + 1) * 16);
      rng.shuffle(row);
      std::copy(row.begin(), row.end(), shuffled.offsets.begin() + i * 16);
    }
    EXPECT_TRUE(embed(Var<float>(shuffled.patches_tensor<float>())).value().identical(tokens));
  }
}

TEST(Embedder, IdenticalPatchesGiveIdenticalTokens) {
  Rng rng(6);
  PatchEmbedder<float> embed(16, kSmall, rng);
  Tensor<float> p({2, 5, 3});
  for (std::size_t i = 0; i < 15; ++i) p[i] = p[15 + i] = static_cast<float>(rng.uniform(-1, 1));
  auto t = embed(Var<float>(p)).value();
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(t[c], t[16 + c]);
}

TEST(Embedder, ShapeContract) {
  Rng rng(6);
  PatchEmbedder<float> embed(24, kSmall, rng);
  EXPECT_EQ(embed(Var<float>(Tensor<float>({7, 4, 3}))).shape(), (Shape{7, 24}));
  EXPECT_THROW(embed(Var<float>(Tensor<float>({7, 4, 2}))), ShapeError);
  EXPECT_THROW(embed(Var<float>(Tensor<float>({7, 3}))), ShapeError);
  ParameterList<float> params;
  embed.collect(params, "embed");
  EXPECT_EQ(params.size(), 8u);
  EXPECT_EQ(params[0].name, "embed.mlp1.fc1.weight");
}

TEST(Embedder, GradientsMatchFiniteDifferences) {
  for (int t = 0; t < 20; ++t) {
    Rng rng(100 + t);
    PatchEmbedder<double> embed(6, EmbedderWidths{5, 4, 7}, rng);
    ParameterList<double> params;
    embed.collect(params, "embed");
    auto patches = random_var({2, 4, 3}, rng);
    std::vector<Var<double>> inputs{patches};
    for (auto& p : params) {
      // larger weights so the checked function is far from linear
      for (auto& v : p.var.mutable_value().values()) v = rng.uniform(-0.8, 0.8);
      inputs.push_back(p.var);
    }
    const auto seed = static_cast<std::uint64_t>(t);
    auto res = gradcheck(inputs, [&](const std::vector<Var<double>>& in) { return weighted_sum(embed(in[0]), seed); });
    EXPECT_LE(res.max_error, 1e-4) << "instance " << t;
  }
}

TEST(Embedder, TokenSumGradientWrtCoordinates) {
  Rng rng(9);
  PatchEmbedder<double> embed(6, EmbedderWidths{5, 4, 7}, rng);
  auto patches = random_var({2, 4, 3}, rng);
  auto res = gradcheck({patches}, [&](const std::vector<Var<double>>& in) { return sum(embed(in[0])); });
  EXPECT_LE(res.max_error, 1e-4);
}

TEST(Positional, EqualCentersEqualEmbeddings) {
  Rng rng(7);
  PositionalEmbedding<float> pos(16, rng);
  Tensor<float> c({3, 3}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.5f, 0.5f, 0.5f, 0.1f, 0.2f, 0.3f});
  auto e = pos(Var<float>(c)).value();
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(e[j], e[32 + j]);
}

TEST(Positional, ShapeContract) {
  Rng rng(7);
  PositionalEmbedding<float> pos(16, rng);
  for (std::size_t m : {1u, 5u, 33u}) EXPECT_EQ(pos(Var<float>(Tensor<float>({m, 3}))).shape(), (Shape{m, 16}));
  EXPECT_THROW(pos(Var<float>(Tensor<float>({4, 2}))), ShapeError);
}

TEST(Positional, GradientsMatchFiniteDifferences) {
  for (int t = 0; t < 20; ++t) {
    Rng rng(200 + t);
    PositionalEmbedding<double> pos(5, rng, 6);
    ParameterList<double> params;
    pos.collect(params, "pos");
    auto centers = random_var({4, 3}, rng);
    std::vector<Var<double>> inputs{centers};
    for (auto& p : params) {
      for (auto& v : p.var.mutable_value().values()) v = rng.uniform(-0.8, 0.8);
      inputs.push_back(p.var);
    }
    const auto seed = static_cast<std::uint64_t>(t);
    auto res = gradcheck(inputs, [&](const std::vector<Var<double>>& in) { return weighted_sum(pos(in[0]), seed); });
    EXPECT_LE(res.max_error, 1e-4) << "instance " << t;
  }
}

TEST(Tokenize, BundlesTokensCentersPatches) {
  Rng rng(8);
  PointCloud pc{uniform_cloud(rng, 64), std::nullopt, "cloud_3"};
  PatchEmbedder<float> embed(12, kSmall, rng);
  auto ps = patchify(pc, 8, 4, rng);
  auto tc = tokenize(ps, embed, pc.id);
  EXPECT_EQ(tc.tokens.shape(), (Shape{8, 12}));
  EXPECT_EQ(tc.centers.shape(), (Shape{8, 3}));
  EXPECT_EQ(tc.patches.shape(), (Shape{8, 4, 3}));
  EXPECT_EQ(tc.source_id, "cloud_3");
}
