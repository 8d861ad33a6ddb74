#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "gradcheck.hpp"
#include "model_fixtures.hpp"

using namespace jepa3d;
using namespace jepa3d::testing;

namespace {

template <class T>
bool same(const Tensor<T>& a, const Tensor<T>& b) {
  return a.identical(b);
}

// Decoder assembled by hand from plain self-attention blocks that share
// the model's seeds; no cross-attention exists anywhere in it.
template <class T>
std::vector<Var<T>> decode_without_cross(const JepaModel<T>& model, std::uint64_t seed, const Var<T>& ctx_repr,
                                         const Var<T>& ctx_pos, const std::vector<Var<T>>& target_pos) {
  const auto& cfg = model.config();
  const std::uint64_t init = derive_seed(seed, {hash_string("init")});
  std::vector<TransformerBlock<T>> blocks;
  for (std::size_t i = 0; i < cfg.decoder_layers; ++i)
    blocks.emplace_back(cfg.dim, cfg.heads, cfg.mlp_hidden(), module_seed(init, "decoder.blocks." + std::to_string(i)));
  std::vector<Var<T>> out;
  for (const auto& tp : target_pos) {
    const std::size_t n = tp.dim(0);
    Var<T> mask = broadcast_to(reshape(model.mask_token(), {1, cfg.dim}), {n, cfg.dim}) + tp;
    Var<T> seq = concat<T>({ctx_repr + ctx_pos, mask}, 0);
    for (const auto& b : blocks) seq = b(seq);
    seq = model.decoder_norm()(seq);
    out.push_back(index_select(seq, iota_indices(ctx_repr.dim(0), n)));
  }
  return out;
}

}  // namespace

TEST(ModelConfig, Validation) {
  auto c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.teacher_dim = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c.teacher_kind = TeacherKind::external_file;
  EXPECT_NO_THROW(c.validate());
  c = tiny_config();
  c.decoder_layers = 0;
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(parse_teacher_kind("dvae"), ConfigError);
}

TEST(Model, ParameterNamesUniqueAndCountPure) {
  auto cfg = tiny_config();
  JepaModel<float> a(cfg, 1), b(cfg, 2);
  auto pa = a.parameters();
  std::set<std::string> names;
  for (const auto& p : pa) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_EQ(parameter_count(pa), parameter_count(b.parameters()));
  EXPECT_TRUE(names.count("mask_token"));
  EXPECT_TRUE(names.count("decoder.blocks.0.cross_attn.q.weight"));
  EXPECT_EQ(a.mask_token().shape(), (Shape{cfg.dim}));

  cfg.context_aware = false;
  JepaModel<float> c(cfg, 1);
  for (const auto& p : c.parameters()) EXPECT_EQ(p.name.find("cross"), std::string::npos);
  EXPECT_LT(parameter_count(c.parameters()), parameter_count(pa));
}

TEST(Model, TeacherNeverTrainable) {
  JepaModel<float> m(tiny_config(), 1);
  for (const auto& p : m.teacher_parameters()) EXPECT_FALSE(p.var.requires_grad()) << p.name;
  std::set<Node<float>*> student;
  for (const auto& p : m.parameters()) student.insert(p.var.node());
  for (const auto& p : m.teacher_parameters()) EXPECT_FALSE(student.count(p.var.node()));
}

TEST(Encoder, OutputShapeForEveryContextSize) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 3);
  Rng rng(1);
  for (std::size_t n = 1; n <= cfg.m_tokens; ++n) {
    Var<float> x(Tensor<float>({n, cfg.dim}, 0.5f)), p(Tensor<float>({n, cfg.dim}, 0.1f));
    EXPECT_EQ(m.encode_context(x, p).shape(), (Shape{n, cfg.dim}));
  }
}

TEST(Encoder, PermutationEquivariant) {
  auto cfg = tiny_config();
  JepaModel<double> m(cfg, 4);
  Rng rng(2);
  auto x = random_var({7, cfg.dim}, rng), p = random_var({7, cfg.dim}, rng);
  std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  auto out = m.encode_context(x, p).value();
  auto out_p = m.encode_context(index_select(x, perm), index_select(p, perm)).value();
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < cfg.dim; ++c) EXPECT_NEAR(out_p[r * cfg.dim + c], out[perm[r] * cfg.dim + c], 1e-12);
}

TEST(Encoder, ZeroLayersIsInputPlusPosition) {
  auto cfg = tiny_config();
  Encoder<float> enc(cfg, 0, 1, "encoder");
  Rng rng(3);
  Tensor<float> t({4, cfg.dim});
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  Var<float> x(t), p(t);
  auto sum_xp = (x + p).value();
  EXPECT_TRUE(enc(x + p).value().identical(sum_xp));
}

TEST(Decoder, ShapesAndDeterminism) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 5);
  auto in = tiny_input<float>(cfg, 11);
  auto tokens = m.embed(in.patch_tensor);
  auto p1 = m.predict(tokens, in.centers, in.plan);
  auto p2 = m.predict(tokens, in.centers, in.plan);
  ASSERT_EQ(p1.size(), cfg.a_targets);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].shape(), (Shape{in.plan.targets[i].size(), cfg.dim}));
    EXPECT_TRUE(same(p1[i].value(), p2[i].value()));
  }
}

TEST(Decoder, GradientReachesEncoder) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 6);
  auto in = tiny_input<float>(cfg, 12);
  auto preds = m.predict(m.embed(in.patch_tensor), in.centers, in.plan);
  std::vector<Var<float>> proj;
  for (auto& p : preds) proj.push_back(m.project_student(p));
  auto targets = gather_targets(m.teacher_targets(in.patch_tensor, in.centers), in.plan);
  rec_loss(proj, targets).loss.backward();
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("encoder.", 0) != 0) continue;
    ASSERT_TRUE(p.var.has_grad()) << p.name;
    double norm = 0;
    for (float g : p.var.grad().values()) norm += std::abs(g);
    EXPECT_GT(norm, 0) << p.name;
  }
  for (const auto& p : m.teacher_parameters()) EXPECT_FALSE(p.var.has_grad()) << p.name;
}

TEST(Decoder, InformationBarrier) {
  auto cfg = tiny_config();
  for (std::uint64_t s = 0; s < 10; ++s) {
    JepaModel<float> m(cfg, 20 + s);
    auto in = tiny_input<float>(cfg, 30 + s);
    Tensor<float> tokens = m.embed(in.patch_tensor).value();
    Tensor<float> noisy = tokens;
    Rng rng(s);
    for (const auto& t : in.plan.targets)
      for (auto i : t.indices)
        for (std::size_t c = 0; c < cfg.dim; ++c) noisy[i * cfg.dim + c] = static_cast<float>(rng.normal() * 5);
    auto a = m.predict(Var<float>(tokens), in.centers, in.plan);
    auto b = m.predict(Var<float>(noisy), in.centers, in.plan);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same(a[i].value(), b[i].value()));
  }
}

TEST(Decoder, ContextAwareOffMatchesCrossFreeBuild) {
  Rng pick(7);
  for (int t = 0; t < 10; ++t) {
    const std::size_t heads = 1 + pick.index(3);
    auto cfg = tiny_config(heads * (2 + pick.index(4)), heads);
    cfg.decoder_layers = 1 + pick.index(3);
    cfg.context_aware = false;
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(t);
    JepaModel<float> m(cfg, seed);
    auto in = tiny_input<float>(cfg, 200 + static_cast<std::uint64_t>(t));
    auto tokens = m.embed(in.patch_tensor);
    auto pos_all = m.positions(in.centers);
    auto ctx_pos = index_select(pos_all, in.plan.context.indices);
    auto ctx_repr = m.encode_context(index_select(tokens, in.plan.context.indices), ctx_pos);
    std::vector<Var<float>> tpos;
    for (const auto& tb : in.plan.targets) tpos.push_back(index_select(pos_all, tb.indices));
    auto got = m.predict(tokens, in.centers, in.plan);
    auto ref = decode_without_cross(m, seed, ctx_repr, ctx_pos, tpos);
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_TRUE(same(got[i].value(), ref[i].value())) << "config " << t;
  }
}

TEST(Decoder, CrossAttentionIsLive) {
  auto cfg = tiny_config();
  JepaModel<double> m(cfg, 8);
  Rng rng(9);
  auto ctx = random_var({5, cfg.dim}, rng), pos = random_var({5, cfg.dim}, rng);
  std::vector<Var<double>> tpos{random_var({3, cfg.dim}, rng)};
  auto a = m.decode_targets(ctx, pos, tpos)[0].value();
  auto zero = Var<double>(Tensor<double>({5, cfg.dim}));
  auto b = m.decode_targets(zero, pos, tpos)[0].value();
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Decoder, DepthZeroEncodesContextAndMaskTogether) {
  auto cfg = tiny_config();
  cfg.decoder_layers = 0;
  JepaModel<float> m(cfg, 9);
  EXPECT_TRUE(m.decoder().empty());
  auto in = tiny_input<float>(cfg, 13);
  auto tokens = m.embed(in.patch_tensor);
  auto got = m.predict(tokens, in.centers, in.plan);
  auto pos_all = m.positions(in.centers);
  auto ctx_rows = index_select(tokens, in.plan.context.indices) + index_select(pos_all, in.plan.context.indices);
  for (std::size_t i = 0; i < in.plan.targets.size(); ++i) {
    const auto& tb = in.plan.targets[i];
    auto mask = broadcast_to(reshape(m.mask_token(), {1, cfg.dim}), {tb.size(), cfg.dim}) +
                index_select(pos_all, tb.indices);
    auto seq = m.student().encoder()(concat<float>({ctx_rows, mask}, 0));
    auto ref = index_select(seq, iota_indices(ctx_rows.dim(0), tb.size()));
    EXPECT_TRUE(same(got[i].value(), ref.value()));
  }
}

TEST(Teacher, ShapeAndStopGradient) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 10);
  auto in = tiny_input<float>(cfg, 14);
  auto t = m.teacher_tokens(in.patch_tensor, in.centers);
  EXPECT_EQ(t.shape(), (Shape{cfg.m_tokens, cfg.teacher_dim}));
}

TEST(Teacher, EmaAtMomentumZeroMatchesStudent) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 11);
  Rng rng(1);
  randomize(m.parameters(), rng, 0.05);
  auto in = tiny_input<float>(cfg, 15);
  auto before = m.teacher_tokens(in.patch_tensor, in.centers);
  m.update_teacher(0.0);
  auto teacher = m.teacher_tokens(in.patch_tensor, in.centers);
  auto student = m.student().encode_all(in.patch_tensor, in.centers).value();
  double moved = 0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    EXPECT_NEAR(teacher[i], student[i], 1e-5);
    moved += std::abs(before[i] - teacher[i]);
  }
  EXPECT_GT(moved, 0);
}

TEST(Teacher, FrozenRandomDiffersAndNeverMoves) {
  auto cfg = tiny_config();
  cfg.teacher_kind = TeacherKind::frozen_random;
  JepaModel<float> m(cfg, 12);
  auto in = tiny_input<float>(cfg, 16);
  auto before = m.teacher_tokens(in.patch_tensor, in.centers);
  m.update_teacher(0.0);
  EXPECT_TRUE(m.teacher_tokens(in.patch_tensor, in.centers).identical(before));
  EXPECT_FALSE(m.student().encode_all(in.patch_tensor, in.centers).value().identical(before));
}

TEST(Projection, TeacherHeadIdentityWhenSquare) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 13);
  Rng rng(2);
  Tensor<float> x({3, cfg.dim});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1, 1));
  EXPECT_TRUE(m.project_teacher(x).identical(x));
  EXPECT_EQ(m.project_student(Var<float>(x)).shape(), (Shape{3, cfg.dim}));
  EXPECT_THROW(m.project_student(Var<float>(Tensor<float>({3, cfg.dim + 1}))), ShapeError);
  EXPECT_THROW(m.project_teacher(Tensor<float>({3, cfg.dim + 1})), ShapeError);
}

TEST(Projection, ExternalTeacherWidth) {
  auto cfg = tiny_config();
  cfg.teacher_kind = TeacherKind::external_file;
  cfg.teacher_dim = 6;
  JepaModel<float> m(cfg, 14);
  EXPECT_EQ(m.project_teacher(Tensor<float>({5, 6})).shape(), (Shape{5, 6}));
  EXPECT_EQ(m.project_student(Var<float>(Tensor<float>({5, cfg.dim}))).shape(), (Shape{5, 6}));
  EXPECT_THROW(m.teacher_tokens(Tensor<float>({10, 4, 3}), Tensor<float>({10, 3})), ConfigError);
}

TEST(Projection, SharedModeUsesStudentWeights) {
  auto cfg = tiny_config();
  cfg.shared_projection = true;
  JepaModel<double> m(cfg, 15);
  Rng rng(3);
  auto x = random_tensor({2, cfg.dim}, rng);
  EXPECT_TRUE(m.project_teacher(x).identical(m.project_student(Var<double>(x)).value()));
}

TEST(Projection, StudentHeadGradients) {
  auto cfg = tiny_config(6, 2);
  for (int t = 0; t < 20; ++t) {
    JepaModel<double> m(cfg, 300 + static_cast<std::uint64_t>(t));
    Rng rng(t);
    auto x = random_var({3, cfg.dim}, rng);
    std::vector<Var<double>> inputs{x};
    for (const auto& p : m.parameters())
      if (p.name.rfind("head.student", 0) == 0) inputs.push_back(p.var);
    const auto seed = static_cast<std::uint64_t>(t);
    auto res = gradcheck(inputs, [&](const std::vector<Var<double>>& in) {
      return weighted_sum(m.project_student(in[0]), seed);
    });
    EXPECT_LE(res.max_error, 1e-4);
  }
}

TEST(FullModel, EveryParameterGradientMatchesFiniteDifferences) {
  auto cfg = tiny_config(8, 2);
  cfg.m_tokens = 8;
  cfg.widths = {4, 4, 8};
  cfg.pos_hidden = 6;
  for (bool aware : {true, false}) {
    cfg.context_aware = aware;
    JepaModel<double> m(cfg, 40);
    Rng rng(5);
    randomize(m.parameters(), rng, 0.3);
    m.update_teacher(0.5);
    auto in = tiny_input<double>(cfg, 41, 40);
    auto targets = gather_targets(m.teacher_targets(in.patch_tensor, in.centers), in.plan);
    std::vector<Var<double>> inputs;
    for (const auto& p : m.parameters()) inputs.push_back(p.var);
    auto res = gradcheck(inputs, [&](const std::vector<Var<double>>&) {
      auto preds = m.predict(m.embed(in.patch_tensor), in.centers, in.plan);
      for (auto& p : preds) p = m.project_student(p);
      return rec_loss(preds, targets).loss;
    });
    EXPECT_LE(res.max_error, 1e-4);
    EXPECT_EQ(res.checked, parameter_count(m.parameters()));
  }
}

TEST(Packing, BatchPredictionsMatchSingleCloudBitwise) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 71);
  std::vector<TinyInput<float>> ins;
  for (std::uint64_t s = 0; s < 3; ++s) ins.push_back(tiny_input<float>(cfg, 80 + s));
  std::vector<Var<float>> ctx, pos;
  std::vector<BlockPlan> plans;
  for (const auto& in : ins) {
    ctx.push_back(index_select(m.embed(in.patch_tensor), in.plan.context.indices));
    pos.push_back(m.positions(in.centers));
    plans.push_back(in.plan);
  }
  auto packed = m.predict_packed(concat<float>(ctx, 0), concat<float>(pos, 0), plans);
  for (std::size_t b = 0; b < ins.size(); ++b) {
    auto alone = m.predict(m.embed(ins[b].patch_tensor), ins[b].centers, ins[b].plan);
    for (std::size_t t = 0; t < alone.size(); ++t)
      EXPECT_TRUE(same(alone[t].value(), packed.block(b, t).value())) << "cloud " << b << " block " << t;
  }
}

TEST(Packing, TeacherTargetsMatchSingleCloudBitwise) {
  auto cfg = tiny_config();
  JepaModel<float> m(cfg, 72);
  auto a = tiny_input<float>(cfg, 90), b = tiny_input<float>(cfg, 91);
  auto both = m.teacher_targets(concat<float>({Var<float>(a.patch_tensor), Var<float>(b.patch_tensor)}, 0).value(),
                                concat<float>({Var<float>(a.centers), Var<float>(b.centers)}, 0).value(), cfg.m_tokens);
  auto ta = m.teacher_targets(a.patch_tensor, a.centers), tb = m.teacher_targets(b.patch_tensor, b.centers);
  ASSERT_EQ(both.size(), ta.size() + tb.size());
  EXPECT_EQ(0, std::memcmp(both.data(), ta.data(), ta.size() * sizeof(float)));
  EXPECT_EQ(0, std::memcmp(both.data() + ta.size(), tb.data(), tb.size() * sizeof(float)));
}
