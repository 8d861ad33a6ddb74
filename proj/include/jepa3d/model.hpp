#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jepa3d/diff/optim.hpp"
#include "jepa3d/sampler.hpp"
#include "jepa3d/tokenizer.hpp"

namespace jepa3d {

enum class TeacherKind { ema, frozen_random, external_file };

inline std::string to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::ema:
      return "ema";
    case TeacherKind::frozen_random:
      return "frozen_random";
    case TeacherKind::external_file:
      return "external_file";
  }
  return "?";
}

inline TeacherKind parse_teacher_kind(const std::string& s) {
  if (s == "ema") return TeacherKind::ema;
  if (s == "frozen_random") return TeacherKind::frozen_random;
  if (s == "external_file") return TeacherKind::external_file;
  throw ConfigError("unknown teacher kind '" + s + "' (ema, frozen_random, external_file)");
}

struct ModelConfig {
  std::size_t dim = 96;
  std::size_t teacher_dim = 96;
  std::size_t proj_dim = 0;  // 0: same as teacher_dim
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t m_tokens = 32;
  std::size_t k_neighbors = 16;
  std::size_t a_targets = 4;
  bool context_aware = true;
  TeacherKind teacher_kind = TeacherKind::ema;
  double ema_start = 0.996;
  double ema_end = 1.0;
  bool shared_projection = false;
  EmbedderWidths widths{};
  std::size_t pos_hidden = 128;

  std::size_t projection_dim() const { return proj_dim ? proj_dim : teacher_dim; }
  std::size_t mlp_hidden() const { return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(dim))); }

  void validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw ConfigError("model: dim " + std::to_string(dim) + " must be a positive multiple of heads " +
                        std::to_string(heads));
    if (teacher_dim == 0 || m_tokens == 0 || k_neighbors == 0 || a_targets == 0 || encoder_layers == 0)
      throw ConfigError("model: teacher_dim, m_tokens, k_neighbors, a_targets and encoder_layers must be >= 1");
    if (!(mlp_ratio > 0) || mlp_hidden() == 0) throw ConfigError("model: mlp_ratio must be positive");
    if (teacher_kind != TeacherKind::external_file && teacher_dim != dim)
      throw ConfigError("model: teacher_dim must equal dim for the " + to_string(teacher_kind) + " teacher");
    if (shared_projection && (teacher_dim != dim || projection_dim() != dim))
      throw ConfigError("model: shared_projection needs dim == teacher_dim == proj_dim");
    if (!(0 <= ema_start && ema_start <= ema_end && ema_end <= 1))
      throw ConfigError("model: EMA momentum schedule must satisfy 0 <= start <= end <= 1");
    if (!widths.first || !widths.second || !widths.third || !pos_hidden)
      throw ConfigError("model: embedder widths must be positive");
  }

  // (name, value) pairs of every field, in a fixed order.
  std::vector<std::pair<std::string, std::string>> fields() const {
    auto num = [](double v) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    return {{"dim", std::to_string(dim)},
            {"teacher_dim", std::to_string(teacher_dim)},
            {"proj_dim", std::to_string(projection_dim())},
            {"encoder_layers", std::to_string(encoder_layers)},
            {"decoder_layers", std::to_string(decoder_layers)},
            {"heads", std::to_string(heads)},
            {"mlp_ratio", num(mlp_ratio)},
            {"m_tokens", std::to_string(m_tokens)},
            {"k_neighbors", std::to_string(k_neighbors)},
            {"a_targets", std::to_string(a_targets)},
            {"context_aware", context_aware ? "true" : "false"},
            {"teacher_kind", to_string(teacher_kind)},
            {"shared_projection", shared_projection ? "true" : "false"},
            {"embed_widths", std::to_string(widths.first) + "/" + std::to_string(widths.second) + "/" +
                                 std::to_string(widths.third)},
            {"pos_hidden", std::to_string(pos_hidden)}};
  }
};

// Seed of the named sub-module, so toggling one part never reshuffles the
// initialization of another.
inline std::uint64_t module_seed(std::uint64_t init_seed, const std::string& name) {
  return derive_seed(init_seed, {hash_string(name)});
}

inline std::vector<std::size_t> iota_indices(std::size_t from, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), from);
  return v;
}

// Self-attention spans for consecutive sequences of the given lengths.
inline std::vector<AttentionSpan> self_spans(const std::vector<std::size_t>& lengths) {
  std::vector<AttentionSpan> out;
  std::size_t off = 0;
  for (auto n : lengths) {
    out.push_back({off, n, off, n});
    off += n;
  }
  return out;
}

inline std::vector<AttentionSpan> uniform_spans(std::size_t rows, std::size_t per_sequence) {
  if (per_sequence == 0 || rows % per_sequence != 0)
    throw ShapeError("packed batch: " + std::to_string(rows) + " rows is not a multiple of " + std::to_string(per_sequence));
  return self_spans(std::vector<std::size_t>(rows / per_sequence, per_sequence));
}

// Pre-norm self-attention block.
template <class T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t hidden, std::uint64_t seed) : ln1_(dim), ln2_(dim) {
    Rng rng(seed);
    attn_ = MultiHeadAttention<T>(dim, heads, rng);
    mlp_ = Mlp<T>(dim, hidden, dim, rng);
  }

  Var<T> operator()(const Var<T>& x) const { return (*this)(x, {AttentionSpan{0, x.dim(0), 0, x.dim(0)}}); }

  Var<T> operator()(const Var<T>& x, const std::vector<AttentionSpan>& spans) const {
    Var<T> h = ln1_(x);
    Var<T> y = x + attn_(h, h, spans);
    return y + mlp_(ln2_(y));
  }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    ln1_.collect(out, prefix + ".ln1");
    attn_.collect(out, prefix + ".attn");
    ln2_.collect(out, prefix + ".ln2");
    mlp_.collect(out, prefix + ".mlp");
  }

 private:
  LayerNorm<T> ln1_, ln2_;
  MultiHeadAttention<T> attn_;
  Mlp<T> mlp_;
};

// Self-attention, then (when context aware) cross-attention whose queries
// are the sequence and whose keys and values are the context representation,
// then the MLP. Without cross-attention it is exactly a TransformerBlock
// built from the same seed.
template <class T>
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(std::size_t dim, std::size_t heads, std::size_t hidden, bool context_aware, std::uint64_t seed)
      : ln1_(dim), ln2_(dim), cross_enabled_(context_aware) {
    Rng rng(seed);
    self_ = MultiHeadAttention<T>(dim, heads, rng);
    mlp_ = Mlp<T>(dim, hidden, dim, rng);
    if (context_aware) {
      Rng cross_rng(derive_seed(seed, {1}));
      cross_ = MultiHeadAttention<T>(dim, heads, cross_rng);
      ln_query_ = LayerNorm<T>(dim);
      ln_memory_ = LayerNorm<T>(dim);
    }
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& context) const {
    return (*this)(x, {AttentionSpan{0, x.dim(0), 0, x.dim(0)}}, context,
                   {AttentionSpan{0, x.dim(0), 0, context.dim(0)}});
  }

  // Packed form: `self_spans` pair each sequence with itself, `cross_spans`
  // pair it with its own rows of `context`.
  Var<T> operator()(const Var<T>& x, const std::vector<AttentionSpan>& self_spans, const Var<T>& context,
                    const std::vector<AttentionSpan>& cross_spans) const {
    Var<T> h = ln1_(x);
    Var<T> y = x + self_(h, h, self_spans);
    if (cross_enabled_) y = y + cross_(ln_query_(y), ln_memory_(context), cross_spans);
    return y + mlp_(ln2_(y));
  }

  bool context_aware() const { return cross_enabled_; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    ln1_.collect(out, prefix + ".ln1");
    self_.collect(out, prefix + ".self_attn");
    if (cross_enabled_) {
      ln_query_.collect(out, prefix + ".ln_query");
      ln_memory_.collect(out, prefix + ".ln_memory");
      cross_.collect(out, prefix + ".cross_attn");
    }
    ln2_.collect(out, prefix + ".ln2");
    mlp_.collect(out, prefix + ".mlp");
  }

 private:
  LayerNorm<T> ln1_, ln2_, ln_query_, ln_memory_;
  MultiHeadAttention<T> self_, cross_;
  Mlp<T> mlp_;
  bool cross_enabled_ = false;
};

// Stack of blocks plus a final norm. Zero layers is the identity.
template <class T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& cfg, std::size_t layers, std::uint64_t init_seed, const std::string& name) {
    for (std::size_t i = 0; i < layers; ++i)
      blocks_.emplace_back(cfg.dim, cfg.heads, cfg.mlp_hidden(),
                           module_seed(init_seed, name + ".blocks." + std::to_string(i)));
    if (layers > 0) norm_ = LayerNorm<T>(cfg.dim);
  }

  Var<T> operator()(const Var<T>& x) const { return (*this)(x, {AttentionSpan{0, x.dim(0), 0, x.dim(0)}}); }

  Var<T> operator()(Var<T> x, const std::vector<AttentionSpan>& spans) const {
    for (const auto& b : blocks_) x = b(x, spans);
    return blocks_.empty() ? x : norm_(x);
  }

  std::size_t layers() const { return blocks_.size(); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".blocks." + std::to_string(i));
    if (!blocks_.empty()) norm_.collect(out, prefix + ".norm");
  }

 private:
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> norm_;
};

// Token embedder, positional MLP and encoder: the part the teacher mirrors.
template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& cfg, std::uint64_t init_seed) {
    Rng er(module_seed(init_seed, "embed"));
    embed_ = PatchEmbedder<T>(cfg.dim, cfg.widths, er);
    Rng pr(module_seed(init_seed, "pos"));
    pos_ = PositionalEmbedding<T>(cfg.dim, pr, cfg.pos_hidden);
    encoder_ = Encoder<T>(cfg, cfg.encoder_layers, init_seed, "encoder");
  }

  const PatchEmbedder<T>& embedder() const { return embed_; }
  const PositionalEmbedding<T>& positional() const { return pos_; }
  const Encoder<T>& encoder() const { return encoder_; }

  // All M tokens through the encoder: [M, K, 3] patches, [M, 3] centers.
  Var<T> encode_all(const Tensor<T>& patches, const Tensor<T>& centers) const {
    return encoder_(embed_(Var<T>(patches)) + pos_(Var<T>(centers)));
  }

  // Several clouds stacked along rows, `per_cloud` tokens each; clouds do
  // not attend to each other.
  Var<T> encode_all(const Tensor<T>& patches, const Tensor<T>& centers, std::size_t per_cloud) const {
    return encoder_(embed_(Var<T>(patches)) + pos_(Var<T>(centers)), uniform_spans(centers.dim(0), per_cloud));
  }

  void collect(ParameterList<T>& out) const {
    embed_.collect(out, "embed");
    pos_.collect(out, "pos");
    encoder_.collect(out, "encoder");
  }

 private:
  PatchEmbedder<T> embed_;
  PositionalEmbedding<T> pos_;
  Encoder<T> encoder_;
};


// Predicted rows of a packed batch, cloud-major then block-major.
template <class T>
struct PackedPredictions {
  Var<T> rows;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> blocks;  // [cloud][block] -> (first row, count)

  Var<T> block(std::size_t cloud, std::size_t b) const {
    const auto [first, count] = blocks.at(cloud).at(b);
    return index_select(rows, iota_indices(first, count));
  }
};

// Student (embedder, encoder, context-aware decoder, mask token, projection)
// together with its teacher.
template <class T>
class JepaModel {
 public:
  JepaModel() = default;
  JepaModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    const std::uint64_t init = derive_seed(seed, {hash_string("init")});
    student_ = Backbone<T>(cfg, init);
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i)
      decoder_.emplace_back(cfg.dim, cfg.heads, cfg.mlp_hidden(), cfg.context_aware,
                            module_seed(init, "decoder.blocks." + std::to_string(i)));
    if (cfg.decoder_layers > 0) decoder_norm_ = LayerNorm<T>(cfg.dim);
    Rng mr(module_seed(init, "mask_token"));
    mask_token_ = truncated_normal_parameter<T>({cfg.dim}, 0.02, mr);
    Rng hr(module_seed(init, "head.student"));
    student_head_ = Linear<T>(cfg.dim, cfg.projection_dim(), hr);

    if (cfg.teacher_kind == TeacherKind::ema) {
      teacher_ = Backbone<T>(cfg, init);
    } else if (cfg.teacher_kind == TeacherKind::frozen_random) {
      teacher_ = Backbone<T>(cfg, derive_seed(seed, {hash_string("teacher")}));
    }
    Rng tr(module_seed(init, "head.teacher"));
    teacher_head_ = Linear<T>(cfg.teacher_dim, cfg.projection_dim(), tr);
    if (cfg.teacher_dim == cfg.projection_dim()) {
      auto& w = teacher_head_.weight().mutable_value();
      w.fill(T(0));
      for (std::size_t i = 0; i < cfg.teacher_dim; ++i) w[i * cfg.teacher_dim + i] = T(1);
    }
    for (auto& p : teacher_parameters()) p.var.set_requires_grad(false);
  }

  const ModelConfig& config() const { return cfg_; }
  const Backbone<T>& student() const { return student_; }
  const Backbone<T>& teacher() const { return teacher_; }
  const Var<T>& mask_token() const { return mask_token_; }
  const std::vector<DecoderBlock<T>>& decoder() const { return decoder_; }
  const LayerNorm<T>& decoder_norm() const { return decoder_norm_; }
  bool has_teacher_network() const { return cfg_.teacher_kind != TeacherKind::external_file; }

  // Trainable parameters in a fixed order.
  ParameterList<T> parameters() const {
    ParameterList<T> out;
    student_.collect(out);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(out, "decoder.blocks." + std::to_string(i));
    if (!decoder_.empty()) decoder_norm_.collect(out, "decoder.norm");
    out.push_back({"mask_token", mask_token_});
    student_head_.collect(out, "head.student");
    return out;
  }

  ParameterList<T> student_backbone_parameters() const {
    ParameterList<T> out;
    student_.collect(out);
    return out;
  }

  ParameterList<T> teacher_backbone_parameters() const {
    ParameterList<T> out;
    if (has_teacher_network()) teacher_.collect(out);
    return out;
  }

  // Everything the teacher side owns; never trained.
  ParameterList<T> teacher_parameters() const {
    ParameterList<T> out = teacher_backbone_parameters();
    teacher_head_.collect(out, "head.teacher");
    return out;
  }

  Var<T> embed(const Tensor<T>& patches) const { return student_.embedder()(Var<T>(patches)); }
  Var<T> positions(const Tensor<T>& centers) const { return student_.positional()(Var<T>(centers)); }

  Var<T> encode_context(const Var<T>& tokens, const Var<T>& pos) const {
    if (tokens.dim(0) == 0) throw ShapeError("encode_context: empty context");
    return student_.encoder()(tokens + pos);
  }

  // One decoder pass per target block; returns the mask-token rows.
  std::vector<Var<T>> decode_targets(const Var<T>& context_repr, const Var<T>& context_pos,
                                     const std::vector<Var<T>>& target_pos) const {
    if (target_pos.empty()) throw ShapeError("decode_targets: no target blocks");
    if (decoder_.empty()) throw ConfigError("decode_targets: decoder has no layers; use predict");
    const std::size_t nc = context_repr.dim(0);
    Var<T> ctx_rows = context_repr + context_pos;
    std::vector<Var<T>> out;
    out.reserve(target_pos.size());
    for (const auto& tp : target_pos) {
      Var<T> seq = concat<T>({ctx_rows, mask_rows(tp)}, 0);
      for (const auto& block : decoder_) seq = block(seq, context_repr);
      seq = decoder_norm_(seq);
      const auto rows = iota_indices(nc, tp.dim(0));
      out.push_back(index_select(seq, rows));
    }
    return out;
  }

  // Student predictions for a packed batch of B clouds with M tokens each.
  // `context_tokens` holds every cloud's context rows, cloud-major, each in
  // its plan's context order; `pos_all` [B*M, C] holds the positional
  // embedding of every center. Target tokens contribute only positions.
  PackedPredictions<T> predict_packed(const Var<T>& context_tokens, const Var<T>& pos_all,
                                      std::span<const BlockPlan> plans) const {
    if (plans.empty()) throw ShapeError("predict: empty batch");
    const std::size_t m = plans[0].context.universe, nb = plans.size();
    if (pos_all.rank() != 2 || pos_all.dim(0) != nb * m)
      throw ShapeError("predict: positions " + shape_str(pos_all.shape()) + " for " + std::to_string(nb) +
                       " clouds of " + std::to_string(m) + " tokens");
    std::vector<std::size_t> ctx_off(nb + 1, 0), ctx_pos_idx, tgt_pos_idx;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& plan = plans[b];
      if (plan.context.universe != m) throw ShapeError("predict: clouds in a batch need the same token count");
      if (plan.targets.empty()) throw ShapeError("predict: plan has no target blocks");
      if (plan.context.empty()) throw ShapeError("encode_context: empty context");
      ctx_off[b + 1] = ctx_off[b] + plan.context.size();
      for (auto i : plan.context.indices) ctx_pos_idx.push_back(b * m + i);
      for (const auto& t : plan.targets)
        for (auto i : t.indices) tgt_pos_idx.push_back(b * m + i);
    }
    const std::size_t n_ctx = ctx_off[nb];
    if (context_tokens.rank() != 2 || context_tokens.dim(0) != n_ctx)
      throw ShapeError("predict: " + std::to_string(context_tokens.rank() == 2 ? context_tokens.dim(0) : 0) +
                       " context tokens for contexts totalling " + std::to_string(n_ctx));

    const Var<T> ctx_pos = index_select(pos_all, ctx_pos_idx);
    const Var<T> ctx_in = context_tokens + ctx_pos;
    const Var<T> masks = mask_rows(index_select(pos_all, tgt_pos_idx));
    std::vector<std::size_t> ctx_lengths(nb);
    for (std::size_t b = 0; b < nb; ++b) ctx_lengths[b] = ctx_off[b + 1] - ctx_off[b];

    // One sequence per (cloud, block): the cloud's context rows, then mask rows.
    Var<T> repr;
    if (!decoder_.empty()) repr = student_.encoder()(ctx_in, self_spans(ctx_lengths));
    const Var<T> src = concat<T>({decoder_.empty() ? ctx_in : repr + ctx_pos, masks}, 0);
    std::vector<std::size_t> order, seq_lengths, pick;
    std::vector<AttentionSpan> cross;
    PackedPredictions<T> out;
    std::size_t mask_cursor = n_ctx, pred_row = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      out.blocks.emplace_back();
      for (const auto& t : plans[b].targets) {
        const std::size_t start = order.size();
        for (std::size_t i = ctx_off[b]; i < ctx_off[b + 1]; ++i) order.push_back(i);
        for (std::size_t j = 0; j < t.size(); ++j) {
          pick.push_back(order.size());
          order.push_back(mask_cursor++);
        }
        seq_lengths.push_back(order.size() - start);
        cross.push_back({start, order.size() - start, ctx_off[b], ctx_lengths[b]});
        out.blocks.back().push_back({pred_row, t.size()});
        pred_row += t.size();
      }
    }
    Var<T> seq = index_select(src, order);
    const auto spans = self_spans(seq_lengths);
    if (decoder_.empty()) {
      seq = student_.encoder()(seq, spans);
    } else {
      for (const auto& block : decoder_) seq = block(seq, spans, repr, cross);
      seq = decoder_norm_(seq);
    }
    out.rows = index_select(seq, pick);
    return out;
  }

  // Single-cloud form of predict_packed, one Var per target block.
  std::vector<Var<T>> predict_from_context(const Var<T>& context_tokens, const Var<T>& pos_all,
                                           const BlockPlan& plan) const {
    if (context_tokens.dim(0) != plan.context.size())
      throw ShapeError("predict: " + std::to_string(context_tokens.dim(0)) + " context tokens for a context of " +
                       std::to_string(plan.context.size()));
    const auto packed = predict_packed(context_tokens, pos_all, std::span<const BlockPlan>(&plan, 1));
    std::vector<Var<T>> out;
    for (std::size_t t = 0; t < plan.targets.size(); ++t) out.push_back(packed.block(0, t));
    return out;
  }

  // tokens: [M, C] for all positions; only context rows are read.
  std::vector<Var<T>> predict(const Var<T>& tokens, const Tensor<T>& centers, const BlockPlan& plan) const {
    return predict_from_context(index_select(tokens, plan.context.indices), positions(centers), plan);
  }

  Var<T> project_student(const Var<T>& x) const {
    if (x.dim(-1) != cfg_.dim)
      throw ShapeError("project: student input width " + std::to_string(x.dim(-1)) + " != " + std::to_string(cfg_.dim));
    return student_head_(x);
  }

  // Teacher encoder over all M tokens, detached.
  Tensor<T> teacher_tokens(const Tensor<T>& patches, const Tensor<T>& centers) const {
    if (!has_teacher_network()) throw ConfigError("teacher: external_file teacher has no network");
    NoGradGuard guard;
    return teacher_.encode_all(patches, centers).value();
  }

  Tensor<T> project_teacher(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.teacher_dim)
      throw ShapeError("project: teacher input " + shape_str(x.shape()) + " does not have width " +
                       std::to_string(cfg_.teacher_dim));
    NoGradGuard guard;
    const Linear<T>& head = cfg_.shared_projection ? student_head_ : teacher_head_;
    return linear(Var<T>(x), head.weight().detach(), head.bias().defined() ? head.bias().detach() : Var<T>()).value();
  }

  // Projected teacher targets for every token: [M, C_p].
  Tensor<T> teacher_targets(const Tensor<T>& patches, const Tensor<T>& centers) const {
    return project_teacher(teacher_tokens(patches, centers));
  }

  // Packed form over clouds of `per_cloud` tokens: [B*M, C_p].
  Tensor<T> teacher_targets(const Tensor<T>& patches, const Tensor<T>& centers, std::size_t per_cloud) const {
    if (!has_teacher_network()) throw ConfigError("teacher: external_file teacher has no network");
    Tensor<T> tokens;
    {
      NoGradGuard guard;
      tokens = teacher_.encode_all(patches, centers, per_cloud).value();
    }
    return project_teacher(tokens);
  }

  void update_teacher(double momentum) {
    if (cfg_.teacher_kind != TeacherKind::ema) return;
    auto t = teacher_backbone_parameters();
    ema_update(t, student_backbone_parameters(), momentum);
  }

 private:
  Var<T> mask_rows(const Var<T>& target_pos) const {
    const std::size_t n = target_pos.dim(0);
    return broadcast_to(reshape(mask_token_, {1, cfg_.dim}), {n, cfg_.dim}) + target_pos;
  }

  ModelConfig cfg_;
  Backbone<T> student_;
  Backbone<T> teacher_;
  std::vector<DecoderBlock<T>> decoder_;
  LayerNorm<T> decoder_norm_;
  Var<T> mask_token_;
  Linear<T> student_head_;
  Linear<T> teacher_head_;
};

// Deep copy: fresh parameter nodes with the same values.
template <class T>
JepaModel<T> clone_model(const JepaModel<T>& src, std::uint64_t seed) {
  JepaModel<T> out(src.config(), seed);
  auto a = out.parameters();
  auto b = src.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) a[i].var.mutable_value() = b[i].var.value();
  auto ta = out.teacher_parameters();
  auto tb = src.teacher_parameters();
  for (std::size_t i = 0; i < ta.size(); ++i) ta[i].var.mutable_value() = tb[i].var.value();
  return out;
}

}  // namespace jepa3d
