#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "jepa3d/cloud_io.hpp"
#include "jepa3d/config.hpp"
#include "jepa3d/diff/optim.hpp"
#include "jepa3d/model.hpp"
#include "jepa3d/synthetic.hpp"
#include "jepa3d/tokenizer.hpp"

namespace jepa3d {

enum class Protocol { linear_probe, finetune, fewshot };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::linear_probe:
      return "linear_probe";
    case Protocol::finetune:
      return "finetune";
    case Protocol::fewshot:
      return "fewshot";
  }
  return "?";
}

struct Prediction {
  std::string id;
  int truth = 0;
  int predicted = 0;
  std::vector<double> logits;
};

struct ProbeResult {
  Protocol protocol = Protocol::linear_probe;
  double accuracy = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the test set
  std::size_t n_test = 0;
  std::size_t correct = 0;
  std::vector<Prediction> predictions;
  // Few-shot only.
  std::vector<double> episodes;
  double mean = 0.0;
  double stddev = 0.0;  // population std over the episodes
};

inline ProbeResult score(Protocol protocol, std::vector<Prediction> preds, std::size_t classes) {
  ProbeResult r;
  r.protocol = protocol;
  r.n_test = preds.size();
  std::vector<std::size_t> hit(classes, 0), seen(classes, 0);
  for (const auto& p : preds) {
    ++seen.at(static_cast<std::size_t>(p.truth));
    if (p.truth == p.predicted) {
      ++r.correct;
      ++hit[static_cast<std::size_t>(p.truth)];
    }
  }
  r.accuracy = r.n_test ? static_cast<double>(r.correct) / static_cast<double>(r.n_test) : 0.0;
  for (std::size_t c = 0; c < classes; ++c)
    r.per_class.push_back(seen[c] ? static_cast<double>(hit[c]) / static_cast<double>(seen[c]) : std::nan(""));
  r.predictions = std::move(preds);
  return r;
}

// id, true label, predicted label, then one column per logit.
inline std::string predictions_tsv(const std::vector<Prediction>& preds) {
  std::string out = "id\ttrue\tpred";
  const std::size_t width = preds.empty() ? 0 : preds[0].logits.size();
  for (std::size_t i = 0; i < width; ++i) out += "\tlogit_" + std::to_string(i);
  out += "\n";
  char buf[40];
  for (const auto& p : preds) {
    out += p.id + "\t" + std::to_string(p.truth) + "\t" + std::to_string(p.predicted);
    for (double v : p.logits) {
      std::snprintf(buf, sizeof buf, "\t%.9g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline int argmax_row(const double* row, std::size_t n) {
  return static_cast<int>(std::max_element(row, row + n) - row);
}

// Tokenization used at evaluation: no augmentation, FPS from the extremal
// point, so a cloud always maps to the same tokens.
template <class T>
struct EvalTokens {
  Tensor<T> patches;  // [N*M, K, 3]
  Tensor<T> centers;  // [N*M, 3]
  std::size_t per_cloud = 0;
  std::size_t count = 0;
};

template <class T>
EvalTokens<T> eval_tokens(const std::vector<const PointCloud*>& clouds, const ModelConfig& mc) {
  EvalTokens<T> out;
  out.per_cloud = mc.m_tokens;
  out.count = clouds.size();
  out.patches = Tensor<T>({clouds.size() * mc.m_tokens, mc.k_neighbors, 3});
  out.centers = Tensor<T>({clouds.size() * mc.m_tokens, 3});
  const std::size_t prow = mc.m_tokens * mc.k_neighbors * 3, crow = mc.m_tokens * 3;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const auto ps = patchify(*clouds[i], mc.m_tokens, mc.k_neighbors, extremal_start(clouds[i]->points));
    const auto p = ps.template patches_tensor<T>();
    const auto c = ps.template centers_tensor<T>();
    std::copy(p.data(), p.data() + prow, out.patches.data() + i * prow);
    std::copy(c.data(), c.data() + crow, out.centers.data() + i * crow);
  }
  return out;
}

template <class T>
EvalTokens<T> eval_tokens(const std::vector<PointCloud>& clouds, const ModelConfig& mc) {
  std::vector<const PointCloud*> ptrs;
  for (const auto& pc : clouds) ptrs.push_back(&pc);
  return eval_tokens<T>(ptrs, mc);
}

// Rows [first, first + n) of a token set, as a contiguous sub-batch.
template <class T>
EvalTokens<T> slice_tokens(const EvalTokens<T>& all, const std::vector<std::size_t>& clouds) {
  EvalTokens<T> out;
  out.per_cloud = all.per_cloud;
  out.count = clouds.size();
  const std::size_t k = all.patches.dim(1);
  out.patches = Tensor<T>({clouds.size() * all.per_cloud, k, 3});
  out.centers = Tensor<T>({clouds.size() * all.per_cloud, 3});
  const std::size_t prow = all.per_cloud * k * 3, crow = all.per_cloud * 3;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    std::copy(all.patches.data() + clouds[i] * prow, all.patches.data() + (clouds[i] + 1) * prow,
              out.patches.data() + i * prow);
    std::copy(all.centers.data() + clouds[i] * crow, all.centers.data() + (clouds[i] + 1) * crow,
              out.centers.data() + i * crow);
  }
  return out;
}

// Global feature per cloud: mean and max over all M encoder outputs
// concatenated ([B, 2C]), or the mean alone ([B, C]).
template <class T>
Var<T> pooled_features(const Backbone<T>& backbone, const EvalTokens<T>& tok, const std::string& pooling) {
  const Var<T> tokens = backbone.encode_all(tok.patches, tok.centers, tok.per_cloud);
  const std::size_t c = tokens.dim(1);
  const Var<T> grouped = reshape(tokens, {tok.count, tok.per_cloud, c});
  const Var<T> avg = mean(grouped, 1);
  if (pooling == "mean") return avg;
  return concat<T>({avg, max(grouped, 1)}, 1);
}

inline std::size_t feature_width(const ModelConfig& mc, const std::string& pooling) {
  return pooling == "mean" ? mc.dim : 2 * mc.dim;
}

// Frozen features for every cloud, computed in chunks without recording a graph.
template <class T>
Tensor<double> extract_features(const Backbone<T>& backbone, const std::vector<PointCloud>& clouds, const ModelConfig& mc,
                                const std::string& pooling = "mean_max", std::size_t chunk = 64) {
  NoGradGuard guard;
  const std::size_t f = feature_width(mc, pooling);
  Tensor<double> out({clouds.size(), f});
  for (std::size_t b0 = 0; b0 < clouds.size(); b0 += chunk) {
    std::vector<const PointCloud*> part;
    for (std::size_t i = b0; i < std::min(clouds.size(), b0 + chunk); ++i) part.push_back(&clouds[i]);
    const auto feats = pooled_features(backbone, eval_tokens<T>(part, mc), pooling).value();
    for (std::size_t i = 0; i < feats.size(); ++i) out[b0 * f + i] = static_cast<double>(feats[i]);
  }
  return out;
}

template <class T>
Tensor<double> extract_features(const JepaModel<T>& model, const std::vector<PointCloud>& clouds,
                                const std::string& pooling = "mean_max") {
  return extract_features(model.student(), clouds, model.config(), pooling);
}

inline std::vector<int> labels_of(const std::vector<PointCloud>& clouds) {
  std::vector<int> out;
  for (const auto& pc : clouds) {
    if (!pc.label) throw DataError("evaluation: cloud '" + pc.id + "' has no label");
    out.push_back(*pc.label);
  }
  return out;
}

struct ProbeSettings {
  std::size_t epochs = 300;
  double lr = 0.01;
  double weight_decay = 1e-4;
};

// Softmax regression on standardized features, full-batch AdamW from a zero
// start. The objective is convex, so the result does not depend on any seed.
inline ProbeResult linear_probe(const Tensor<double>& train_x, const std::vector<int>& train_y,
                                const Tensor<double>& test_x, const std::vector<int>& test_y,
                                const std::vector<std::string>& test_ids, std::size_t classes,
                                const ProbeSettings& s = {}) {
  const std::size_t n = train_x.dim(0), f = train_x.dim(1);
  if (n != train_y.size() || test_x.dim(0) != test_y.size() || test_x.dim(1) != f)
    throw ShapeError("linear_probe: feature and label counts disagree");
  for (int y : train_y)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ConfigError("linear_probe: label " + std::to_string(y) + " outside a head with " + std::to_string(classes) +
                        " classes");
  std::vector<double> mu(f, 0.0), sd(f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) mu[j] += train_x[i * f + j] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) sd[j] += std::pow(train_x[i * f + j] - mu[j], 2) / static_cast<double>(n);
  for (auto& v : sd) v = std::sqrt(v) + 1e-6;
  auto standardize = [&](const Tensor<double>& x) {
    Tensor<double> out(x.shape());
    for (std::size_t i = 0; i < x.dim(0); ++i)
      for (std::size_t j = 0; j < f; ++j) out[i * f + j] = (x[i * f + j] - mu[j]) / sd[j];
    return out;
  };
  const Var<double> xs(standardize(train_x));
  Var<double> w(Tensor<double>({f, classes}), true), b(Tensor<double>({classes}), true);
  ParameterList<double> params{{"probe.weight", w}, {"probe.bias", b}};
  AdamW<double> opt(params, {s.lr, 0.9, 0.999, 1e-8, s.weight_decay});
  for (std::size_t e = 0; e < s.epochs; ++e) {
    opt.zero_grad();
    cross_entropy(linear(xs, w, b), std::span<const int>(train_y)).backward();
    opt.step();
  }
  NoGradGuard guard;
  const auto logits = linear(Var<double>(standardize(test_x)), w, b).value();
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    const double* row = logits.data() + i * classes;
    preds.push_back({test_ids.at(i), test_y[i], argmax_row(row, classes), {row, row + classes}});
  }
  return score(Protocol::linear_probe, std::move(preds), classes);
}

template <class T>
ProbeResult linear_probe(const JepaModel<T>& model, const Dataset& ds, const EvalConfig& ec) {
  const auto xtr = extract_features(model, ds.train, ec.pooling);
  const auto xte = extract_features(model, ds.test, ec.pooling);
  std::vector<std::string> ids;
  for (const auto& pc : ds.test) ids.push_back(pc.id);
  return linear_probe(xtr, labels_of(ds.train), xte, labels_of(ds.test), ids, ds.num_classes(),
                      {ec.probe_epochs, ec.probe_lr, ec.probe_weight_decay});
}

// Deep copy of a backbone: same architecture, its own parameter storage.
template <class T>
Backbone<T> clone_backbone(const Backbone<T>& src, const ModelConfig& mc) {
  Backbone<T> out(mc, 0);
  ParameterList<T> from, to;
  src.collect(from);
  out.collect(to);
  for (std::size_t i = 0; i < from.size(); ++i) to[i].var.mutable_value() = from[i].var.value();
  return out;
}

// Encoder plus a 3-layer MLP head: F -> 256 -> 128 -> classes, GELU and
// dropout between layers.
template <class T>
class Classifier {
 public:
  Classifier(const Backbone<T>& backbone, const ModelConfig& mc, std::size_t classes, const std::string& pooling,
             double dropout, std::uint64_t seed)
      : mc_(mc), backbone_(clone_backbone(backbone, mc)), pooling_(pooling), dropout_(dropout), classes_(classes) {
    if (classes == 0) throw ConfigError("classifier: need at least one class");
    Rng rng(derive_seed(seed, {hash_string("head")}));
    h1_ = Linear<T>(feature_width(mc, pooling), 256, rng);
    h2_ = Linear<T>(256, 128, rng);
    h3_ = Linear<T>(128, classes, rng);
  }

  std::size_t classes() const { return classes_; }
  const Backbone<T>& backbone() const { return backbone_; }

  ParameterList<T> head_parameters() const {
    ParameterList<T> out;
    h1_.collect(out, "cls.h1");
    h2_.collect(out, "cls.h2");
    h3_.collect(out, "cls.h3");
    return out;
  }

  ParameterList<T> parameters(bool include_backbone) const {
    ParameterList<T> out;
    if (include_backbone) backbone_.collect(out);
    for (auto& p : head_parameters()) out.push_back(p);
    return out;
  }

  // `rng` null: inference (no dropout). Frozen encoders run without a graph.
  Var<T> logits(const EvalTokens<T>& tok, Rng* rng, bool frozen) const {
    Var<T> feat;
    if (frozen) {
      NoGradGuard guard;
      feat = pooled_features(backbone_, tok, pooling_).detach();
    } else {
      feat = pooled_features(backbone_, tok, pooling_);
    }
    auto drop = [&](const Var<T>& x) { return rng ? dropout(x, dropout_, *rng) : x; };
    Var<T> h = drop(gelu(h1_(feat)));
    h = drop(gelu(h2_(h)));
    return h3_(h);
  }

 private:
  ModelConfig mc_;
  Backbone<T> backbone_;
  Linear<T> h1_, h2_, h3_;
  std::string pooling_;
  double dropout_;
  std::size_t classes_;
};

struct FinetuneSettings {
  std::size_t epochs = 30;
  double lr = 5e-4;
  double weight_decay = 0.05;
  std::size_t batch = 32;
  bool frozen = false;
};

template <class T>
void train_classifier(Classifier<T>& net, const EvalTokens<T>& tok, const std::vector<int>& labels,
                      const FinetuneSettings& s, std::uint64_t seed) {
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= net.classes())
      throw ConfigError("finetune: label " + std::to_string(y) + " outside a head with " + std::to_string(net.classes()) +
                        " classes");
  AdamW<T> opt(net.parameters(!s.frozen), {s.lr, 0.9, 0.999, 1e-8, s.weight_decay});
  std::vector<std::size_t> order(tok.count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < s.epochs; ++e) {
    Rng shuffle(derive_seed(seed, {hash_string("finetune.shuffle"), e}));
    shuffle.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += s.batch) {
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(b0),
                                   order.begin() + static_cast<long>(std::min(order.size(), b0 + s.batch)));
      std::vector<int> y;
      for (auto i : idx) y.push_back(labels[i]);
      Rng drop(derive_seed(seed, {hash_string("finetune.dropout"), e, b0}));
      opt.zero_grad();
      cross_entropy(net.logits(slice_tokens(tok, idx), &drop, s.frozen), std::span<const int>(y)).backward();
      opt.step();
    }
  }
}

template <class T>
std::vector<Prediction> classify(const Classifier<T>& net, const EvalTokens<T>& tok, const std::vector<int>& labels,
                                 const std::vector<std::string>& ids, std::size_t chunk = 64) {
  NoGradGuard guard;
  std::vector<Prediction> out;
  const std::size_t c = net.classes();
  for (std::size_t b0 = 0; b0 < tok.count; b0 += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b0; i < std::min(tok.count, b0 + chunk); ++i) idx.push_back(i);
    const auto lg = net.logits(slice_tokens(tok, idx), nullptr, true).value();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::vector<double> row(c);
      for (std::size_t j = 0; j < c; ++j) row[j] = static_cast<double>(lg[r * c + j]);
      out.push_back({ids.at(idx[r]), labels.at(idx[r]), argmax_row(row.data(), c), row});
    }
  }
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<PointCloud>& clouds) {
  std::vector<std::string> out;
  for (const auto& pc : clouds) out.push_back(pc.id);
  return out;
}

// Encoder and head trained together on the train split (or the head alone
// when frozen); one forward per test cloud.
template <class T>
ProbeResult finetune_classify(const JepaModel<T>& model, const Dataset& ds, const EvalConfig& ec, bool frozen,
                              std::uint64_t seed) {
  const auto& mc = model.config();
  Classifier<T> net(model.student(), mc, ds.num_classes(), ec.pooling, ec.dropout, seed);
  train_classifier(net, eval_tokens<T>(ds.train, mc), labels_of(ds.train),
                   {ec.finetune_epochs, ec.finetune_lr, 0.05, ec.finetune_batch, frozen}, seed);
  auto preds = classify(net, eval_tokens<T>(ds.test, mc), labels_of(ds.test), ids_of(ds.test));
  auto r = score(Protocol::finetune, std::move(preds), ds.num_classes());
  r.protocol = frozen ? Protocol::linear_probe : Protocol::finetune;
  return r;
}

struct Episode {
  std::vector<int> classes;  // original labels, in episode label order
  std::vector<const PointCloud*> support, query;
  std::vector<int> support_y, query_y;  // episode labels 0..n_way-1
};

// Draws n_way classes, then m_shot support and n_query query clouds from each.
inline Episode sample_episode(const std::vector<const PointCloud*>& pool, const std::vector<std::string>& class_names,
                              std::size_t n_way, std::size_t m_shot, std::size_t n_query, Rng& rng) {
  std::map<int, std::vector<const PointCloud*>> by_class;
  for (const auto* pc : pool) by_class[*pc->label].push_back(pc);
  std::vector<int> eligible;
  std::string short_classes;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const std::size_t have = by_class[static_cast<int>(c)].size();
    if (have >= m_shot + n_query) eligible.push_back(static_cast<int>(c));
    else short_classes += (short_classes.empty() ? "" : ", ") + class_names[c] + " (" + std::to_string(have) + ")";
  }
  if (eligible.size() < n_way)
    throw DataError("fewshot: " + std::to_string(n_way) + "-way episodes need " + std::to_string(m_shot + n_query) +
                    " clouds per class; too few in " + (short_classes.empty() ? "the dataset" : short_classes));
  rng.shuffle(eligible);
  Episode ep;
  ep.classes.assign(eligible.begin(), eligible.begin() + static_cast<long>(n_way));
  for (std::size_t k = 0; k < n_way; ++k) {
    auto members = by_class[ep.classes[k]];
    rng.shuffle(members);
    for (std::size_t i = 0; i < m_shot + n_query; ++i) {
      auto& dst = i < m_shot ? ep.support : ep.query;
      auto& dy = i < m_shot ? ep.support_y : ep.query_y;
      dst.push_back(members[i]);
      dy.push_back(static_cast<int>(k));
    }
  }
  return ep;
}

inline void summarize_episodes(ProbeResult& r) {
  const double n = static_cast<double>(r.episodes.size());
  r.mean = std::accumulate(r.episodes.begin(), r.episodes.end(), 0.0) / n;
  double var = 0;
  for (double a : r.episodes) var += (a - r.mean) * (a - r.mean) / n;
  r.stddev = std::sqrt(var);
  r.accuracy = r.mean;
}

// N-way M-shot episodes over every split pooled together. Episode i draws
// from its own seed, so runs can be reordered or repeated.
template <class T>
ProbeResult fewshot(const JepaModel<T>& model, const Dataset& ds, const EvalConfig& ec, std::uint64_t seed) {
  if (ec.n_way == 0 || ec.m_shot == 0 || ec.n_query == 0 || ec.runs == 0)
    throw ConfigError("fewshot: n_way, m_shot, n_query and runs must be >= 1");
  const auto& mc = model.config();
  std::vector<const PointCloud*> pool;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& pc : *split) pool.push_back(&pc);
  ProbeResult r;
  r.protocol = Protocol::fewshot;
  for (std::size_t run = 0; run < ec.runs; ++run) {
    Rng rng(derive_seed(seed, {hash_string("episode"), run}));
    const Episode ep = sample_episode(pool, ds.class_names, ec.n_way, ec.m_shot, ec.n_query, rng);
    std::vector<std::string> qids;
    for (const auto* pc : ep.query) qids.push_back(pc->id);
    std::vector<Prediction> preds;
    const std::uint64_t ep_seed = derive_seed(seed, {hash_string("episode.train"), run});
    if (ec.fewshot_mode == "probe") {
      std::vector<PointCloud> s, q;
      for (const auto* pc : ep.support) s.push_back(*pc);
      for (const auto* pc : ep.query) q.push_back(*pc);
      preds = linear_probe(extract_features(model, s, ec.pooling), ep.support_y, extract_features(model, q, ec.pooling),
                           ep.query_y, qids, ec.n_way, {ec.probe_epochs, ec.probe_lr, ec.probe_weight_decay})
                  .predictions;
    } else {
      Classifier<T> net(model.student(), mc, ec.n_way, ec.pooling, ec.dropout, ep_seed);
      train_classifier(net, eval_tokens<T>(ep.support, mc), ep.support_y, {ec.fewshot_epochs, ec.fewshot_lr, 0.05, ec.finetune_batch, false}, ep_seed);
      preds = classify(net, eval_tokens<T>(ep.query, mc), ep.query_y, qids);
    }
    const auto s = score(Protocol::fewshot, preds, ec.n_way);
    r.episodes.push_back(s.accuracy);
    r.n_test += s.n_test;
    r.correct += s.correct;
    for (auto& p : preds) r.predictions.push_back(std::move(p));
  }
  summarize_episodes(r);
  return r;
}

}  // namespace jepa3d
