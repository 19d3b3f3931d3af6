// Training loop: P x Q batches, embed -> soft labels from live predictions ->
// L_y + L_v + beta * L_R -> analytic gradients -> Adam -> renormalize centers,
// with retrieval evaluation after every epoch.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vareid/embedder.hpp"
#include "vareid/error.hpp"
#include "vareid/eval.hpp"
#include "vareid/geometry.hpp"
#include "vareid/losses.hpp"
#include "vareid/optim.hpp"
#include "vareid/sampler.hpp"
#include "vareid/synth.hpp"

namespace vareid {

struct TrainConfig {
  LossConfig loss;
  LabelMode label_mode = LabelMode::va_reid;
  std::size_t epochs = 200;
  LrSchedule schedule;
  AdamConfig adam;
  std::size_t p = 16;  // identities per batch
  std::size_t q = 4;   // samples per identity
  std::size_t raw_dim = 32;
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
  bool view_init_near_identity = true;
  double view_init_noise = 0.1;  // per-coordinate std of U_{k,v} around W_k
  std::uint64_t seed = 0;

  void validate() const {
    loss.validate();
    schedule.validate();
    if (uses_viewpoint_loss(label_mode) && loss.alpha > detail::kMaxViewAlpha) {
      throw Error(ErrorKind::InvalidConfig, "alpha above 0.5 is not supported with the viewpoint loss");
    }
    if (p < 2 || q < 2) throw Error(ErrorKind::InvalidConfig, "batch needs p >= 2 and q >= 2");
    if (raw_dim == 0 || hidden == 0 || embed_dim < 2) throw Error(ErrorKind::InvalidConfig, "bad model dimensions");
    if (!(view_init_noise >= 0.0)) throw Error(ErrorKind::InvalidConfig, "view_init_noise must be non-negative");
  }
};

struct Model {
  TrainConfig config;
  EmbedderParams embedder;
  ClassifierParams classifier;
  std::vector<int> identity_labels;  // dense class index -> dataset identity

  friend bool operator==(const Model& a, const Model& b) {
    return a.embedder == b.embedder && a.classifier.identity_centers == b.classifier.identity_centers &&
           a.classifier.viewpoint_centers == b.classifier.viewpoint_centers &&
           a.classifier.num_viewpoints == b.classifier.num_viewpoints && a.identity_labels == b.identity_labels;
  }
};

struct MetricsRow {
  std::size_t epoch = 0;
  double loss_y = 0.0;
  double loss_v = 0.0;
  double loss_r = 0.0;
  double loss_total = 0.0;
  double map = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<MetricsRow> metrics;
  EvalReport final_report;
};

/// Dense class indices for the training split.
struct TrainIndex {
  std::vector<int> identity_labels;
  std::vector<std::size_t> sample_class;  // per dataset sample; only valid for train samples
  ClassBuckets buckets;
  std::vector<std::size_t> train_samples;
};

inline TrainIndex index_training_split(const Dataset& data) {
  std::map<int, std::size_t> dense;
  for (const Sample& s : data) {
    if (s.split == Split::train) dense.emplace(s.identity, 0);
  }
  TrainIndex idx;
  for (auto& [label, cls] : dense) {
    cls = idx.identity_labels.size();
    idx.identity_labels.push_back(label);
  }
  idx.buckets.resize(dense.size());
  idx.sample_class.assign(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].split != Split::train) continue;
    const std::size_t cls = dense.at(data[i].identity);
    idx.sample_class[i] = cls;
    idx.buckets[cls].push_back(i);
    idx.train_samples.push_back(i);
  }
  return idx;
}

template <class Rng>
ClassifierParams init_classifier(std::size_t num_identities, std::size_t num_viewpoints, std::size_t dim,
                                 const TrainConfig& cfg, Rng& rng) {
  ClassifierParams c{Matrix(num_identities, dim), Matrix(num_identities * num_viewpoints, dim), num_viewpoints};
  for (std::size_t k = 0; k < num_identities; ++k) {
    const Vec w = random_unit(dim, rng);
    std::copy(w.begin(), w.end(), c.identity_centers.row(k).begin());
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t k = 0; k < num_identities; ++k) {
    for (std::size_t v = 0; v < num_viewpoints; ++v) {
      auto u = c.viewpoint_centers.row(ViewAwareIndex{k, v}.flat(num_viewpoints));
      if (cfg.view_init_near_identity) {
        const auto w = c.identity_centers.row(k);
        for (std::size_t i = 0; i < dim; ++i) u[i] = w[i] + cfg.view_init_noise * gauss(rng);
        normalize_in_place(u);
      } else {
        const Vec r = random_unit(dim, rng);
        std::copy(r.begin(), r.end(), u.begin());
      }
    }
  }
  return c;
}

inline Model init_model(const TrainConfig& cfg, const TrainIndex& index, std::size_t num_viewpoints) {
  auto rng = make_stream(cfg.seed, stream::init);
  Model m;
  m.config = cfg;
  m.embedder = init_embedder(cfg.raw_dim, cfg.hidden, cfg.embed_dim, rng);
  m.classifier = init_classifier(index.identity_labels.size(), num_viewpoints, cfg.embed_dim, cfg, rng);
  m.identity_labels = index.identity_labels;
  return m;
}

/// Retrieval metrics of the model's embeddings on the query/gallery split.
inline EvalReport evaluate_model(const EmbedderParams& embedder, const Dataset& data, std::size_t num_viewpoints,
                                 std::size_t max_rank = kDefaultMaxRank) {
  std::vector<Vec> queries, gallery;
  RetrievalLabels ql, gl;
  for (const Sample& s : data) {
    if (s.split == Split::train) continue;
    auto& emb = s.split == Split::query ? queries : gallery;
    auto& lab = s.split == Split::query ? ql : gl;
    emb.push_back(embed(embedder, s.raw));
    lab.identity.push_back(s.identity);
    lab.camera.push_back(s.camera);
    lab.viewpoint.push_back(s.viewpoint);
  }
  return evaluate_embeddings(queries, ql, gallery, gl, num_viewpoints, std::max<std::size_t>(max_rank, 5));
}

/// Gradients of a batch-averaged loss with respect to every trainable tensor.
struct ModelGrads {
  EmbedderGrads embedder;
  Matrix identity_centers;
  Matrix viewpoint_centers;

  explicit ModelGrads(const Model& m)
      : embedder(m.embedder),
        identity_centers(m.classifier.identity_centers.rows, m.classifier.identity_centers.cols),
        viewpoint_centers(m.classifier.viewpoint_centers.rows, m.classifier.viewpoint_centers.cols) {}
};

struct BatchLoss {
  double loss_y = 0.0;
  double loss_v = 0.0;
  double loss_r = 0.0;
  double total = 0.0;
};

/// Sums per-sample losses (and, when `grads` is set, gradients scaled by
/// `grad_weight`) over `samples` in order.
inline BatchLoss accumulate_batch(const Model& model, const Dataset& data, const TrainIndex& index,
                                  std::span<const std::size_t> samples, double grad_weight, ModelGrads* grads) {
  const TrainConfig& cfg = model.config;
  BatchLoss sum;
  for (std::size_t i : samples) {
    const Sample& s = data[i];
    const EmbedTrace trace = embed_with_trace(model.embedder, s.raw);
    const LossOutput out = va_loss(trace.embedding, index.sample_class[i], static_cast<std::size_t>(s.viewpoint),
                                   model.classifier, cfg.loss, cfg.label_mode);
    sum.loss_y += out.loss_y;
    sum.loss_v += out.loss_v;
    sum.loss_r += out.loss_r;
    sum.total += out.value;
    if (grads == nullptr) continue;
    for (std::size_t k = 0; k < out.grad_identity.data.size(); ++k) {
      grads->identity_centers.data[k] += grad_weight * out.grad_identity.data[k];
    }
    for (std::size_t k = 0; k < out.grad_viewpoint.data.size(); ++k) {
      grads->viewpoint_centers.data[k] += grad_weight * out.grad_viewpoint.data[k];
    }
    Vec gx = out.grad_x;
    for (double& g : gx) g *= grad_weight;
    embed_backward(model.embedder, trace, s.raw, gx, grads->embedder);
  }
  return sum;
}

/// Adam over all tensors, then every identity and viewpoint center is put back
/// on the unit sphere. Weight decay applies to the embedder only.
inline void apply_adam(Model& model, const ModelGrads& grads, AdamState& state, double lr) {
  const std::vector<ParamSlot> slots{
      {model.embedder.w1.data, grads.embedder.w1.data, true},
      {model.embedder.b1, grads.embedder.b1, true},
      {model.embedder.w2.data, grads.embedder.w2.data, true},
      {model.embedder.b2, grads.embedder.b2, true},
      {model.classifier.identity_centers.data, grads.identity_centers.data, false},
      {model.classifier.viewpoint_centers.data, grads.viewpoint_centers.data, false},
  };
  adam_step(slots, state, model.config.adam, lr);
  normalize_rows(model.classifier.identity_centers);
  normalize_rows(model.classifier.viewpoint_centers);
}

inline MetricsRow make_row(std::size_t epoch, const BatchLoss& sum, std::size_t count, double beta,
                           const EvalReport& report, double lr) {
  MetricsRow row;
  row.epoch = epoch;
  const double n = static_cast<double>(std::max<std::size_t>(count, 1));
  row.loss_y = sum.loss_y / n;
  row.loss_v = sum.loss_v / n;
  row.loss_r = sum.loss_r / n;
  row.loss_total = row.loss_y + row.loss_v + beta * row.loss_r;
  row.map = report.map;
  row.rank1 = report.rank(1);
  row.rank5 = report.rank(5);
  row.lr = lr;
  return row;
}

inline void check_finite(const BatchLoss& loss, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss.total)) {
    throw Error(ErrorKind::NonFiniteLoss,
                "loss is not finite at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
  }
}

/// Metrics row 0 holds the untrained model (losses over the whole training
/// split); row e holds training epoch e, losses averaged over its batches.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  const TrainIndex index = index_training_split(data);
  if (index.train_samples.empty()) throw Error(ErrorKind::InvalidConfig, "dataset has no training samples");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec& raw = data[i].raw;
    if (raw.size() != cfg.raw_dim) {
      throw Error(ErrorKind::InvalidConfig, "sample raw_dim " + std::to_string(raw.size()) +
                                                " does not match model raw_dim " + std::to_string(cfg.raw_dim));
    }
    if (!std::all_of(raw.begin(), raw.end(), [](double x) { return std::isfinite(x); })) {
      throw Error(ErrorKind::InvalidConfig, "sample " + std::to_string(i) + " has non-finite features");
    }
  }
  const std::size_t views = count_viewpoints(data);

  TrainResult result;
  result.model = init_model(cfg, index, views);
  Model& model = result.model;
  auto sampler_rng = make_stream(cfg.seed, stream::sampler);
  AdamState adam;

  {
    const BatchLoss initial = accumulate_batch(model, data, index, index.train_samples, 0.0, nullptr);
    check_finite(initial, 0, 0);
    result.final_report = evaluate_model(model.embedder, data, views);
    result.metrics.push_back(make_row(0, initial, index.train_samples.size(), cfg.loss.beta, result.final_report,
                                      lr_at(cfg.schedule, 0)));
  }

  const std::size_t batch_size = cfg.p * cfg.q;
  const std::size_t steps = (index.train_samples.size() + batch_size - 1) / batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg.schedule, epoch);
    BatchLoss epoch_sum;
    std::size_t epoch_count = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<std::size_t> batch = pk_sample(index.buckets, cfg.p, cfg.q, sampler_rng);
      ModelGrads grads(model);
      const BatchLoss loss =
          accumulate_batch(model, data, index, batch, 1.0 / static_cast<double>(batch.size()), &grads);
      check_finite(loss, epoch + 1, step);
      epoch_sum.loss_y += loss.loss_y;
      epoch_sum.loss_v += loss.loss_v;
      epoch_sum.loss_r += loss.loss_r;
      epoch_sum.total += loss.total;
      epoch_count += batch.size();
      apply_adam(model, grads, adam, lr);
    }
    result.final_report = evaluate_model(model.embedder, data, views);
    result.metrics.push_back(make_row(epoch + 1, epoch_sum, epoch_count, cfg.loss.beta, result.final_report, lr));
  }
  return result;
}

}  // namespace vareid
