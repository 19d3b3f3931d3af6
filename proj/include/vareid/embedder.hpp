// Trainable feature extractor: raw -> hidden (elementwise nonlinearity) -> d,
// then projection onto the unit hypersphere. Stands in for a CNN backbone.
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "vareid/error.hpp"
#include "vareid/geometry.hpp"

namespace vareid {

enum class Activation { tanh, linear };

struct EmbedderParams {
  Matrix w1;  // hidden x raw_dim
  Vec b1;     // hidden
  Matrix w2;  // embed_dim x hidden
  Vec b2;     // embed_dim
  Activation activation = Activation::tanh;

  std::size_t raw_dim() const { return w1.cols; }
  std::size_t hidden() const { return w1.rows; }
  std::size_t embed_dim() const { return w2.rows; }

  void validate() const {
    if (b1.size() != w1.rows || w2.cols != w1.rows || b2.size() != w2.rows) {
      throw Error(ErrorKind::ShapeMismatch, "embedder layer shapes are inconsistent");
    }
  }

  friend bool operator==(const EmbedderParams&, const EmbedderParams&) = default;
};

/// Gradient buffers with the same layout as EmbedderParams.
struct EmbedderGrads {
  Matrix w1, w2;
  Vec b1, b2;

  explicit EmbedderGrads(const EmbedderParams& p)
      : w1(p.w1.rows, p.w1.cols), w2(p.w2.rows, p.w2.cols), b1(p.b1.size(), 0.0), b2(p.b2.size(), 0.0) {}
};

/// Intermediate values kept from the forward pass for backpropagation.
struct EmbedTrace {
  Vec hidden;       // post-activation
  Vec pre_norm;     // output before normalization
  double pre_norm_length = 1.0;
  Vec embedding;    // unit-norm output
};

/// Weights uniform in +-1/sqrt(fan_in), zero biases.
template <class Rng>
EmbedderParams init_embedder(std::size_t raw_dim, std::size_t hidden, std::size_t embed_dim, Rng& rng,
                             Activation activation = Activation::tanh) {
  if (raw_dim == 0 || hidden == 0 || embed_dim < 2) {
    throw Error(ErrorKind::InvalidConfig, "embedder needs raw_dim >= 1, hidden >= 1, embed_dim >= 2");
  }
  EmbedderParams p{Matrix(hidden, raw_dim), Vec(hidden, 0.0), Matrix(embed_dim, hidden), Vec(embed_dim, 0.0),
                   activation};
  std::uniform_real_distribution<double> first(-1.0 / std::sqrt(double(raw_dim)), 1.0 / std::sqrt(double(raw_dim)));
  for (double& w : p.w1.data) w = first(rng);
  std::uniform_real_distribution<double> second(-1.0 / std::sqrt(double(hidden)), 1.0 / std::sqrt(double(hidden)));
  for (double& w : p.w2.data) w = second(rng);
  return p;
}

inline EmbedTrace embed_with_trace(const EmbedderParams& params, std::span<const double> raw) {
  if (raw.size() != params.raw_dim()) throw Error(ErrorKind::ShapeMismatch, "raw feature has wrong dimension");
  EmbedTrace t;
  t.hidden.resize(params.hidden());
  for (std::size_t h = 0; h < params.hidden(); ++h) {
    const double a = dot(params.w1.row(h), raw) + params.b1[h];
    t.hidden[h] = params.activation == Activation::tanh ? std::tanh(a) : a;
  }
  t.pre_norm.resize(params.embed_dim());
  for (std::size_t o = 0; o < params.embed_dim(); ++o) t.pre_norm[o] = dot(params.w2.row(o), t.hidden) + params.b2[o];
  t.pre_norm_length = checked_norm(t.pre_norm);
  t.embedding = t.pre_norm;
  for (double& e : t.embedding) e /= t.pre_norm_length;
  return t;
}

inline Vec embed(const EmbedderParams& params, std::span<const double> raw) {
  return embed_with_trace(params, raw).embedding;
}

/// Accumulates d loss / d params into `grads`, given d loss / d embedding.
inline void embed_backward(const EmbedderParams& params, const EmbedTrace& trace, std::span<const double> raw,
                           std::span<const double> grad_embedding, EmbedderGrads& grads) {
  const std::size_t d = params.embed_dim();
  // Through x = z / |z|: dz = (g - x (x.g)) / |z|.
  const double radial = dot(trace.embedding, grad_embedding);
  Vec grad_pre(d);
  for (std::size_t o = 0; o < d; ++o) {
    grad_pre[o] = (grad_embedding[o] - trace.embedding[o] * radial) / trace.pre_norm_length;
  }
  Vec grad_hidden(params.hidden(), 0.0);
  for (std::size_t o = 0; o < d; ++o) {
    grads.b2[o] += grad_pre[o];
    auto gw = grads.w2.row(o);
    const auto w = params.w2.row(o);
    for (std::size_t h = 0; h < params.hidden(); ++h) {
      gw[h] += grad_pre[o] * trace.hidden[h];
      grad_hidden[h] += grad_pre[o] * w[h];
    }
  }
  for (std::size_t h = 0; h < params.hidden(); ++h) {
    const double act_slope =
        params.activation == Activation::tanh ? 1.0 - trace.hidden[h] * trace.hidden[h] : 1.0;
    const double ga = grad_hidden[h] * act_slope;
    grads.b1[h] += ga;
    auto gw = grads.w1.row(h);
    for (std::size_t i = 0; i < raw.size(); ++i) gw[i] += ga * raw[i];
  }
}

}  // namespace vareid
