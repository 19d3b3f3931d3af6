// Angular-margin classification losses on the unit hypersphere and their
// closed-form gradients.
//
//   L_y  identity loss: softmax over K cosine logits s*cos(theta_j), margin on
//        the target logit, cross-entropy against a (possibly soft) identity label
//   L_v  viewpoint-aware loss: the same over the K*V viewpoint centers
//   L_R  center regularization: mean over (k, v) of 1 - cos(W_k, U_{k,v})
//
// Combined: value = L_y + L_v + beta * L_R, with terms switched on per LabelMode.
// Cosines are computed against the actual norms of x and of each center, so
// the gradients are exact for any (not only unit) inputs; the forward entry
// points still insist on a unit-norm feature.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vareid/error.hpp"
#include "vareid/geometry.hpp"
#include "vareid/soft_labels.hpp"

namespace vareid {

enum class MarginMode {
  arc_plus,   // s * cos(theta + m), ArcFace
  arc_minus,  // s * cos(theta - m)
  cos_sub,    // s * (cos(theta) - m), CosFace
};

/// Which loss terms and which identity target a training run uses. One value
/// per ablation row: Xent, LSR, L_y (adaptive LSR), L_y + L_v, L_y + L_R, and
/// the full objective.
enum class LabelMode { xent, lsr, alsr, ly_lv, ly_lr, va_reid };

inline std::string_view to_string(MarginMode mode) {
  switch (mode) {
    case MarginMode::arc_plus: return "arc_plus";
    case MarginMode::arc_minus: return "arc_minus";
    case MarginMode::cos_sub: return "cos_sub";
  }
  return "arc_plus";
}

inline std::string_view to_string(LabelMode mode) {
  switch (mode) {
    case LabelMode::xent: return "xent";
    case LabelMode::lsr: return "lsr";
    case LabelMode::alsr: return "alsr";
    case LabelMode::ly_lv: return "ly_lv";
    case LabelMode::ly_lr: return "ly_lr";
    case LabelMode::va_reid: return "va_reid";
  }
  return "xent";
}

inline std::optional<MarginMode> parse_margin_mode(std::string_view name) {
  if (name == "arc_plus") return MarginMode::arc_plus;
  if (name == "arc_minus") return MarginMode::arc_minus;
  if (name == "cos_sub") return MarginMode::cos_sub;
  return std::nullopt;
}

inline std::optional<LabelMode> parse_label_mode(std::string_view name) {
  if (name == "xent") return LabelMode::xent;
  if (name == "lsr") return LabelMode::lsr;
  if (name == "alsr") return LabelMode::alsr;
  if (name == "ly_lv" || name == "alsr_plus_valsr") return LabelMode::ly_lv;
  if (name == "ly_lr") return LabelMode::ly_lr;
  if (name == "va_reid") return LabelMode::va_reid;
  return std::nullopt;
}

inline constexpr bool uses_viewpoint_loss(LabelMode mode) {
  return mode == LabelMode::ly_lv || mode == LabelMode::va_reid;
}

inline constexpr bool uses_center_regularization(LabelMode mode) {
  return mode == LabelMode::ly_lr || mode == LabelMode::va_reid;
}

struct LossConfig {
  double scale = 30.0;
  double margin = 0.5;
  MarginMode margin_mode = MarginMode::arc_plus;
  double alpha = 0.2;
  double beta = 0.1;
  double lsr_epsilon = 0.1;

  void validate() const {
    if (!(scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "scale must be positive");
    if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
      throw Error(ErrorKind::InvalidConfig, "margin must lie in [0, pi/2)");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw Error(ErrorKind::InvalidConfig, "beta must be non-negative");
    if (!(lsr_epsilon >= 0.0 && lsr_epsilon < 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "lsr epsilon must lie in [0, 1)");
    }
  }
};

/// Identity centers W (one row per identity) and viewpoint centers U (one row
/// per (identity, viewpoint) pair in flat order identity * V + viewpoint).
struct ClassifierParams {
  Matrix identity_centers;
  Matrix viewpoint_centers;
  std::size_t num_viewpoints = kDefaultViewpoints;

  std::size_t num_identities() const { return identity_centers.rows; }
  std::size_t dim() const { return identity_centers.cols; }

  void validate() const {
    if (num_viewpoints == 0 || viewpoint_centers.rows != identity_centers.rows * num_viewpoints ||
        viewpoint_centers.cols != identity_centers.cols) {
      throw Error(ErrorKind::ShapeMismatch, "viewpoint centers must be (K*V) x d with d matching identity centers");
    }
  }
};

struct LossOutput {
  double value = 0.0;
  double loss_y = 0.0;
  double loss_v = 0.0;
  double loss_r = 0.0;  // unweighted; value includes beta * loss_r
  Vec grad_x;
  Matrix grad_identity;
  Matrix grad_viewpoint;
};

namespace detail {

// Below this sin(theta) the arc margins' derivative is clamped; the true
// derivative diverges as the feature aligns exactly with its center.
inline constexpr double kMinSine = 1e-9;

struct MarginValue {
  double value;
  double slope;  // d value / d cos(theta)
};

inline MarginValue apply_margin(double c, double m, MarginMode mode) {
  const double sine = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double safe_sine = std::max(sine, kMinSine);
  switch (mode) {
    case MarginMode::arc_plus:
      return {c * std::cos(m) - sine * std::sin(m), std::cos(m) + std::sin(m) * c / safe_sine};
    case MarginMode::arc_minus:
      return {c * std::cos(m) + sine * std::sin(m), std::cos(m) - std::sin(m) * c / safe_sine};
    case MarginMode::cos_sub:
      return {c - m, 1.0};
  }
  return {c, 1.0};
}

// Unclamped cosine; the exact quotient keeps analytic gradients consistent
// with the forward value.
inline double raw_cosine(std::span<const double> a, double norm_a, std::span<const double> b, double norm_b) {
  return dot(a, b) / (norm_a * norm_b);
}

/// Forward state of one normalized-softmax head.
struct AngularHead {
  std::vector<double> cosines;
  std::vector<double> log_probs;
  LabelDistribution probs;
  std::vector<double> center_norms;
  double feature_norm = 1.0;
  std::size_t target = 0;
  double target_slope = 1.0;
  std::size_t top = 0;          // largest logit
  double top_complement = 0.0;  // 1 - p_top, kept separately to avoid cancellation
};

inline AngularHead angular_head(std::span<const double> x, const Matrix& centers, const LossConfig& cfg,
                                std::size_t target) {
  if (centers.cols != x.size()) throw Error(ErrorKind::ShapeMismatch, "feature and center dimensions differ");
  check_index(target, centers.rows, "target class");
  AngularHead head;
  head.target = target;
  head.feature_norm = checked_norm(x);
  head.cosines.resize(centers.rows);
  head.center_norms.resize(centers.rows);
  std::vector<double> logits(centers.rows);
  for (std::size_t j = 0; j < centers.rows; ++j) {
    head.center_norms[j] = checked_norm(centers.row(j));
    head.cosines[j] = raw_cosine(x, head.feature_norm, centers.row(j), head.center_norms[j]);
    logits[j] = cfg.scale * head.cosines[j];
  }
  const MarginValue margin = apply_margin(head.cosines[target], cfg.margin, cfg.margin_mode);
  logits[target] = cfg.scale * margin.value;
  head.target_slope = margin.slope;

  // log p_j = (z_j - z_max) - log1p(sum_{i != max} exp(z_i - z_max)); keeps
  // the loss of a confidently classified sample accurate down to ~1e-300.
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double max_logit = logits[top];
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != top) rest += std::exp(logits[j] - max_logit);
  }
  const double log_norm = std::log1p(rest);
  head.top = top;
  head.top_complement = rest / (1.0 + rest);
  head.log_probs.resize(logits.size());
  head.probs.probs.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    head.log_probs[j] = (logits[j] - max_logit) - log_norm;
    head.probs.probs[j] = std::exp(head.log_probs[j]);
  }
  return head;
}

inline double head_cross_entropy(const AngularHead& head, const LabelDistribution& target) {
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) loss -= target[j] * head.log_probs[j];
  }
  return loss;
}

// Accumulates d(weight * CE(target, softmax)) into grad_x and grad_centers.
// For a constant target t with total T, dCE/dlogit_j = T p_j - t_j. T is
// summed rather than assumed to be 1: near-saturated heads have gradients
// small enough for its rounding to matter.
inline void head_backward(const AngularHead& head, std::span<const double> x, const Matrix& centers,
                          const LossConfig& cfg, const LabelDistribution& target, double weight,
                          std::span<double> grad_x, Matrix& grad_centers) {
  const std::size_t d = x.size();
  double others = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (j != head.top) others += target[j];
  }
  const double total = others + target[head.top];
  for (std::size_t j = 0; j < centers.rows; ++j) {
    // T p_top - t_top = (T - t_top) - T (1 - p_top)
    const double dlogit =
        j == head.top ? others - total * head.top_complement : total * head.probs[j] - target[j];
    double dcos = weight * dlogit * cfg.scale;
    if (j == head.target) dcos *= head.target_slope;
    if (dcos == 0.0) continue;
    const double c = head.cosines[j];
    const double nw = head.center_norms[j];
    const auto w = centers.row(j);
    auto gw = grad_centers.row(j);
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = x[i] / head.feature_norm;
      const double wh = w[i] / nw;
      grad_x[i] += dcos * (wh - c * xh) / head.feature_norm;
      gw[i] += dcos * (xh - c * wh) / nw;
    }
  }
}

}  // namespace detail

/// Cross-entropy of one normalized-softmax head against a fixed target, with
/// gradients for the feature and for every center row.
struct AngularLoss {
  double value = 0.0;
  LabelDistribution probs;
  Vec grad_x;
  Matrix grad_centers;
};

inline AngularLoss angular_loss(std::span<const double> x, const Matrix& centers, const LossConfig& cfg,
                                std::size_t target_index, const LabelDistribution& target) {
  if (target.size() != centers.rows) throw Error(ErrorKind::LengthMismatch, "target size differs from class count");
  const detail::AngularHead head = detail::angular_head(x, centers, cfg, target_index);
  AngularLoss out{detail::head_cross_entropy(head, target), head.probs, Vec(x.size(), 0.0),
                  Matrix(centers.rows, centers.cols)};
  detail::head_backward(head, x, centers, cfg, target, 1.0, out.grad_x, out.grad_centers);
  return out;
}

/// Identity probabilities q over K classes with the margin on the target.
inline LabelDistribution identity_probs(std::span<const double> x, const Matrix& identity_centers,
                                        const LossConfig& cfg, std::size_t y) {
  require_unit(x, "feature");
  return detail::angular_head(x, identity_centers, cfg, y).probs;
}

/// Viewpoint-aware probabilities r over all K*V sub-classes, margin on (y, v) only.
inline LabelDistribution viewpoint_probs(std::span<const double> x, const Matrix& viewpoint_centers,
                                         const LossConfig& cfg, std::size_t y, std::size_t v,
                                         std::size_t num_viewpoints) {
  require_unit(x, "feature");
  detail::check_index(v, num_viewpoints, "viewpoint");
  detail::check_index(y, viewpoint_centers.rows / num_viewpoints, "identity");
  return detail::angular_head(x, viewpoint_centers, cfg, ViewAwareIndex{y, v}.flat(num_viewpoints)).probs;
}

inline double cross_entropy(const LabelDistribution& target, const LabelDistribution& probs) {
  if (target.size() != probs.size()) {
    throw Error(ErrorKind::LengthMismatch, "target and prediction have different class counts");
  }
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] != 0.0) loss -= target[j] * std::log(probs[j]);
  }
  return loss;
}

struct CenterRegularization {
  double value = 0.0;
  Matrix grad_identity;
  Matrix grad_viewpoint;
};

inline CenterRegularization center_regularization(const ClassifierParams& params) {
  params.validate();
  const std::size_t k_count = params.num_identities();
  const std::size_t views = params.num_viewpoints;
  const std::size_t d = params.dim();
  CenterRegularization out{0.0, Matrix(k_count, d), Matrix(k_count * views, d)};
  const double inv_pairs = 1.0 / static_cast<double>(k_count * views);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto w = params.identity_centers.row(k);
    const double nw = checked_norm(w);
    auto gw = out.grad_identity.row(k);
    for (std::size_t v = 0; v < views; ++v) {
      const std::size_t flat = ViewAwareIndex{k, v}.flat(views);
      const auto u = params.viewpoint_centers.row(flat);
      const double nu = checked_norm(u);
      const double c = detail::raw_cosine(w, nw, u, nu);
      out.value += (1.0 - c) * inv_pairs;
      auto gu = out.grad_viewpoint.row(flat);
      for (std::size_t i = 0; i < d; ++i) {
        const double wh = w[i] / nw;
        const double uh = u[i] / nu;
        gw[i] -= inv_pairs * (uh - c * wh) / nw;
        gu[i] -= inv_pairs * (wh - c * uh) / nu;
      }
    }
  }
  return out;
}

/// Mean cos(W_k, U_{k,v}) over all pairs; the quantity L_R drives towards 1.
inline double mean_center_cosine(const ClassifierParams& params) {
  params.validate();
  double sum = 0.0;
  for (std::size_t k = 0; k < params.num_identities(); ++k) {
    for (std::size_t v = 0; v < params.num_viewpoints; ++v) {
      sum += cosine(params.identity_centers.row(k),
                    params.viewpoint_centers.row(ViewAwareIndex{k, v}.flat(params.num_viewpoints)));
    }
  }
  return sum / static_cast<double>(params.num_identities() * params.num_viewpoints);
}

/// Soft (or hard) targets for one sample, built from the current predictions.
struct VaTargets {
  LabelDistribution identity;
  std::optional<LabelDistribution> viewpoint;  // set when the mode uses L_v
};

inline VaTargets build_targets(std::span<const double> x, std::size_t y, std::size_t v,
                               const ClassifierParams& params, const LossConfig& cfg, LabelMode mode) {
  params.validate();
  const std::size_t k_count = params.num_identities();
  const std::size_t views = params.num_viewpoints;
  detail::check_index(y, k_count, "identity");
  detail::check_index(v, views, "viewpoint");
  VaTargets t;
  switch (mode) {
    case LabelMode::xent: t.identity = hard_identity(y, k_count); break;
    case LabelMode::lsr: t.identity = lsr(y, k_count, cfg.lsr_epsilon); break;
    default: {
      const auto q = detail::angular_head(x, params.identity_centers, cfg, y).probs;
      t.identity = alsr(y, k_count, cfg.alpha, q);
      break;
    }
  }
  if (uses_viewpoint_loss(mode)) {
    const auto r =
        detail::angular_head(x, params.viewpoint_centers, cfg, ViewAwareIndex{y, v}.flat(views)).probs;
    t.viewpoint = valsr(y, v, k_count, views, cfg.alpha, r);
  }
  return t;
}

/// Loss value and exact gradients for fixed targets. Accepts any nonzero x;
/// the cosines use its actual norm.
inline LossOutput va_loss_with_targets(std::span<const double> x, std::size_t y, std::size_t v,
                                       const ClassifierParams& params, const LossConfig& cfg, LabelMode mode,
                                       const VaTargets& targets) {
  params.validate();
  const std::size_t views = params.num_viewpoints;
  LossOutput out;
  out.grad_viewpoint = Matrix(params.viewpoint_centers.rows, params.viewpoint_centers.cols);

  const AngularLoss id_loss = angular_loss(x, params.identity_centers, cfg, y, targets.identity);
  out.loss_y = id_loss.value;
  out.grad_x = id_loss.grad_x;
  out.grad_identity = id_loss.grad_centers;

  if (uses_viewpoint_loss(mode)) {
    if (!targets.viewpoint) throw Error(ErrorKind::InvalidDistribution, "viewpoint target missing");
    const AngularLoss view_loss =
        angular_loss(x, params.viewpoint_centers, cfg, ViewAwareIndex{y, v}.flat(views), *targets.viewpoint);
    out.loss_v = view_loss.value;
    for (std::size_t i = 0; i < x.size(); ++i) out.grad_x[i] += view_loss.grad_x[i];
    out.grad_viewpoint = view_loss.grad_centers;
  }

  if (uses_center_regularization(mode)) {
    const CenterRegularization reg = center_regularization(params);
    out.loss_r = reg.value;
    for (std::size_t i = 0; i < reg.grad_identity.data.size(); ++i) {
      out.grad_identity.data[i] += cfg.beta * reg.grad_identity.data[i];
    }
    for (std::size_t i = 0; i < reg.grad_viewpoint.data.size(); ++i) {
      out.grad_viewpoint.data[i] += cfg.beta * reg.grad_viewpoint.data[i];
    }
  }

  out.value = out.loss_y + out.loss_v + cfg.beta * out.loss_r;
  return out;
}

/// L_y + L_v + beta * L_R for one sample, terms selected by `mode`. Soft
/// targets come from the current predictions and are held constant in the
/// gradients.
inline LossOutput va_loss(std::span<const double> x, std::size_t y, std::size_t v, const ClassifierParams& params,
                          const LossConfig& cfg, LabelMode mode) {
  require_unit(x, "feature");
  return va_loss_with_targets(x, y, v, params, cfg, mode, build_targets(x, y, v, params, cfg, mode));
}

}  // namespace vareid
