// Central finite-difference check of every analytic gradient in the library:
// identity loss, viewpoint-aware loss, center regularization, the combined
// objective for every label mode, and the loss composed with the embedder.
//
// Soft targets are frozen at the unperturbed point on both sides, matching the
// stop-gradient convention of the analytic path. Errors are norm-wise per
// gradient tensor: |analytic - numeric| / max(|analytic|, |numeric|).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vareid/embedder.hpp"
#include "vareid/losses.hpp"
#include "vareid/synth.hpp"

namespace vareid {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t repeats = 6;  // instances per (margin mode, label mode) pair
  double step = 1e-6;
  double tolerance = 1e-5;
  std::size_t dim = 8;
  std::size_t identities = 4;
  std::size_t viewpoints = 3;
  /// Test hook: added to the first entry of every analytic gradient.
  double analytic_perturbation = 0.0;
};

struct GradcheckComponent {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t tensors_checked = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckComponent> components;
  std::size_t instances = 0;

  bool pass() const {
    return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.pass; });
  }

  std::string to_text(double tolerance) const {
    std::ostringstream out;
    out << "gradcheck: " << instances << " instances, tolerance " << tolerance << "\n";
    out.precision(3);
    for (const GradcheckComponent& c : components) {
      out << "  " << c.name << std::string(c.name.size() < 12 ? 12 - c.name.size() : 1, ' ')
          << std::scientific << c.max_rel_error << "  (" << c.tensors_checked << " tensors)  "
          << (c.pass ? "ok" : "FAIL") << "\n";
    }
    out << (pass() ? "PASS" : "FAIL") << "\n";
    return out.str();
  }
};

inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

/// Central differences of `f` with respect to every entry of `values`.
inline Vec numeric_gradient(std::span<double> values, const std::function<double()>& f, double h) {
  Vec g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace detail {

struct GradcheckAccumulator {
  GradcheckComponent component;
  double perturbation = 0.0;

  void check(std::span<const double> analytic, std::span<double> values, const std::function<double()>& f,
             double h) {
    Vec a(analytic.begin(), analytic.end());
    if (!a.empty()) a[0] += perturbation;
    const Vec n = numeric_gradient(values, f, h);
    component.max_rel_error = std::max(component.max_rel_error, relative_error(a, n));
    ++component.tensors_checked;
  }
};

template <class Rng>
Matrix random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec u = random_unit(cols, rng);
    std::copy(u.begin(), u.end(), m.row(r).begin());
  }
  return m;
}

}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  auto rng = make_stream(opt.seed, 0x67726164);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t d = opt.dim, k_count = opt.identities, views = opt.viewpoints;
  const double h = opt.step;

  detail::GradcheckAccumulator identity{{"identity"}, opt.analytic_perturbation};
  detail::GradcheckAccumulator viewpoint{{"viewpoint"}, opt.analytic_perturbation};
  detail::GradcheckAccumulator center{{"center"}, opt.analytic_perturbation};
  detail::GradcheckAccumulator combined{{"combined"}, opt.analytic_perturbation};
  detail::GradcheckAccumulator end_to_end{{"end_to_end"}, opt.analytic_perturbation};

  const MarginMode margins[] = {MarginMode::arc_plus, MarginMode::arc_minus, MarginMode::cos_sub};
  const LabelMode modes[] = {LabelMode::xent,  LabelMode::lsr,   LabelMode::alsr,
                             LabelMode::ly_lv, LabelMode::ly_lr, LabelMode::va_reid};
  GradcheckReport report;

  for (MarginMode margin : margins) {
    for (LabelMode mode : modes) {
      for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
        ++report.instances;
        LossConfig cfg;
        cfg.margin_mode = margin;
        cfg.scale = 4.0 + 26.0 * unit(rng);
        cfg.margin = 0.6 * unit(rng);
        cfg.alpha = detail::kMaxViewAlpha * unit(rng);
        cfg.beta = unit(rng);
        cfg.lsr_epsilon = 0.5 * unit(rng);

        ClassifierParams params{detail::random_rows(k_count, d, rng), Matrix(k_count * views, d), views};
        for (std::size_t r = 0; r < params.viewpoint_centers.rows; ++r) {
          auto u = params.viewpoint_centers.row(r);
          const auto w = params.identity_centers.row(r / views);
          for (std::size_t i = 0; i < d; ++i) u[i] = w[i] + 0.5 * gauss(rng);
          normalize_in_place(u);
        }
        Vec x = random_unit(d, rng);
        const std::size_t y = std::uniform_int_distribution<std::size_t>(0, k_count - 1)(rng);
        const std::size_t v = std::uniform_int_distribution<std::size_t>(0, views - 1)(rng);
        const VaTargets targets = build_targets(x, y, v, params, cfg, mode);

        // Single heads against the frozen targets.
        {
          const AngularLoss a = angular_loss(x, params.identity_centers, cfg, y, targets.identity);
          auto f = [&] { return angular_loss(x, params.identity_centers, cfg, y, targets.identity).value; };
          identity.check(a.grad_x, x, f, h);
          identity.check(a.grad_centers.data, params.identity_centers.data, f, h);
        }
        {
          const std::size_t flat = ViewAwareIndex{y, v}.flat(views);
          const LabelDistribution target =
              targets.viewpoint ? *targets.viewpoint
                                : valsr(y, v, k_count, views, cfg.alpha,
                                        viewpoint_probs(x, params.viewpoint_centers, cfg, y, v, views));
          const AngularLoss a = angular_loss(x, params.viewpoint_centers, cfg, flat, target);
          auto f = [&] { return angular_loss(x, params.viewpoint_centers, cfg, flat, target).value; };
          viewpoint.check(a.grad_x, x, f, h);
          viewpoint.check(a.grad_centers.data, params.viewpoint_centers.data, f, h);
        }
        {
          const CenterRegularization a = center_regularization(params);
          auto f = [&] { return center_regularization(params).value; };
          center.check(a.grad_identity.data, params.identity_centers.data, f, h);
          center.check(a.grad_viewpoint.data, params.viewpoint_centers.data, f, h);
        }
        {
          const LossOutput a = va_loss_with_targets(x, y, v, params, cfg, mode, targets);
          // Each tensor is checked against only the terms that depend on it. A
          // term constant in that tensor would bury a tiny loss under its rounding.
          auto f = [&](double wy, double wv, double wr) {
            return [&, wy, wv, wr] {
              const LossOutput o = va_loss_with_targets(x, y, v, params, cfg, mode, targets);
              return wy * o.loss_y + wv * o.loss_v + wr * cfg.beta * o.loss_r;
            };
          };
          combined.check(a.grad_x, x, f(1, 1, 0), h);
          combined.check(a.grad_identity.data, params.identity_centers.data, f(1, 0, 1), h);
          combined.check(a.grad_viewpoint.data, params.viewpoint_centers.data, f(0, 1, 1), h);
        }
        // Loss composed with the embedder: raw -> tanh layer -> d -> sphere.
        {
          EmbedderParams net = init_embedder(6, 10, d, rng);
          for (double& b : net.b1) b = 0.1 * gauss(rng);
          for (double& b : net.b2) b = 0.1 * gauss(rng);
          Vec raw(6);
          for (double& r : raw) r = gauss(rng);
          const EmbedTrace trace = embed_with_trace(net, raw);
          const VaTargets frozen = build_targets(trace.embedding, y, v, params, cfg, mode);
          const LossOutput out = va_loss_with_targets(trace.embedding, y, v, params, cfg, mode, frozen);
          EmbedderGrads grads(net);
          embed_backward(net, trace, raw, out.grad_x, grads);
          // The center term does not depend on the embedder.
          auto f = [&] {
            const LossOutput o = va_loss_with_targets(embed(net, raw), y, v, params, cfg, mode, frozen);
            return o.loss_y + o.loss_v;
          };
          end_to_end.check(grads.w1.data, net.w1.data, f, h);
          end_to_end.check(grads.b1, net.b1, f, h);
          end_to_end.check(grads.w2.data, net.w2.data, f, h);
          end_to_end.check(grads.b2, net.b2, f, h);
        }
      }
    }
  }

  for (auto* acc : {&identity, &viewpoint, &center, &combined, &end_to_end}) {
    acc->component.pass = acc->component.max_rel_error < opt.tolerance;
    report.components.push_back(acc->component);
  }
  return report;
}

}  // namespace vareid
