// Target label distributions for the identity and viewpoint-aware classifiers:
// one-hot, label smoothing (LSR), adaptive LSR, and the three-tier
// viewpoint-aware adaptive LSR over K*V identity/viewpoint sub-classes.
//
// Soft targets built from predicted probabilities are plain values; callers
// treat them as constants when differentiating.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vareid/error.hpp"

namespace vareid {

inline constexpr double kDistributionTolerance = 1e-9;

/// Viewpoint labels used throughout: 0 = front, 1 = side, 2 = back.
inline constexpr std::size_t kDefaultViewpoints = 3;

struct LabelDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;
};

inline bool is_valid_distribution(const LabelDistribution& d) {
  if (d.probs.empty()) return false;
  double sum = 0.0;
  for (double p : d.probs) {
    if (!std::isfinite(p) || p < 0.0) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= kDistributionTolerance;
}

/// Flat index of an (identity, viewpoint) sub-class: identity * V + viewpoint.
struct ViewAwareIndex {
  std::size_t identity = 0;
  std::size_t viewpoint = 0;

  std::size_t flat(std::size_t num_viewpoints) const { return identity * num_viewpoints + viewpoint; }
  static ViewAwareIndex from_flat(std::size_t flat, std::size_t num_viewpoints) {
    return {flat / num_viewpoints, flat % num_viewpoints};
  }
};

namespace detail {

inline void check_index(std::size_t index, std::size_t count, const char* what) {
  if (index >= count) {
    throw Error(ErrorKind::IndexOutOfRange,
                std::string(what) + " " + std::to_string(index) + " not in [0, " + std::to_string(count) + ")");
  }
}

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidSmoothing, "alpha " + std::to_string(alpha) + " not in [0, 1]");
  }
}

// Above this the viewpoint-aware target cell 1 - eps1 - eps2 can turn negative.
inline constexpr double kMaxViewAlpha = 0.5;

inline void check_distribution(const LabelDistribution& d, std::size_t expected, const char* what) {
  if (d.size() != expected || !is_valid_distribution(d)) {
    throw Error(ErrorKind::InvalidDistribution,
                std::string(what) + " is not a probability vector over " + std::to_string(expected) + " classes");
  }
}

// Target gets 1 - eps, every other class an equal share of eps.
inline LabelDistribution smoothed(std::size_t y, std::size_t num_classes, double eps) {
  LabelDistribution out{std::vector<double>(num_classes, eps / static_cast<double>(num_classes - 1))};
  out.probs[y] = 1.0 - eps;
  return out;
}

}  // namespace detail

inline LabelDistribution hard_identity(std::size_t y, std::size_t num_identities) {
  detail::check_index(y, num_identities, "identity");
  LabelDistribution out{std::vector<double>(num_identities, 0.0)};
  out.probs[y] = 1.0;
  return out;
}

inline LabelDistribution lsr(std::size_t y, std::size_t num_identities, double eps) {
  detail::check_index(y, num_identities, "identity");
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw Error(ErrorKind::InvalidSmoothing, "epsilon " + std::to_string(eps) + " not in [0, 1)");
  }
  if (num_identities < 2) throw Error(ErrorKind::InvalidSmoothing, "label smoothing needs at least 2 classes");
  if (eps == 0.0) return hard_identity(y, num_identities);
  return detail::smoothed(y, num_identities, eps);
}

/// Adaptive LSR: the smoothing mass alpha * (1 - q[y]) shrinks as the model
/// grows confident in the ground-truth class.
inline LabelDistribution alsr(std::size_t y, std::size_t num_identities, double alpha, const LabelDistribution& q) {
  detail::check_index(y, num_identities, "identity");
  detail::check_alpha(alpha);
  if (num_identities < 2) throw Error(ErrorKind::InvalidSmoothing, "label smoothing needs at least 2 classes");
  detail::check_distribution(q, num_identities, "prediction q");
  if (alpha == 0.0) return hard_identity(y, num_identities);
  return detail::smoothed(y, num_identities, alpha * (1.0 - q[y]));
}

inline LabelDistribution hard_view(std::size_t y, std::size_t v, std::size_t num_identities,
                                   std::size_t num_viewpoints) {
  detail::check_index(y, num_identities, "identity");
  detail::check_index(v, num_viewpoints, "viewpoint");
  LabelDistribution out{std::vector<double>(num_identities * num_viewpoints, 0.0)};
  out.probs[ViewAwareIndex{y, v}.flat(num_viewpoints)] = 1.0;
  return out;
}

/// Viewpoint-aware adaptive LSR over K*V sub-classes.
///   eps1 = alpha * (1 - sum_o r[y, o])   spread over the K*V - V other-identity cells
///   eps2 = alpha * (1 - r[y, v])         spread over the V - 1 sibling viewpoints
///   target cell keeps 1 - eps1 - eps2
inline LabelDistribution valsr(std::size_t y, std::size_t v, std::size_t num_identities, std::size_t num_viewpoints,
                               double alpha, const LabelDistribution& r) {
  detail::check_index(y, num_identities, "identity");
  detail::check_index(v, num_viewpoints, "viewpoint");
  detail::check_alpha(alpha);
  if (alpha > detail::kMaxViewAlpha) {
    throw Error(ErrorKind::InvalidSmoothing, "viewpoint-aware alpha " + std::to_string(alpha) + " exceeds 0.5");
  }
  if (num_identities < 2 || num_viewpoints < 2) {
    throw Error(ErrorKind::InvalidSmoothing, "viewpoint-aware smoothing needs K >= 2 and V >= 2");
  }
  const std::size_t total = num_identities * num_viewpoints;
  detail::check_distribution(r, total, "prediction r");
  if (alpha == 0.0) return hard_view(y, v, num_identities, num_viewpoints);

  double identity_mass = 0.0;
  for (std::size_t o = 0; o < num_viewpoints; ++o) identity_mass += r[ViewAwareIndex{y, o}.flat(num_viewpoints)];
  const std::size_t target = ViewAwareIndex{y, v}.flat(num_viewpoints);
  // Rounding can push the summed identity mass a hair above 1.
  const double eps1 = alpha * std::max(0.0, 1.0 - identity_mass);
  const double eps2 = alpha * (1.0 - r[target]);

  LabelDistribution out{std::vector<double>(total, eps1 / static_cast<double>(total - num_viewpoints))};
  for (std::size_t o = 0; o < num_viewpoints; ++o) {
    out.probs[ViewAwareIndex{y, o}.flat(num_viewpoints)] = eps2 / static_cast<double>(num_viewpoints - 1);
  }
  out.probs[target] = 1.0 - eps1 - eps2;
  return out;
}

}  // namespace vareid
