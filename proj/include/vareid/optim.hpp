// Adam with L2 weight decay and the warmup + multi-step learning-rate schedule.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vareid/error.hpp"

namespace vareid {

struct LrSchedule {
  double base_lr = 3.5e-4;
  double warmup_start_lr = 3.5e-5;
  std::size_t warmup_epochs = 10;
  std::vector<std::size_t> milestones{50, 100, 160};
  double decay = 0.1;

  void validate() const {
    if (!(base_lr > 0.0) || !(warmup_start_lr > 0.0) || warmup_start_lr > base_lr) {
      throw Error(ErrorKind::InvalidConfig, "need 0 < warmup_start_lr <= base_lr");
    }
    if (!(decay > 0.0 && decay <= 1.0)) throw Error(ErrorKind::InvalidConfig, "decay must lie in (0, 1]");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (milestones[i] <= warmup_epochs || (i > 0 && milestones[i] <= milestones[i - 1])) {
        throw Error(ErrorKind::InvalidConfig, "milestones must be strictly increasing and after warmup");
      }
    }
  }
};

/// Linear warmup from warmup_start_lr, then base_lr decayed once per milestone passed.
inline double lr_at(const LrSchedule& schedule, std::size_t epoch) {
  if (epoch < schedule.warmup_epochs) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(schedule.warmup_epochs);
    return schedule.warmup_start_lr + (schedule.base_lr - schedule.warmup_start_lr) * frac;
  }
  double lr = schedule.base_lr;
  for (std::size_t m : schedule.milestones) {
    if (m <= epoch) lr *= schedule.decay;
  }
  return lr;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
  bool decoupled_weight_decay = false;
};

/// One parameter tensor as seen by the optimizer.
struct ParamSlot {
  std::span<double> values;
  std::span<const double> grads;
  bool decay = true;
};

struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

inline void adam_step(std::span<const ParamSlot> slots, AdamState& state, const AdamConfig& cfg, double lr) {
  if (state.first.empty() && state.step == 0) {
    for (const ParamSlot& s : slots) {
      state.first.emplace_back(s.values.size(), 0.0);
      state.second.emplace_back(s.values.size(), 0.0);
    }
  }
  if (state.first.size() != slots.size() || state.second.size() != slots.size()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match parameter list");
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].values.size() != slots[k].grads.size() || state.first[k].size() != slots[k].values.size()) {
      throw Error(ErrorKind::ShapeMismatch, "parameter, gradient and moment sizes differ in slot " + std::to_string(k));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const ParamSlot& s = slots[k];
    auto& m = state.first[k];
    auto& v = state.second[k];
    const double wd = s.decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      double g = s.grads[i];
      if (!cfg.decoupled_weight_decay) g += wd * s.values[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      if (cfg.decoupled_weight_decay) s.values[i] -= lr * wd * s.values[i];
      s.values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace vareid
