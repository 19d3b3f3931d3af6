// TOML training configuration.
//
//   [loss]  s, m, margin_mode, alpha, beta, label_mode, lsr_epsilon
//   [optim] lr, warmup_lr, warmup_epochs, milestones, decay, weight_decay, decoupled_weight_decay
//   [train] epochs, p, q, seed
//   [model] raw_dim, hidden, embed_dim, view_init_near_identity, view_init_noise
//
// Every key is optional; missing keys keep the TrainConfig defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "toml.hpp"
#include "vareid/error.hpp"
#include "vareid/trainer.hpp"

namespace vareid {

namespace detail {

template <class T>
void read_number(const toml::table& tbl, std::string_view section, std::string_view key, T& target) {
  const auto node = tbl[section][key];
  if (!node) return;
  if constexpr (std::is_floating_point_v<T>) {
    const auto v = node.value<double>();
    if (!v) throw Error(ErrorKind::InvalidConfig, std::string(section) + "." + std::string(key) + " must be a number");
    target = *v;
  } else {
    const auto v = node.value<std::int64_t>();
    if (!v || *v < 0) {
      throw Error(ErrorKind::InvalidConfig,
                  std::string(section) + "." + std::string(key) + " must be a non-negative integer");
    }
    target = static_cast<T>(*v);
  }
}

inline void read_bool(const toml::table& tbl, std::string_view section, std::string_view key, bool& target) {
  const auto node = tbl[section][key];
  if (!node) return;
  const auto v = node.value<bool>();
  if (!v) throw Error(ErrorKind::InvalidConfig, std::string(section) + "." + std::string(key) + " must be a boolean");
  target = *v;
}

inline void reject_unknown_keys(const toml::table& tbl) {
  static const std::map<std::string, std::set<std::string>> known{
      {"loss", {"s", "m", "margin_mode", "alpha", "beta", "label_mode", "lsr_epsilon"}},
      {"optim", {"lr", "warmup_lr", "warmup_epochs", "milestones", "decay", "weight_decay", "decoupled_weight_decay"}},
      {"train", {"epochs", "p", "q", "seed"}},
      {"model", {"raw_dim", "hidden", "embed_dim", "view_init_near_identity", "view_init_noise"}},
  };
  for (const auto& [section, node] : tbl) {
    const auto it = known.find(std::string(section.str()));
    if (it == known.end() || !node.is_table()) {
      throw Error(ErrorKind::InvalidConfig, "unknown config section [" + std::string(section.str()) + "]");
    }
    for (const auto& [key, value] : *node.as_table()) {
      if (!it->second.contains(std::string(key.str()))) {
        throw Error(ErrorKind::InvalidConfig,
                    "unknown config key " + std::string(section.str()) + "." + std::string(key.str()));
      }
    }
  }
}

}  // namespace detail

inline TrainConfig parse_train_config(std::string_view text, std::string_view origin = "<config>") {
  toml::table tbl;
  try {
    tbl = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string(origin) + ": " + std::string(e.description()));
  }
  detail::reject_unknown_keys(tbl);
  TrainConfig c;
  detail::read_number(tbl, "loss", "s", c.loss.scale);
  detail::read_number(tbl, "loss", "m", c.loss.margin);
  detail::read_number(tbl, "loss", "alpha", c.loss.alpha);
  detail::read_number(tbl, "loss", "beta", c.loss.beta);
  detail::read_number(tbl, "loss", "lsr_epsilon", c.loss.lsr_epsilon);
  if (auto mode = tbl["loss"]["margin_mode"].value<std::string>()) {
    const auto parsed = parse_margin_mode(*mode);
    if (!parsed) throw Error(ErrorKind::InvalidConfig, "unknown margin_mode '" + *mode + "'");
    c.loss.margin_mode = *parsed;
  }
  if (auto mode = tbl["loss"]["label_mode"].value<std::string>()) {
    const auto parsed = parse_label_mode(*mode);
    if (!parsed) throw Error(ErrorKind::InvalidConfig, "unknown label_mode '" + *mode + "'");
    c.label_mode = *parsed;
  }

  detail::read_number(tbl, "optim", "lr", c.schedule.base_lr);
  c.schedule.warmup_start_lr = c.schedule.base_lr / 10.0;
  detail::read_number(tbl, "optim", "warmup_lr", c.schedule.warmup_start_lr);
  detail::read_number(tbl, "optim", "warmup_epochs", c.schedule.warmup_epochs);
  detail::read_number(tbl, "optim", "decay", c.schedule.decay);
  detail::read_number(tbl, "optim", "weight_decay", c.adam.weight_decay);
  detail::read_bool(tbl, "optim", "decoupled_weight_decay", c.adam.decoupled_weight_decay);
  if (const auto* arr = tbl["optim"]["milestones"].as_array()) {
    c.schedule.milestones.clear();
    for (const auto& el : *arr) {
      const auto v = el.value<std::int64_t>();
      if (!v || *v < 0) throw Error(ErrorKind::InvalidConfig, "optim.milestones must hold non-negative integers");
      c.schedule.milestones.push_back(static_cast<std::size_t>(*v));
    }
  }

  detail::read_number(tbl, "train", "epochs", c.epochs);
  detail::read_number(tbl, "train", "p", c.p);
  detail::read_number(tbl, "train", "q", c.q);
  detail::read_number(tbl, "train", "seed", c.seed);

  detail::read_number(tbl, "model", "raw_dim", c.raw_dim);
  detail::read_number(tbl, "model", "hidden", c.hidden);
  detail::read_number(tbl, "model", "embed_dim", c.embed_dim);
  detail::read_bool(tbl, "model", "view_init_near_identity", c.view_init_near_identity);
  detail::read_number(tbl, "model", "view_init_noise", c.view_init_noise);

  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path);
}

}  // namespace vareid
