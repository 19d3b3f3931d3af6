// Model JSON and metrics CSV.
//
// Model document:
//   {"format": "vareid-model", "version": 1, "seed": ..., "config": {...},
//    "identity_labels": [...], "num_viewpoints": V,
//    "embedder": {"activation", "w1", "b1", "w2", "b2"},
//    "identity_centers": [[...] x K], "viewpoint_centers": [[...] x K*V]}
// Matrices are arrays of rows; viewpoint centers in flat order identity*V + viewpoint.
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "vareid/error.hpp"
#include "vareid/trainer.hpp"

namespace vareid {

inline constexpr const char* kModelFormat = "vareid-model";
inline constexpr int kModelVersion = 1;

inline const char* kMetricsHeader = "epoch,loss_y,loss_v,loss_r,loss_total,map,rank1,rank5,lr";

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) rows.push_back(Vec(m.row(i).begin(), m.row(i).end()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<Vec>>();
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) throw Error(ErrorKind::ParseError, "ragged matrix in model file");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"loss",
       {{"s", c.loss.scale},
        {"m", c.loss.margin},
        {"margin_mode", std::string(to_string(c.loss.margin_mode))},
        {"alpha", c.loss.alpha},
        {"beta", c.loss.beta},
        {"lsr_epsilon", c.loss.lsr_epsilon},
        {"label_mode", std::string(to_string(c.label_mode))}}},
      {"optim",
       {{"lr", c.schedule.base_lr},
        {"warmup_lr", c.schedule.warmup_start_lr},
        {"warmup_epochs", c.schedule.warmup_epochs},
        {"milestones", c.schedule.milestones},
        {"decay", c.schedule.decay},
        {"weight_decay", c.adam.weight_decay},
        {"decoupled_weight_decay", c.adam.decoupled_weight_decay}}},
      {"train", {{"epochs", c.epochs}, {"p", c.p}, {"q", c.q}, {"seed", c.seed}}},
      {"model",
       {{"raw_dim", c.raw_dim},
        {"hidden", c.hidden},
        {"embed_dim", c.embed_dim},
        {"view_init_near_identity", c.view_init_near_identity},
        {"view_init_noise", c.view_init_noise}}},
  };
}

inline nlohmann::json model_to_json(const Model& m) {
  return nlohmann::json{
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"seed", m.config.seed},
      {"config", config_to_json(m.config)},
      {"identity_labels", m.identity_labels},
      {"num_viewpoints", m.classifier.num_viewpoints},
      {"embedder",
       {{"activation", m.embedder.activation == Activation::tanh ? "tanh" : "linear"},
        {"w1", matrix_to_json(m.embedder.w1)},
        {"b1", m.embedder.b1},
        {"w2", matrix_to_json(m.embedder.w2)},
        {"b2", m.embedder.b2}}},
      {"identity_centers", matrix_to_json(m.classifier.identity_centers)},
      {"viewpoint_centers", matrix_to_json(m.classifier.viewpoint_centers)},
  };
}

/// Restores the trainable state; the config echo is informational only.
inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat || j.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorKind::ParseError, "not a version 1 vareid model document");
    }
    Model m;
    m.config.seed = j.at("seed").get<std::uint64_t>();
    const auto& e = j.at("embedder");
    m.embedder.activation = e.at("activation").get<std::string>() == "linear" ? Activation::linear : Activation::tanh;
    m.embedder.w1 = matrix_from_json(e.at("w1"));
    m.embedder.b1 = e.at("b1").get<Vec>();
    m.embedder.w2 = matrix_from_json(e.at("w2"));
    m.embedder.b2 = e.at("b2").get<Vec>();
    m.embedder.validate();
    m.config.raw_dim = m.embedder.raw_dim();
    m.config.hidden = m.embedder.hidden();
    m.config.embed_dim = m.embedder.embed_dim();
    m.identity_labels = j.at("identity_labels").get<std::vector<int>>();
    m.classifier.num_viewpoints = j.at("num_viewpoints").get<std::size_t>();
    m.classifier.identity_centers = matrix_from_json(j.at("identity_centers"));
    m.classifier.viewpoint_centers = matrix_from_json(j.at("viewpoint_centers"));
    m.classifier.validate();
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::ParseError, std::string("model document: ") + ex.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_model(const Model& m, const std::string& path) { write_text(path, model_to_json(m).dump(1) + "\n"); }

inline Model load_model(const std::string& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(ErrorKind::ParseError, path + ": " + ex.what());
  }
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double x) { return nlohmann::json(x).dump(); }

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.loss_y, r.loss_v, r.loss_r, r.loss_total, r.map, r.rank1, r.rank5, r.lr}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace vareid
