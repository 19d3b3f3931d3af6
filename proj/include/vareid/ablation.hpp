// Runs several label modes over a shared seed set and tabulates final-epoch
// retrieval metrics (mean and sample standard deviation per variant).
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vareid/model_io.hpp"
#include "vareid/trainer.hpp"

namespace vareid {

struct RunSummary {
  std::uint64_t seed = 0;
  double map = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double center_cosine = 0.0;  // mean cos(W_k, U_{k,v}) of the trained model
};

struct AblationRow {
  LabelMode variant = LabelMode::xent;
  std::vector<RunSummary> runs;

  double mean(double RunSummary::*field) const {
    double s = 0.0;
    for (const RunSummary& r : runs) s += r.*field;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }

  double stddev(double RunSummary::*field) const {
    if (runs.size() < 2) return 0.0;
    const double mu = mean(field);
    double s = 0.0;
    for (const RunSummary& r : runs) s += (r.*field - mu) * (r.*field - mu);
    return std::sqrt(s / static_cast<double>(runs.size() - 1));
  }
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = first + i;
  return seeds;
}

inline RunSummary summarize_run(std::uint64_t seed, const TrainResult& r) {
  return {seed, r.final_report.map, r.final_report.rank(1), r.final_report.rank(5),
          mean_center_cosine(r.model.classifier)};
}

/// Trains every variant once per seed; each run differs from `base` only in
/// label mode and seed.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& data,
                                       const std::vector<LabelMode>& variants,
                                       const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationRow> table;
  for (LabelMode variant : variants) {
    AblationRow row{variant, {}};
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.label_mode = variant;
      cfg.seed = seed;
      row.runs.push_back(summarize_run(seed, train(cfg, data)));
    }
    table.push_back(std::move(row));
  }
  return table;
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& table) {
  std::string out = "variant,seeds,map_mean,map_sd,rank1_mean,rank1_sd,rank5_mean,rank5_sd,center_cos_mean\n";
  for (const AblationRow& row : table) {
    out += std::string(to_string(row.variant)) + "," + std::to_string(row.runs.size());
    for (double v : {row.mean(&RunSummary::map), row.stddev(&RunSummary::map), row.mean(&RunSummary::rank1),
                     row.stddev(&RunSummary::rank1), row.mean(&RunSummary::rank5), row.stddev(&RunSummary::rank5),
                     row.mean(&RunSummary::center_cosine)}) {
      out += "," + format_double(v);
    }
    out += "\n";
  }
  return out;
}

}  // namespace vareid
