// Acceptance suite. Each criterion prints one PASS/FAIL line; run with a
// criterion name to run just that one, or with no argument to run all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vareid/ablation.hpp"
#include "vareid/config.hpp"
#include "vareid/eval.hpp"
#include "vareid/gradcheck.hpp"
#include "vareid/model_io.hpp"
#include "vareid/soft_labels.hpp"
#include "vareid/synth.hpp"

using namespace vareid;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-5;
constexpr double kGradStep = 1e-6;
constexpr std::size_t kMinGradInstances = 100;
constexpr double kGradSeconds = 60.0;
constexpr double kSumTolerance = 1e-9;
constexpr int kDistributionCalls = 10000;
constexpr double kClosedFormTolerance = 1e-12;
constexpr int kRandomEvalInstances = 1000;
constexpr std::size_t kMaxExhaustiveGallery = 6;
constexpr std::size_t kMaxRandomSize = 50;
constexpr double kEvalSeconds = 60.0;
constexpr std::size_t kSeeds = 5;
constexpr double kVaReidGap = 0.02;
constexpr double kTableSeconds = 600.0;
constexpr double kFlipRateLow = 0.25;
constexpr double kFlipRateHigh = 0.55;
constexpr double kMaxDropLow = 0.05;
constexpr double kMaxDropHigh = 0.10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << std::fixed << x;
  return s.str();
}

std::string sci(double x) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// The synthetic benchmark: K=20, V=3, 8 per cell, offset 0.8, noise 0.2.
Dataset benchmark_data() {
  SynthConfig cfg;
  cfg.identities = 20;
  cfg.viewpoints = 3;
  cfg.per_cell = 8;
  cfg.viewpoint_offset = 0.8;
  cfg.noise = 0.2;
  cfg.seed = 0;
  return generate(cfg);
}

TrainConfig desk_config() { return load_train_config(VAREID_DESK_CONFIG); }

double mean_map(const TrainConfig& base, const Dataset& data, LabelMode mode) {
  return ablate(base, data, {mode}, seed_range(0, kSeeds)).front().mean(&RunSummary::map);
}

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  GradcheckOptions opt;
  opt.seed = 0;
  opt.step = kGradStep;
  opt.tolerance = kGradTolerance;
  const GradcheckReport report = run_gradcheck(opt);
  const double secs = seconds_since(start);
  std::cout << report.to_text(kGradTolerance);
  double worst = 0.0;
  for (const auto& c : report.components) worst = std::max(worst, c.max_rel_error);
  const bool pass = report.pass() && report.instances >= kMinGradInstances && secs < kGradSeconds;
  return {pass, std::to_string(report.instances) + " instances, max rel err " + sci(worst) + " (< " +
                    sci(kGradTolerance) + "), " + fmt(secs, 1) + "s"};
}

bool valid_distribution(const LabelDistribution& d) {
  double sum = 0.0;
  for (double p : d.probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= kSumTolerance;
}

LabelDistribution random_distribution(std::size_t n, std::mt19937_64& rng) {
  // Mix of flat and peaked predictions.
  std::gamma_distribution<double> g(rng() % 2 == 0 ? 1.0 : 0.05, 1.0);
  LabelDistribution d{std::vector<double>(n)};
  double s = 0.0;
  for (double& p : d.probs) s += (p = g(rng) + 1e-300);
  for (double& p : d.probs) p /= s;
  return d;
}

Outcome distributions() {
  std::mt19937_64 rng(20240);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t bad_lsr = 0, bad_alsr = 0, bad_valsr = 0, bad_reduction = 0;
  for (int i = 0; i < kDistributionCalls; ++i) {
    const std::size_t k = 2 + rng() % 40;
    const std::size_t v = 2 + rng() % 5;
    const std::size_t y = rng() % k;
    const std::size_t view = rng() % v;
    bad_lsr += !valid_distribution(lsr(y, k, unit(rng) * 0.999999));
    bad_alsr += !valid_distribution(alsr(y, k, unit(rng), random_distribution(k, rng)));
    bad_valsr += !valid_distribution(valsr(y, view, k, v, detail::kMaxViewAlpha * unit(rng),
                                           random_distribution(k * v, rng)));
    bad_reduction += !(lsr(y, k, 0.0) == hard_identity(y, k));
    bad_reduction += !(alsr(y, k, 0.0, random_distribution(k, rng)) == hard_identity(y, k));
    bad_reduction += !(valsr(y, view, k, v, 0.0, random_distribution(k * v, rng)) == hard_view(y, view, k, v));
  }
  const bool pass = bad_lsr + bad_alsr + bad_valsr + bad_reduction == 0;
  return {pass, std::to_string(kDistributionCalls) + " calls each; invalid lsr/alsr/valsr " +
                    std::to_string(bad_lsr) + "/" + std::to_string(bad_alsr) + "/" + std::to_string(bad_valsr) +
                    ", inexact zero-smoothing reductions " + std::to_string(bad_reduction)};
}

Outcome valsr_closed_form() {
  const double other = (1.0 - 0.9) / 3.0;
  const LabelDistribution r{{0.7, 0.1, 0.1, other, other, other}};
  const auto t = valsr(0, 0, 2, 3, 0.2, r);
  const std::vector<double> expected{0.92, 0.03, 0.03, 0.02 / 3.0, 0.02 / 3.0, 0.02 / 3.0};
  double worst = 0.0;
  for (std::size_t j = 0; j < expected.size(); ++j) worst = std::max(worst, std::abs(t[j] - expected[j]));
  std::ostringstream got;
  got.precision(6);
  for (std::size_t j = 0; j < t.size(); ++j) got << (j ? " " : "") << t[j];
  return {worst <= kClosedFormTolerance, "got (" + got.str() + "), max deviation " + sci(worst)};
}

struct EvalCase {
  Matrix dist;
  std::vector<int> q_id, q_cam, g_id, g_cam;
};

// 0: match, 1: mismatch, 2: oracle says no valid query and evaluator throws.
int compare_with_oracle(const EvalCase& c, std::size_t max_rank) {
  const RetrievalLabels ql{c.q_id, c.q_cam, {}};
  const RetrievalLabels gl{c.g_id, c.g_cam, {}};
  const auto truth = oracle::evaluate(c.dist, c.q_id, c.q_cam, c.g_id, c.g_cam, max_rank);
  if (!truth.any_valid) {
    try {
      mean_ap(c.dist, ql, gl);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::NoValidPositive ? 2 : 1;
    }
    return 1;
  }
  const bool same = mean_ap(c.dist, ql, gl) == truth.map && cmc(c.dist, ql, gl, max_rank) == truth.cmc;
  return same ? 0 : 1;
}

Outcome evaluator_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t exhaustive = 0, mismatches = 0;
  // One query (identity 0, camera 0). Each gallery entry takes one of four
  // label states: {same, other identity} x {same, other camera}. Each pattern
  // is scored under increasing, decreasing and tied distance orders.
  for (std::size_t n = 1; n <= kMaxExhaustiveGallery; ++n) {
    std::size_t patterns = 1;
    for (std::size_t i = 0; i < n; ++i) patterns *= 4;
    for (std::size_t code = 0; code < patterns; ++code) {
      EvalCase c{Matrix(1, n), {0}, {0}, std::vector<int>(n), std::vector<int>(n)};
      std::size_t rest = code;
      for (std::size_t g = 0; g < n; ++g) {
        const std::size_t state = rest % 4;
        rest /= 4;
        c.g_id[g] = state < 2 ? 0 : 1 + static_cast<int>(g);
        c.g_cam[g] = state % 2 == 0 ? 0 : 1;
      }
      for (int order = 0; order < 3; ++order) {
        for (std::size_t g = 0; g < n; ++g) {
          c.dist(0, g) = order == 0 ? 0.1 * static_cast<double>(g)
                         : order == 1 ? 1.0 - 0.1 * static_cast<double>(g)
                                      : 0.5 * static_cast<double>((n - g) / 2);
        }
        mismatches += compare_with_oracle(c, n) == 1;
        ++exhaustive;
      }
    }
  }

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> size(1, kMaxRandomSize);
  std::size_t scored = 0;
  for (int trial = 0; trial < kRandomEvalInstances; ++trial) {
    const std::size_t nq = size(rng), ng = size(rng);
    const int identities = 1 + static_cast<int>(rng() % 10);
    const int cameras = 1 + static_cast<int>(rng() % 4);
    EvalCase c{Matrix(nq, ng), {}, {}, {}, {}};
    const bool coarse = trial % 2 == 0;
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (double& d : c.dist.data) d = coarse ? 0.125 * static_cast<double>(rng() % 9) : u(rng);
    for (std::size_t q = 0; q < nq; ++q) {
      c.q_id.push_back(static_cast<int>(rng() % identities));
      c.q_cam.push_back(static_cast<int>(rng() % cameras));
    }
    for (std::size_t g = 0; g < ng; ++g) {
      c.g_id.push_back(static_cast<int>(rng() % identities));
      c.g_cam.push_back(static_cast<int>(rng() % cameras));
    }
    const int r = compare_with_oracle(c, std::min<std::size_t>(ng, 20));
    mismatches += r == 1;
    scored += r == 0;
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < kEvalSeconds,
          std::to_string(exhaustive) + " exhaustive + " + std::to_string(kRandomEvalInstances) + " random (" +
              std::to_string(scored) + " scorable) instances, " + std::to_string(mismatches) + " mismatches, " +
              fmt(secs, 1) + "s"};
}

Outcome table2_ordering() {
  const auto start = std::chrono::steady_clock::now();
  const Dataset data = benchmark_data();
  const std::vector<LabelMode> variants{LabelMode::xent,  LabelMode::lsr,   LabelMode::alsr,
                                        LabelMode::ly_lv, LabelMode::ly_lr, LabelMode::va_reid};
  const auto table = ablate(desk_config(), data, variants, seed_range(0, kSeeds));
  std::cout << ablation_to_csv(table);
  std::map<LabelMode, double> m;
  for (const auto& row : table) m[row.variant] = row.mean(&RunSummary::map);
  const double secs = seconds_since(start);

  const bool xent_lsr = m[LabelMode::xent] <= m[LabelMode::lsr];
  const bool lsr_alsr = m[LabelMode::lsr] <= m[LabelMode::alsr];
  const bool alsr_lv = m[LabelMode::alsr] < m[LabelMode::ly_lv];
  const bool alsr_va = m[LabelMode::alsr] < m[LabelMode::va_reid];
  const bool gap = m[LabelMode::va_reid] >= m[LabelMode::alsr] + kVaReidGap;
  const auto mark = [](bool ok) { return ok ? "ok" : "violated"; };
  std::string detail = "mean mAP xent " + fmt(m[LabelMode::xent]) + ", lsr " + fmt(m[LabelMode::lsr]) + ", alsr " +
                       fmt(m[LabelMode::alsr]) + ", ly_lv " + fmt(m[LabelMode::ly_lv]) + ", ly_lr " +
                       fmt(m[LabelMode::ly_lr]) + ", va_reid " + fmt(m[LabelMode::va_reid]) +
                       "; xent<=lsr " + mark(xent_lsr) + ", lsr<=alsr " + mark(lsr_alsr) + ", alsr<ly_lv " +
                       mark(alsr_lv) + ", alsr<va_reid " + mark(alsr_va) + ", gap>=" + fmt(kVaReidGap, 2) + " " +
                       mark(gap) + "; " + fmt(secs, 1) + "s";
  return {xent_lsr && lsr_alsr && alsr_lv && alsr_va && gap && secs < kTableSeconds, detail};
}

Outcome center_pull() {
  const Dataset data = benchmark_data();
  const auto table = ablate(desk_config(), data, {LabelMode::ly_lv, LabelMode::va_reid}, seed_range(0, kSeeds));
  std::size_t wins = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < kSeeds; ++i) {
    const double without = table[0].runs[i].center_cosine;
    const double with = table[1].runs[i].center_cosine;
    wins += with > without;
    per_seed += (i ? ", " : "") + std::string("seed ") + std::to_string(table[0].runs[i].seed) + " " + fmt(with) +
                " vs " + fmt(without);
  }
  return {wins == kSeeds, "mean cos(W_k, U_kv) va_reid vs ly_lv: " + per_seed};
}

Outcome table3_robustness() {
  const Dataset clean = benchmark_data();
  const TrainConfig base = desk_config();
  const double va_clean = mean_map(base, clean, LabelMode::va_reid);
  const double va_low = mean_map(base, flip_viewpoint_labels(clean, kFlipRateLow, 1), LabelMode::va_reid);
  const double va_high = mean_map(base, flip_viewpoint_labels(clean, kFlipRateHigh, 1), LabelMode::va_reid);
  const double alsr_clean = mean_map(base, clean, LabelMode::alsr);
  const double drop_low = va_clean - va_low;
  const double drop_high = va_clean - va_high;
  const bool pass = drop_low < kMaxDropLow && drop_high < kMaxDropHigh && va_low > alsr_clean &&
                    va_high > alsr_clean;
  return {pass, "va_reid mAP clean " + fmt(va_clean) + ", 25% flipped " + fmt(va_low) + " (drop " + fmt(drop_low) +
                    " < " + fmt(kMaxDropLow, 2) + "), 55% flipped " + fmt(va_high) + " (drop " + fmt(drop_high) +
                    " < " + fmt(kMaxDropHigh, 2) + "); alsr baseline " + fmt(alsr_clean) +
                    (va_low > alsr_clean && va_high > alsr_clean ? " (both noisy runs above)" : " (not both above)")};
}

int run(const std::string& cmd) {
  std::cout << "$ " << cmd << "\n" << std::flush;
  return std::system(cmd.c_str());
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = VAREID_WORK_DIR;
  fs::create_directories(dir);
  const std::string cli = VAREID_CLI_PATH;
  const std::string data = (dir / "bench.jsonl").string();
  if (run(cli + " synth --identities 20 --viewpoints 3 --per-cell 8 --raw-dim 32 --offset 0.8 --noise 0.2 --seed 0"
                " --out " + data) != 0) {
    return {false, "synth failed"};
  }
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    if (run(cli + " train --config " + VAREID_DESK_CONFIG + " --data " + data + " --out " +
            (dir / ("model_" + t + ".json")).string() + " --metrics " + (dir / ("metrics_" + t + ".csv")).string()) !=
        0) {
      return {false, "train run " + t + " failed"};
    }
  }
  const auto read = [&](const std::string& name) { return read_text((dir / name).string()); };
  const bool csv_same = read("metrics_a.csv") == read("metrics_b.csv");
  const bool model_same = read("model_a.json") == read("model_b.json");
  return {csv_same && model_same, std::string("metrics CSV ") + (csv_same ? "identical" : "differs") +
                                      ", model JSON " + (model_same ? "identical" : "differs") + " (" +
                                      std::to_string(read("model_a.json").size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradients", gradients},
      {"distributions", distributions},
      {"valsr_closed_form", valsr_closed_form},
      {"evaluator_oracle", evaluator_oracle},
      {"table2_ordering", table2_ordering},
      {"center_regularization", center_pull},
      {"table3_robustness", table3_robustness},
      {"determinism", determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == w; })) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "\n" << std::flush;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
