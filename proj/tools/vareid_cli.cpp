// vareid command-line harness: synth, train, eval, ablate, flip-views, gradcheck.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vareid/ablation.hpp"
#include "vareid/config.hpp"
#include "vareid/dataset_io.hpp"
#include "vareid/gradcheck.hpp"
#include "vareid/model_io.hpp"
#include "vareid/synth.hpp"
#include "vareid/trainer.hpp"

namespace {

std::vector<vareid::LabelMode> parse_variants(const std::string& list) {
  std::vector<vareid::LabelMode> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    const auto mode = vareid::parse_label_mode(name);
    if (!mode) throw vareid::Error(vareid::ErrorKind::InvalidConfig, "unknown variant '" + name + "'");
    out.push_back(*mode);
  }
  if (out.empty()) throw vareid::Error(vareid::ErrorKind::InvalidConfig, "no variants given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint-aware angular metric learning on synthetic identity/viewpoint data"};
  app.require_subcommand(1);

  vareid::SynthConfig synth_cfg;
  std::string synth_out;
  bool no_distortion = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset (JSONL, .gz optional)");
  synth->add_option("--identities", synth_cfg.identities, "Number of identities K")->capture_default_str();
  synth->add_option("--viewpoints", synth_cfg.viewpoints, "Number of viewpoints V")->capture_default_str();
  synth->add_option("--per-cell", synth_cfg.per_cell, "Samples per (identity, viewpoint)")->capture_default_str();
  synth->add_option("--raw-dim", synth_cfg.raw_dim, "Raw feature dimension")->capture_default_str();
  synth->add_option("--offset", synth_cfg.viewpoint_offset, "Viewpoint offset length")->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise, "Per-coordinate sample noise std")->capture_default_str();
  synth->add_option("--spread", synth_cfg.identity_spread, "Identity prototype length")->capture_default_str();
  synth->add_flag("--no-distortion", no_distortion, "Write latent features without the linear distortion");
  synth->add_option("--seed", synth_cfg.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output path")->required();

  std::string config_path, data_path, model_path, metrics_path;
  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config_path, "TOML config")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--out", model_path, "Model JSON output")->required();
  train->add_option("--metrics", metrics_path, "Metrics CSV output")->required();

  std::string report_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on the query/gallery split");
  eval->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", report_path, "Report JSON output")->required();

  std::string variants = "xent,lsr,alsr,ly_lv,ly_lr,va_reid";
  std::size_t n_seeds = 5;
  std::string table_path;
  auto* ablate = app.add_subcommand("ablate", "Train several label modes over a seed set");
  ablate->add_option("--config", config_path, "TOML config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  ablate->add_option("--variants", variants, "Comma-separated label modes")->capture_default_str();
  ablate->add_option("--seeds", n_seeds, "Number of seeds, starting at [train] seed")->capture_default_str();
  ablate->add_option("--out", table_path, "Table CSV output")->required();

  double rate = 0.0;
  std::uint64_t flip_seed = 0;
  std::string flip_out;
  auto* flip = app.add_subcommand("flip-views", "Corrupt a fraction of training viewpoint labels");
  flip->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  flip->add_option("--rate", rate, "Fraction of training samples to flip")->required();
  flip->add_option("--seed", flip_seed, "Random seed")->capture_default_str();
  flip->add_option("--out", flip_out, "Output path")->required();

  vareid::GradcheckOptions gc_opts;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all analytic gradients");
  gradcheck->add_option("--seed", gc_opts.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      synth_cfg.distortion = !no_distortion;
      const vareid::Dataset data = vareid::generate(synth_cfg);
      vareid::save_dataset(data, synth_out);
      std::cout << "wrote " << data.size() << " samples to " << synth_out << "\n";
    } else if (*train) {
      const vareid::TrainConfig cfg = vareid::load_train_config(config_path);
      const vareid::Dataset data = vareid::load_dataset(data_path);
      const vareid::TrainResult result = vareid::train(cfg, data);
      vareid::save_model(result.model, model_path);
      vareid::write_text(metrics_path, vareid::metrics_to_csv(result.metrics));
      const vareid::MetricsRow& last = result.metrics.back();
      std::cout << "epoch " << last.epoch << "  loss " << last.loss_total << "  mAP " << last.map << "  rank1 "
                << last.rank1 << "\n";
    } else if (*eval) {
      const vareid::Model model = vareid::load_model(model_path);
      const vareid::Dataset data = vareid::load_dataset(data_path);
      const vareid::EvalReport report =
          vareid::evaluate_model(model.embedder, data, vareid::count_viewpoints(data));
      vareid::write_text(report_path, vareid::report_to_json(report).dump(1) + "\n");
      std::cout << "mAP " << report.map << "  rank1 " << report.rank(1) << "  rank5 " << report.rank(5)
                << "  queries " << report.n_queries << " (skipped " << report.n_skipped << ")\n";
    } else if (*ablate) {
      const vareid::TrainConfig cfg = vareid::load_train_config(config_path);
      const vareid::Dataset data = vareid::load_dataset(data_path);
      const auto table =
          vareid::ablate(cfg, data, parse_variants(variants), vareid::seed_range(cfg.seed, n_seeds));
      const std::string csv = vareid::ablation_to_csv(table);
      vareid::write_text(table_path, csv);
      std::cout << csv;
    } else if (*flip) {
      const vareid::Dataset data = vareid::load_dataset(data_path);
      vareid::save_dataset(vareid::flip_viewpoint_labels(data, rate, flip_seed), flip_out);
    } else if (*gradcheck) {
      const vareid::GradcheckReport report = vareid::run_gradcheck(gc_opts);
      std::cout << report.to_text(gc_opts.tolerance);
      return report.pass() ? 0 : 1;
    }
  } catch (const vareid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
