// tedctl: command-line front end for experiments, ablations, the
// disentanglement metric, gradient checks and plotting.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ted/ted.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string seeds;
};

ted::Config load_config(const CommonOptions& o) {
  ted::Config c = o.config_path.empty() ? ted::Config() : ted::Config::load(o.config_path);
  for (const auto& s : o.overrides) c.set(s);
  if (!o.out_dir.empty()) c.set("run.out", o.out_dir);
  if (o.seed) c.set("run.seeds", std::to_string(*o.seed));
  if (!o.seeds.empty()) c.set("run.seeds", o.seeds);
  return c;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--set", o.overrides, "override, key=value (repeatable)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "single seed");
  cmd->add_option("--seeds", o.seeds, "seed range N..M");
}

int cmd_train(const CommonOptions& o) {
  auto cfg = ted::ExperimentConfig::from_config(load_config(o));
  auto res = ted::run_suite(cfg);
  for (const auto& s : res.seeds)
    if (!s.ok) std::cerr << "warning: seed " << s.seed << " failed: " << s.error << "\n";
  std::cout << "aggregate: " << res.aggregate_path << "\nsummary: " << res.summary_path << "\n";
  return res.succeeded() == res.seeds.size() ? 0 : static_cast<int>(ted::ErrorCategory::numerical);
}

int cmd_ablate(const CommonOptions& o) {
  auto c = load_config(o);
  const std::string out = c.get_string("run.out", "out");
  auto res = ted::run_ablations(c, out);
  for (const auto& r : res.rows)
    std::cout << r.auc_rank << ". " << r.name << " auc=" << ted::csv::number(r.post_switch_auc)
              << " score=" << ted::csv::number(r.final_score) << "\n";
  std::cout << "summary: " << res.summary_path << "\n";
  return 0;
}

int cmd_metric(const CommonOptions& o, const std::string& checkpoint, const std::string& csv_path,
               const std::string& phase_s) {
  auto cfg = ted::ExperimentConfig::from_config(load_config(o));
  const auto encoder = ted::load_checkpoint(checkpoint);
  if (encoder.input_dim() != static_cast<Eigen::Index>(cfg.env.observation_dim()))
    throw ted::ShapeError("checkpoint input width " + std::to_string(encoder.input_dim()) +
                          " does not match the environment observation width " +
                          std::to_string(cfg.env.observation_dim()));
  const auto phase = phase_s == "test" ? ted::Phase::test : ted::Phase::train;
  const std::uint64_t seed = o.seed.value_or(0);
  auto report = ted::score_encoder(cfg, encoder, phase, ted::Rng::derive(cfg.run.master_seed, {seed, 7}));

  const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
  if (auto parent = std::filesystem::path(csv_path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream os(csv_path, std::ios::app | std::ios::binary);
  if (!os) throw ted::IoError("cannot write '" + csv_path + "'");
  if (fresh) {
    os << "seed,samples,B,accuracy";
    for (std::size_t k = 0; k < report.per_factor_accuracy.size(); ++k) os << ",per_factor_acc_" << k;
    os << "\n";
  }
  os << seed << "," << report.samples << "," << report.pairs_per_sample << "," << ted::csv::number(report.accuracy);
  for (double a : report.per_factor_accuracy) os << "," << ted::csv::number(a);
  os << "\n";
  std::cout << "accuracy " << ted::csv::number(report.accuracy) << "\n";
  return 0;
}

int cmd_gradcheck(std::size_t points, double tolerance) {
  auto rep = ted::run_gradcheck(points);
  for (const auto& c : rep.checks)
    std::cout << c.name << ": entries=" << c.entries << " max_rel_err=" << ted::csv::number(c.max_relative_error)
              << (c.max_relative_error <= tolerance ? " ok" : " FAIL") << "\n";
  return rep.worst() <= tolerance ? 0 : static_cast<int>(ted::ErrorCategory::numerical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal disentanglement experiments"};
  app.require_subcommand(1);

  CommonOptions train_opts, ablate_opts, metric_opts;
  auto* train = app.add_subcommand("train", "run the train->switch protocol over seeds");
  add_common(train, train_opts);
  auto* ablate = app.add_subcommand("ablate", "run the ablation variants");
  add_common(ablate, ablate_opts);

  auto* metric = app.add_subcommand("metric", "score an encoder checkpoint");
  add_common(metric, metric_opts);
  std::string checkpoint, metric_csv = "metric.csv", phase = "train";
  metric->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
  metric->add_option("--csv", metric_csv, "CSV file to append the report row to");
  metric->add_option("--phase", phase, "episodic ranges to sample: train|test")->check(CLI::IsMember({"train", "test"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::size_t points = 20;
  double tolerance = 1e-4;
  gradcheck->add_option("--points", points, "random parameter points");
  gradcheck->add_option("--tolerance", tolerance, "max relative error");

  auto* plot = app.add_subcommand("plot", "render aggregate CSV curves as SVG");
  std::string plot_csv, plot_out = ".";
  std::optional<double> switch_step;
  plot->add_option("--csv", plot_csv, "aggregate CSV")->required();
  plot->add_option("--out", plot_out, "output directory");
  plot->add_option("--switch", switch_step, "switch step (default: last train row)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_opts);
    if (*ablate) return cmd_ablate(ablate_opts);
    if (*metric) return cmd_metric(metric_opts, checkpoint, metric_csv, phase);
    if (*gradcheck) return cmd_gradcheck(points, tolerance);
    if (*plot) {
      for (const auto& p : ted::emit_plots(plot_csv, plot_out, switch_step)) std::cout << p << "\n";
      return 0;
    }
  } catch (const ted::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
