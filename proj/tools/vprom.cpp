#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "vprom/pipeline.hpp"

using namespace vprom;

namespace {

struct Options {
  std::string config_path;
  std::string preset;
  std::string strategy = "vprom";
  std::string split = "valid";
  bool hyper = false;
  double tau = 0.0;
  std::size_t uq = 0;
  long dof = -1;
  std::size_t limit = 0;
  long long seed = -1;
  std::size_t workers = 0;
  std::string map_x = "amp";
  std::string map_y = "f_but";
};

io::Config load(const Options& o) {
  io::Config cfg = o.config_path.empty() ? io::preset(o.preset.empty() ? "desk" : o.preset)
                                         : io::load_config(o.config_path, o.preset);
  if (o.seed >= 0) cfg.cvae.seed = static_cast<std::uint64_t>(o.seed);
  if (o.workers > 0) cfg.workers = o.workers;
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<metrics::StrategySummary>& rows) {
  std::printf("%-12s %5s %6s %12s %12s %14s %14s %10s\n", "strategy", "n", "failed", "median_err_u", "max_err_u",
              "median_err_ud", "median_err_udd", "speed_up");
  for (const auto& s : rows) {
    std::printf("%-12s %5zu %6zu %11.3f%% %11.3f%% %13.3f%% %13.3f%% %9.2fx\n", s.strategy.c_str(), s.n_records,
                s.n_failed, s.err_u.median, s.err_u.max, s.err_udot.median, s.err_uddot.median, s.mean_speed_up);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric reduced-order models of hysteretic frames"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--preset", o.preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", o.seed, "Override the cVAE master seed");
  app.add_option("--workers", o.workers, "Worker threads for FOM runs");

  auto* doe = app.add_subcommand("doe", "Draw the training and validation designs");
  auto* sim = app.add_subcommand("simulate", "Run the full-order model for a split");
  sim->add_option("--split", o.split, "train or valid")->check(CLI::IsMember({"train", "valid"}));
  auto* build = app.add_subcommand("build", "Build the artifacts of one strategy");
  build->add_option("--strategy", o.strategy, "mac, cprom or vprom")->check(CLI::IsMember({"mac", "cprom", "vprom"}));
  auto* eval = app.add_subcommand("evaluate", "Evaluate one strategy against stored FOM solutions");
  eval->add_option("--strategy", o.strategy, "mac, cprom or vprom")->check(CLI::IsMember({"mac", "cprom", "vprom"}));
  eval->add_option("--split", o.split, "train or valid")->check(CLI::IsMember({"train", "valid"}));
  eval->add_flag("--hyper", o.hyper, "Use ECSW hyper-reduction");
  eval->add_option("--tau", o.tau, "ECSW tolerance (default from config)")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--uq", o.uq, "Latent draws for the response envelope (vprom only)");
  eval->add_option("--dof", o.dof, "DOF of the envelope (default: largest response)");
  eval->add_option("--limit", o.limit, "Evaluate only the first n samples");
  auto* report = app.add_subcommand("report", "Aggregate evaluation records into tables");
  report->add_option("--map-x", o.map_x, "Error map x axis parameter");
  report->add_option("--map-y", o.map_y, "Error map y axis parameter");

  CLI11_PARSE(app, argc, argv);

  try {
    pipeline::Campaign run(load(o));
    std::cerr << "run directory: " << run.dir().string() << '\n';
    if (doe->parsed()) {
      run.doe();
    } else if (sim->parsed()) {
      const std::size_t failed = run.simulate(o.split);
      return failed ? 1 : 0;
    } else if (build->parsed()) {
      run.build(pipeline::strategy_from_string(o.strategy));
    } else if (eval->parsed()) {
      pipeline::EvaluateOptions eo;
      eo.hyper = o.hyper;
      if (o.tau > 0.0) eo.tau = o.tau;
      eo.uq_draws = o.uq;
      eo.uq_dof = o.dof;
      if (o.limit > 0) eo.limit = o.limit;
      const auto res = run.evaluate(pipeline::strategy_from_string(o.strategy), o.split, eo);
      print_summary(metrics::summarize(res.records));
      for (std::size_t i = 0; i < res.containment.size(); ++i) {
        std::printf("uq sample %zu: envelope contains the mean response at %.2f%% of steps\n", i,
                    100.0 * res.containment[i]);
      }
    } else if (report->parsed()) {
      print_summary(run.report(o.map_x, o.map_y));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
