// Command line front end. All behaviour lives in swarm/cli.hpp; this
// file only maps flags onto the command argument structs.
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swarm/cli.hpp"

namespace {

void attach_common(CLI::App* cmd, swarm::cli::CommonArgs& args,
                   bool config_required = true) {
  cmd->add_option("-c,--config", args.config_path, "experiment JSON file")
      ->required(config_required);
  cmd->add_option("--override", args.overrides,
                  "dotted-path override, e.g. steps.mean_h=4 (repeatable)");
  cmd->add_option("--seed", args.seed, "replace master_seed from the file");
  cmd->add_option("--out", args.out_dir,
                  "output root (default: $SWARM_OUT_DIR, then ./out)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized pairwise-averaging SGD simulator"};
  app.require_subcommand(1);

  swarm::cli::CommonArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  attach_common(run, run_args);

  swarm::cli::SweepArgs sweep_args;
  CLI::App* sweep =
      app.add_subcommand("sweep", "run one experiment per axis value");
  attach_common(sweep, sweep_args.base);
  sweep->add_option("--axis", sweep_args.axis, "T, H, n, eta, or variant")
      ->required();
  sweep->add_option("--values", sweep_args.values, "axis values")
      ->required()
      ->expected(-1);
  sweep->add_option("--jobs", sweep_args.jobs, "concurrent runs (default 1)");

  swarm::cli::BoundArgs bound_args;
  CLI::App* bound =
      app.add_subcommand("bound", "evaluate a convergence bound");
  bound->add_option("--form", bound_args.form,
                    "second-moment, variance, or gamma")
      ->required();
  bound->add_option("--f0-gap", bound_args.f0_gap, "f(mu_0) - f*");
  bound->add_option("--t", bound_args.total_t, "interaction count T");
  bound->add_option("--mean-h", bound_args.mean_h, "expected local steps H");
  bound->add_option("--l", bound_args.smoothness, "smoothness constant L");
  bound->add_option("--m2", bound_args.m2, "second-moment constant M^2");
  bound->add_option("--sigma2", bound_args.sigma2, "gradient variance");
  bound->add_option("--rho2", bound_args.rho2, "gradient dissimilarity");
  bound->add_option("--n", bound_args.n, "node count");
  bound->add_option("--r", bound_args.r, "graph degree");
  bound->add_option("--lambda2", bound_args.lambda2,
                    "Laplacian spectral gap");
  bound->add_option("--eta", bound_args.eta, "learning rate");

  swarm::cli::GraphInfoArgs graph_args;
  CLI::App* graph =
      app.add_subcommand("graph-info", "build a topology and report lambda2");
  graph->add_option("--kind", graph_args.kind,
                    "complete, ring, hypercube, or random_regular")
      ->required();
  graph->add_option("--n", graph_args.n, "node count")->required();
  graph->add_option("--r", graph_args.r, "degree (families imply it)");
  graph->add_option("--seed", graph_args.seed, "pairing seed (default 0)");

  swarm::cli::MomentsArgs moments_args;
  CLI::App* moments = app.add_subcommand(
      "moments", "estimate gradient moment constants for an objective");
  attach_common(moments, moments_args.base);
  moments->add_option("--probe-points", moments_args.probe_points,
                      "probe point count (default 16)");
  moments->add_option("--draws", moments_args.draws_per_point,
                      "gradient draws per probe (default 1000)");
  moments->add_option("--moments-seed", moments_args.moments_seed,
                      "estimation seed (default: derived from master_seed)");
  moments->add_flag("--rho2", moments_args.require_rho2,
                    "require the dissimilarity estimate");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return swarm::cli::cmd_run(run_args);
  if (sweep->parsed()) return swarm::cli::cmd_sweep(sweep_args);
  if (bound->parsed()) return swarm::cli::cmd_bound(bound_args);
  if (graph->parsed()) return swarm::cli::cmd_graph_info(graph_args);
  return swarm::cli::cmd_moments(moments_args);
}
