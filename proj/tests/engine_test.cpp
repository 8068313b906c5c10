#include "swarm/engine.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "swarm/bounds.hpp"
#include "swarm/random.hpp"

namespace swarm {
namespace {

// Long-double re-evaluations of the bound formulas, written against the
// formula text rather than the library code.
long double oracle_rate_second_moment(long double f0_gap, long double t,
                                      long double h, long double l,
                                      long double m2, long double r,
                                      long double lambda2) {
  const long double graph = (r / lambda2) * (r / lambda2) + 1.0L;
  return 4.0L * f0_gap / (std::sqrt(t) * h) +
         2304.0L * h * h * std::max(1.0L, l * l) * m2 / std::sqrt(t) * graph;
}

long double oracle_rate_variance(long double f0_gap, long double t,
                                 long double h, long double l,
                                 long double sigma2, long double rho2,
                                 long double r, long double lambda2) {
  const long double graph = (r / lambda2) * (r / lambda2) + 1.0L;
  return f0_gap / (std::sqrt(t) * h) +
         376.0L * h * h * std::max(1.0L, l * l) * (sigma2 + 4.0L * rho2) /
             std::sqrt(t) * graph;
}

long double oracle_gamma_steady(long double n, long double r,
                                long double lambda2, long double eta,
                                long double h, long double m2) {
  return (40.0L * r / lambda2 + 80.0L * r * r / (lambda2 * lambda2)) * n *
         eta * eta * h * h * m2;
}

TEST(MeanAndGamma, HandArithmetic) {
  const std::vector<Vec> models = {{1.0}, {2.0}, {6.0}};
  const Vec mu = compute_mean_model(models);
  EXPECT_DOUBLE_EQ(mu[0], 3.0);
  EXPECT_DOUBLE_EQ(compute_gamma(models), 14.0);

  const std::vector<Vec> pair = {{0.0}, {2.0}};
  EXPECT_DOUBLE_EQ(compute_mean_model(pair)[0], 1.0);
  EXPECT_DOUBLE_EQ(compute_gamma(pair), 2.0);

  const std::vector<Vec> equal = {{1.5, -2.0}, {1.5, -2.0}, {1.5, -2.0}};
  EXPECT_DOUBLE_EQ(compute_gamma(equal), 0.0);
}

TEST(GammaContraction, SingleEdgeEnumeration) {
  const Topology k2 = build_topology(GraphKind::complete, 2, 1, 0);
  const std::vector<Vec> models = {{0.0}, {2.0}};
  EXPECT_DOUBLE_EQ(exact_gamma_contraction(k2, models), 0.0);
}

TEST(GammaContraction, MatchesBruteForceEnumeration) {
  const Topology ring = build_topology(GraphKind::ring, 8, 2, 0);
  RandomStream rng = RandomStream::substream(5, StreamDomain::probe_points, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec> models(8, Vec(3));
    for (Vec& x : models) {
      for (double& v : x) v = 2.0 * rng.normal();
    }
    double brute = 0.0;
    for (const Edge& e : ring.edges) {
      std::vector<Vec> averaged = models;
      const Vec mid = average(models[e.u], models[e.v]);
      averaged[e.u] = mid;
      averaged[e.v] = mid;
      brute += compute_gamma(averaged);
    }
    brute /= ring.edge_count();
    const double fast = exact_gamma_contraction(ring, models);
    EXPECT_NEAR(fast, brute, 1e-9 * std::max(1.0, brute));

    const double gamma = compute_gamma(models);
    const double factor = 1.0 - ring.lambda2 / (ring.degree_r * ring.n);
    EXPECT_LE(fast, factor * gamma + 1e-9);
  }
}

TEST(RateBoundSecondMoment, PinnedAgainstOracle) {
  // Zero second moment leaves only the initial-gap term.
  EXPECT_DOUBLE_EQ(bound_rate_second_moment(10.0, 10000, 4.0, 1.0, 0.0, 7, 8.0),
                   0.1);
  // r = lambda2 makes the graph term exactly 2; the full second term is
  // 2304 * 2 / sqrt(2304^2 * 4) = 1.
  const double t_square = 2304.0 * 2304.0 * 4.0;
  EXPECT_NEAR(bound_rate_second_moment(0.0, static_cast<std::int64_t>(t_square),
                                       1.0, 1.0, 1.0, 4, 4.0),
              1.0, 1e-12);
  // General point against the long-double oracle.
  const double value = bound_rate_second_moment(3.7, 250000, 4.0, 1.5, 21.0, 3,
                                                0.29);
  EXPECT_NEAR(value,
              static_cast<double>(oracle_rate_second_moment(
                  3.7L, 250000.0L, 4.0L, 1.5L, 21.0L, 3.0L, 0.29L)),
              1e-9 * value);
}

TEST(RateBoundSecondMoment, HomogeneityAndMonotonicity) {
  const double base = bound_rate_second_moment(5.0, 40000, 4.0, 1.0, 9.0, 7, 8.0);
  const double doubled_t =
      bound_rate_second_moment(5.0, 80000, 4.0, 1.0, 9.0, 7, 8.0);
  EXPECT_NEAR(doubled_t, base / std::sqrt(2.0), 1e-12 * base);
  EXPECT_LT(bound_rate_second_moment(5.0, 40000, 4.0, 1.0, 9.0, 7, 9.0), base);
  EXPECT_GT(bound_rate_second_moment(5.0, 40000, 8.0, 1.0, 9.0, 7, 8.0), base);
  EXPECT_GT(bound_rate_second_moment(5.0, 40000, 4.0, 1.0, 18.0, 7, 8.0), base);
  EXPECT_GT(bound_rate_second_moment(5.0, 40000, 4.0, 2.0, 9.0, 7, 8.0), base);
}

TEST(RateBoundVariance, PinnedAgainstOracle) {
  EXPECT_DOUBLE_EQ(bound_rate_variance(10.0, 10000, 4.0, 1.0, 0.0, 0.0, 7, 8.0),
                   10.0 / (100.0 * 4.0));
  // Worked plug-in: n=8, H=4, L=1, sigma2=1, rho2=0.5, r=lambda2,
  // T=1e6, f0_gap=10 -> 0.0025 + 376*16*3*2/1000 = 36.0985.
  EXPECT_NEAR(bound_rate_variance(10.0, 1000000, 4.0, 1.0, 1.0, 0.5, 8, 8.0),
              36.0985, 1e-9);
  const double value =
      bound_rate_variance(2.2, 640000, 3.0, 0.8, 1.7, 0.4, 4, 1.1);
  EXPECT_NEAR(value,
              static_cast<double>(oracle_rate_variance(
                  2.2L, 640000.0L, 3.0L, 0.8L, 1.7L, 0.4L, 4.0L, 1.1L)),
              1e-9 * value);
}

TEST(RateBoundVariance, DissimilarityWeighsFourTimesVariance) {
  const double base = bound_rate_variance(5.0, 40000, 4.0, 1.0, 0.0, 0.0, 7, 8.0);
  const double with_sigma =
      bound_rate_variance(5.0, 40000, 4.0, 1.0, 0.3, 0.0, 7, 8.0);
  const double with_rho =
      bound_rate_variance(5.0, 40000, 4.0, 1.0, 0.0, 0.3, 7, 8.0);
  EXPECT_NEAR(with_rho - base, 4.0 * (with_sigma - base), 1e-12);
  EXPECT_LT(bound_rate_variance(5.0, 80000, 4.0, 1.0, 0.3, 0.1, 7, 8.0),
            bound_rate_variance(5.0, 40000, 4.0, 1.0, 0.3, 0.1, 7, 8.0));
}

TEST(GammaSteadyBound, PinnedAgainstOracle) {
  EXPECT_DOUBLE_EQ(bound_gamma_steady(8, 7, 8.0, 0.01, 4.0, 0.0), 0.0);
  // K_8 plug-in: (40*7/8 + 80*49/64) * 8 * 1e-4 * 16 * 25 = 30.8.
  EXPECT_NEAR(bound_gamma_steady(8, 7, 8.0, 0.01, 4.0, 25.0), 30.8, 1e-9);
  const double quarter = bound_gamma_steady(8, 7, 8.0, 0.25, 4.0, 25.0);
  const double half = bound_gamma_steady(8, 7, 8.0, 0.5, 4.0, 25.0);
  EXPECT_DOUBLE_EQ(half, 4.0 * quarter);
  const double value = bound_gamma_steady(16, 4, 0.58, 0.003, 6.0, 12.5);
  EXPECT_NEAR(value,
              static_cast<double>(oracle_gamma_steady(16.0L, 4.0L, 0.58L,
                                                      0.003L, 6.0L, 12.5L)),
              1e-9 * value);
}

TEST(BoundArguments, RejectNonsense) {
  EXPECT_THROW(bound_rate_second_moment(1.0, 100, 0.5, 1.0, 1.0, 7, 8.0),
               std::invalid_argument);
  EXPECT_THROW(bound_rate_second_moment(1.0, 100, 4.0, 1.0, 1.0, 0, 8.0),
               std::invalid_argument);
  EXPECT_THROW(bound_gamma_steady(8, 7, 0.0, 0.01, 4.0, 25.0),
               std::invalid_argument);
}

TEST(HorizonPreconditions, FourthPowerThreshold) {
  EXPECT_TRUE(horizon_precondition_second_moment(4096, 8));
  EXPECT_FALSE(horizon_precondition_second_moment(4095, 8));
  EXPECT_FALSE(horizon_precondition_second_moment(512, 8));  // n^3 < n^4
  // 57600 * 2^4 * 1 * 1 * (1/4 + 1)^2 = 57600 * 16 * 25/16 = 1440000.
  EXPECT_NEAR(horizon_threshold_variance(2, 1.0, 1.0, 1, 2.0), 1440000.0,
              1e-6);
}

TEST(ResolvedDefaults, EtaCadenceDegree) {
  SimConfig config;
  config.n = 4;
  config.total_t = 100;
  EXPECT_DOUBLE_EQ(resolved_eta(config), 0.4);
  config.eta = 0.05;
  EXPECT_DOUBLE_EQ(resolved_eta(config), 0.05);

  config.total_t = 5000;
  EXPECT_EQ(resolved_cadence(config), 5);
  config.total_t = 999;
  EXPECT_EQ(resolved_cadence(config), 1);
  config.metrics_every = 42;
  EXPECT_EQ(resolved_cadence(config), 42);

  EXPECT_EQ(resolved_degree(GraphKind::complete, 8, std::nullopt), 7);
  EXPECT_EQ(resolved_degree(GraphKind::ring, 8, std::nullopt), 2);
  EXPECT_EQ(resolved_degree(GraphKind::hypercube, 16, std::nullopt), 4);
  EXPECT_EQ(resolved_degree(GraphKind::ring, 8, 2), 2);
  EXPECT_THROW(resolved_degree(GraphKind::random_regular, 16, std::nullopt),
               std::invalid_argument);
}

SimConfig tiny_blocking_config() {
  SimConfig config;
  config.name = "engine-test";
  config.n = 2;
  config.total_t = 1;
  config.eta = 0.1;
  config.steps = {StepKind::fixed, 1.0};
  config.variant = Variant::blocking;
  config.graph = GraphKind::complete;
  config.objective.kind = "constant";
  config.objective.dimension = 1;
  config.initial_models = {{0.0}, {2.0}};
  return config;
}

TEST(RunSimulation, TwoNodeAveragingTrace) {
  std::vector<MetricsSnapshot> snaps;
  const RunOutput output = run_simulation(
      tiny_blocking_config(),
      [&](int, const MetricsSnapshot& snap) { snaps.push_back(snap); });
  ASSERT_EQ(snaps.size(), 2u);
  EXPECT_EQ(snaps[0].t, 0);
  EXPECT_DOUBLE_EQ(snaps[0].gamma, 2.0);
  EXPECT_EQ(snaps[1].t, 1);
  EXPECT_DOUBLE_EQ(snaps[1].gamma, 0.0);
  EXPECT_DOUBLE_EQ(output.replicas[0].max_gamma, 2.0);
  EXPECT_EQ(output.replicas[0].cum_bits, 2 * raw_transfer_bits(1));
}

TEST(RunSimulation, SnapshotGridIncludesEndpointsAndCadence) {
  SimConfig config = tiny_blocking_config();
  config.total_t = 10;
  config.metrics_every = 4;
  std::vector<std::int64_t> ts;
  run_simulation(config, [&](int, const MetricsSnapshot& snap) {
    ts.push_back(snap.t);
  });
  EXPECT_EQ(ts, (std::vector<std::int64_t>{0, 4, 8, 10}));
}

// Replays the engine's interaction sequence through an independent
// scalar state table and checks both the per-step models and the
// convergence criterion.
TEST(RunSimulation, QuadraticBlockingMatchesScalarReplay) {
  SimConfig config;
  config.name = "replay";
  config.n = 4;
  config.total_t = 200;
  config.eta = 0.1;
  config.steps = {StepKind::fixed, 1.0};
  config.variant = Variant::blocking;
  config.graph = GraphKind::complete;
  config.objective.kind = "quadratic";
  config.objective.dimension = 1;
  config.objective.center = {1.0};

  std::vector<double> oracle(4, 0.0);
  int events = 0;
  const RunOutput output = run_simulation(
      config, {}, [&](const InteractionEvent& event) {
        ++events;
        double& xi = oracle[event.initiator];
        double& xj = oracle[event.partner];
        const double post_i = xi - 0.1 * (xi - 1.0);
        const double post_j = xj - 0.1 * (xj - 1.0);
        const double merged = 0.5 * (post_i + post_j);
        xi = merged;
        xj = merged;
        ASSERT_NE(event.initiator_state, nullptr);
        EXPECT_NEAR(event.initiator_state->live_model[0], merged, 1e-12);
        EXPECT_NEAR(event.partner_state->live_model[0], merged, 1e-12);
      });
  EXPECT_EQ(events, 200);
  ASSERT_TRUE(output.replicas[0].final_f_gap.has_value());
  EXPECT_LT(*output.replicas[0].final_f_gap, 1e-6);

  double mean = 0.0;
  for (double v : oracle) mean += v;
  mean /= 4.0;
  EXPECT_NEAR(output.replicas[0].final_f, 0.5 * (mean - 1.0) * (mean - 1.0),
              1e-12);
}

TEST(RunSimulation, DeterministicSnapshotStreams) {
  SimConfig config;
  config.name = "determinism";
  config.n = 8;
  config.total_t = 500;
  config.steps = {StepKind::geometric, 4.0};
  config.variant = Variant::nonblocking;
  config.graph = GraphKind::hypercube;
  config.objective.kind = "quadratic";
  config.objective.dimension = 4;
  config.objective.center = {1.0, 1.0, 1.0, 1.0};
  config.objective.noise_std = 0.5;
  config.master_seed = 33;

  auto capture = [&config] {
    std::ostringstream out;
    run_simulation(config, [&](int, const MetricsSnapshot& snap) {
      out << snap.t << ':' << snap.gamma << ':' << snap.grad_norm_sq_at_mu
          << ':' << snap.f_at_mu << ':' << snap.cum_bits << '\n';
    });
    return out.str();
  };
  const std::string first = capture();
  const std::string second = capture();
  EXPECT_EQ(first, second);
  EXPECT_FALSE(first.empty());
}

TEST(RunSimulation, ReplicasDifferAndAggregateAverages) {
  SimConfig config;
  config.name = "replicas";
  config.n = 4;
  config.total_t = 300;
  config.steps = {StepKind::geometric, 2.0};
  config.variant = Variant::blocking;
  config.graph = GraphKind::complete;
  config.objective.kind = "quadratic";
  config.objective.dimension = 2;
  config.objective.center = {1.0, -1.0};
  config.objective.noise_std = 0.4;
  config.replicas = 3;

  const RunOutput output = run_simulation(config);
  ASSERT_EQ(output.replicas.size(), 3u);
  EXPECT_NE(output.replicas[0].replica_seed, output.replicas[1].replica_seed);
  EXPECT_NE(output.replicas[0].avg_grad_norm_sq,
            output.replicas[1].avg_grad_norm_sq);

  double mean_gamma = 0.0;
  double mean_rate = 0.0;
  for (const RunSummary& replica : output.replicas) {
    mean_gamma += replica.mean_gamma;
    mean_rate += replica.avg_grad_norm_sq;
  }
  EXPECT_NEAR(output.aggregate.mean_gamma, mean_gamma / 3.0, 1e-12);
  EXPECT_NEAR(output.aggregate.avg_grad_norm_sq, mean_rate / 3.0, 1e-12);
  EXPECT_EQ(output.aggregate.replicas, 3);
}

TEST(RunSimulation, InvariantChecksCoverAllVariants) {
  for (Variant variant :
       {Variant::blocking, Variant::nonblocking, Variant::quantized}) {
    SimConfig config;
    config.name = "invariants";
    config.n = 8;
    config.total_t = 400;
    config.steps = {StepKind::geometric, 4.0};
    config.variant = variant;
    config.graph = GraphKind::ring;
    config.objective.kind = "quadratic";
    config.objective.dimension = 3;
    config.objective.center = {0.5, 0.5, 0.5};
    config.objective.noise_std = 0.6;
    config.check_invariants = true;
    config.master_seed = 7 + static_cast<int>(variant);
    EXPECT_NO_THROW(run_simulation(config)) << to_string(variant);
  }
}

TEST(RunSimulation, LowHorizonWarnsOnStderr) {
  SimConfig config = tiny_blocking_config();
  config.n = 2;
  config.total_t = 10;  // below 2^4
  std::fflush(stderr);
  char path[] = "/tmp/swarm-stderr-XXXXXX";
  const int fd = mkstemp(path);
  ASSERT_GE(fd, 0);
  const int saved = dup(2);
  dup2(fd, 2);
  close(fd);
  run_simulation(config);
  std::fflush(stderr);
  dup2(saved, 2);
  close(saved);

  std::ifstream in(path);
  std::stringstream captured;
  captured << in.rdbuf();
  std::remove(path);
  EXPECT_NE(captured.str().find("below n^4"), std::string::npos);
}

TEST(RunSimulation, DivergenceAbortNamesTimeAndReplica) {
  SimConfig config;
  config.name = "diverge";
  config.n = 4;
  config.total_t = 5000;
  config.eta = 3.0;
  config.steps = {StepKind::fixed, 5.0};
  config.variant = Variant::blocking;
  config.graph = GraphKind::complete;
  config.objective.kind = "quadratic";
  config.objective.dimension = 1;
  config.objective.center = {0.0};
  config.initial_fill = 10.0;
  try {
    run_simulation(config);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& err) {
    const std::string what = err.what();
    EXPECT_NE(what.find("t="), std::string::npos) << what;
    EXPECT_NE(what.find("replica"), std::string::npos) << what;
  }
}

TEST(RunSimulation, ConfigValidation) {
  SimConfig config = tiny_blocking_config();
  config.total_t = 0;
  EXPECT_THROW(run_simulation(config), std::invalid_argument);
  config = tiny_blocking_config();
  config.eta = -0.5;
  EXPECT_THROW(run_simulation(config), std::invalid_argument);
  config = tiny_blocking_config();
  config.initial_models = {{0.0}};  // wrong count
  EXPECT_THROW(run_simulation(config), std::invalid_argument);
  config = tiny_blocking_config();
  config.replicas = 0;
  EXPECT_THROW(run_simulation(config), std::invalid_argument);
}

TEST(BoundCheck, SmallRunProducesEntriesAndAnnotation) {
  SimConfig config;
  config.name = "bound-check";
  config.n = 8;
  config.total_t = 512;  // n^3, below n^4
  config.eta = 0.001;
  config.steps = {StepKind::geometric, 4.0};
  config.variant = Variant::blocking;
  config.graph = GraphKind::complete;
  config.objective.kind = "bounded_nonconvex";
  config.objective.dimension = 4;
  config.objective.noise_std = 0.2;
  config.replicas = 3;

  const RunOutput output = run_simulation(config);
  const BoundCheckReport report = bound_check(output);
  EXPECT_FALSE(report.t_ge_n4);
  ASSERT_GE(report.entries.size(), 2u);
  bool saw_gamma = false;
  bool saw_rate = false;
  for (const BoundCheckEntry& entry : report.entries) {
    EXPECT_EQ(entry.replicas, 3);
    if (entry.bound == "gamma_steady") {
      saw_gamma = true;
      EXPECT_TRUE(entry.pass);
      EXPECT_LE(entry.empirical_mean, entry.bound_value);
    }
    if (entry.bound == "rate_second_moment") saw_rate = true;
  }
  EXPECT_TRUE(saw_gamma);
  EXPECT_TRUE(saw_rate);
}

}  // namespace
}  // namespace swarm
