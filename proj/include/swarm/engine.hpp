// Discrete-event simulation engine. One time unit is one uniformly
// random edge activation; parallel time is T / n.
//
// Determinism contract: every source of randomness is a named
// substream of (master seed, replica index), so identical configs and
// seeds reproduce traces bitwise, and variants sharing a seed consume
// identical edge, step-count, and gradient sequences.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarm/bounds.hpp"
#include "swarm/objective.hpp"
#include "swarm/protocol.hpp"
#include "swarm/quantizer.hpp"
#include "swarm/random.hpp"
#include "swarm/topology.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {

// ===== potential functions =====

inline Vec compute_mean_model(std::span<const Vec> models) {
  if (models.empty()) throw std::invalid_argument("no models");
  Vec mu(models[0].size(), 0.0);
  for (const Vec& x : models) axpy(1.0, x, mu);
  scale(mu, 1.0 / static_cast<double>(models.size()));
  return mu;
}

// Gamma = sum_i ||X_i - mu||^2.
inline double compute_gamma(std::span<const Vec> models) {
  const Vec mu = compute_mean_model(models);
  double acc = 0.0;
  for (const Vec& x : models) acc += dist_sq(x, mu);
  return acc;
}

// Expected potential after one pure averaging step, by full edge
// enumeration (no sampling): averaging an edge (u, v) changes Gamma by
// -||X_u - X_v||^2 / 2 and leaves the mean fixed.
inline double exact_gamma_contraction(const Topology& topo,
                                      std::span<const Vec> models) {
  if (static_cast<int>(models.size()) != topo.n) {
    throw std::invalid_argument("model list size must equal node count");
  }
  const double gamma = compute_gamma(models);
  double acc = 0.0;
  for (const Edge& e : topo.edges) {
    acc += gamma - 0.5 * dist_sq(models[e.u], models[e.v]);
  }
  return acc / static_cast<double>(topo.edge_count());
}

// ===== configuration =====

enum class Variant { blocking, nonblocking, quantized };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::blocking: return "blocking";
    case Variant::nonblocking: return "nonblocking";
    case Variant::quantized: return "quantized";
  }
  return "unknown";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "blocking") return Variant::blocking;
  if (s == "nonblocking") return Variant::nonblocking;
  if (s == "quantized") return Variant::quantized;
  throw std::invalid_argument("unknown variant: " + s);
}

struct ObjectiveSpec {
  std::string kind = "quadratic";  // constant | quadratic |
                                   // bounded_nonconvex | noniid_logistic
  int dimension = 1;
  Vec center;                      // quadratic; empty means the origin
  double noise_std = 0.0;
  int samples_per_agent = 50;      // noniid_logistic
  double heterogeneity = 0.0;      // noniid_logistic
  std::optional<std::uint64_t> data_seed;
};

struct QuantizerSpec {
  std::optional<double> step;                 // absent: selection rule
  std::optional<std::uint32_t> range_cells;   // absent: envelope rule
};

struct SimConfig {
  std::string name = "experiment";
  int n = 2;
  std::int64_t total_t = 1000;
  std::optional<double> eta;                  // absent: n / sqrt(T)
  LocalStepPolicy steps{StepKind::fixed, 1.0};
  Variant variant = Variant::blocking;
  GraphKind graph = GraphKind::complete;
  std::optional<int> degree_r;                // absent: family default
  std::uint64_t topology_seed = 0;
  ObjectiveSpec objective;
  QuantizerSpec quantizer;
  std::uint64_t master_seed = 1;
  std::optional<std::int64_t> metrics_every;  // absent: ceil(T / 1000)
  int replicas = 1;
  double initial_fill = 0.0;
  std::vector<Vec> initial_models;            // empty: fill everywhere
  bool check_invariants = true;
};

inline double resolved_eta(const SimConfig& config) {
  if (config.eta.has_value()) return *config.eta;
  return static_cast<double>(config.n) /
         std::sqrt(static_cast<double>(config.total_t));
}

inline std::int64_t resolved_cadence(const SimConfig& config) {
  if (config.metrics_every.has_value()) return *config.metrics_every;
  return std::max<std::int64_t>(1, (config.total_t + 999) / 1000);
}

inline int resolved_degree(GraphKind kind, int n, std::optional<int> given) {
  if (given.has_value()) return *given;
  switch (kind) {
    case GraphKind::complete: return n - 1;
    case GraphKind::ring: return 2;
    case GraphKind::hypercube: {
      int log = 0;
      while ((1 << log) < n) ++log;
      return log;
    }
    case GraphKind::random_regular:
      throw std::invalid_argument("random_regular requires an explicit degree");
  }
  throw std::invalid_argument("unknown graph kind");
}

inline ObjectivePtr build_objective(const ObjectiveSpec& spec, int n,
                                    std::uint64_t master_seed) {
  if (spec.kind == "constant") return make_constant(spec.dimension);
  if (spec.kind == "quadratic") {
    Vec center = spec.center;
    if (center.empty()) center.assign(spec.dimension, 0.0);
    return make_noisy_quadratic(spec.dimension, std::move(center),
                                spec.noise_std);
  }
  if (spec.kind == "bounded_nonconvex") {
    return make_bounded_nonconvex(spec.dimension, spec.noise_std);
  }
  if (spec.kind == "noniid_logistic") {
    const std::uint64_t seed = spec.data_seed.value_or(
        RandomStream::derive_seed(master_seed, StreamDomain::objective_data,
                                  1));
    return make_noniid_logistic(n, spec.samples_per_agent, spec.dimension,
                                spec.heterogeneity, seed);
  }
  throw std::invalid_argument("unknown objective kind: " + spec.kind);
}

// ===== run products =====

struct MetricsSnapshot {
  std::int64_t t = 0;
  double gamma = 0.0;
  double grad_norm_sq_at_mu = 0.0;
  double f_at_mu = 0.0;
  std::uint64_t cum_bits = 0;
  std::uint64_t quantize_failures = 0;
  std::vector<std::uint64_t> per_node_steps;
};

struct BoundValues {
  std::optional<double> rate_second_moment;
  std::optional<double> rate_variance;
  std::optional<double> gamma_steady;
  std::optional<double> f0_gap;
  MomentsReport moments;  // estimated constants the bounds were fed
};

struct RunSummary {
  std::uint64_t replica_seed = 0;
  double avg_grad_norm_sq = 0.0;   // mean over the snapshot grid
  std::optional<double> final_f_gap;
  double final_f = 0.0;
  double max_gamma = 0.0;
  double mean_gamma = 0.0;         // time average over the snapshot grid
  std::uint64_t cum_bits = 0;
  std::uint64_t quantize_failures = 0;
  double mean_steps_per_node = 0.0;
  double parallel_time = 0.0;      // T / n
  bool t_ge_n4 = false;
  double wall_time_sec = 0.0;
};

struct AggregateSummary {
  int replicas = 0;
  double avg_grad_norm_sq = 0.0;
  std::optional<double> final_f_gap;
  double max_gamma = 0.0;
  double mean_gamma = 0.0;
  double mean_bits = 0.0;
  double mean_quantize_failures = 0.0;
  double mean_steps_per_node = 0.0;
  double parallel_time = 0.0;
  bool t_ge_n4 = false;
};

struct InteractionEvent {
  int replica = 0;
  std::int64_t t = 0;
  int initiator = 0;
  int partner = 0;
  double eta = 0.0;
  const InteractionResult* result = nullptr;
  const NodeState* initiator_state = nullptr;  // post-interaction
  const NodeState* partner_state = nullptr;
};

struct RunOutput {
  double eta = 0.0;
  std::int64_t cadence = 0;
  double lambda2 = 0.0;
  int degree_r = 0;
  std::optional<QuantizerConfig> quantizer;
  BoundValues bounds;
  std::vector<RunSummary> replicas;
  AggregateSummary aggregate;
};

using SnapshotSink = std::function<void(int replica, const MetricsSnapshot&)>;
using EventObserver = std::function<void(const InteractionEvent&)>;

// ===== engine internals =====

namespace detail {

struct ReplicaStreams {
  RandomStream edges;
  std::vector<RandomStream> gradients;
  std::vector<RandomStream> steps;
  RandomStream quantizer;
};

inline ReplicaStreams make_streams(std::uint64_t replica_master, int n) {
  ReplicaStreams streams{
      RandomStream::substream(replica_master, StreamDomain::edge_sampling, 0),
      {},
      {},
      RandomStream::substream(replica_master, StreamDomain::quantizer, 0)};
  streams.gradients.reserve(n);
  streams.steps.reserve(n);
  for (int i = 0; i < n; ++i) {
    streams.gradients.push_back(
        RandomStream::substream(replica_master, StreamDomain::agent_gradient,
                                static_cast<std::uint64_t>(i)));
    streams.steps.push_back(RandomStream::substream(
        replica_master, StreamDomain::agent_steps,
        static_cast<std::uint64_t>(i)));
  }
  return streams;
}

inline void engine_check(bool ok, const char* what, std::int64_t t) {
  if (!ok) {
    throw std::logic_error(std::string("engine invariant violated: ") + what +
                           " at t=" + std::to_string(t));
  }
}

inline double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

// Post-interaction consistency checks derived from the update rules.
inline void check_interaction(const SimConfig& config, double eta,
                              const InteractionResult& result,
                              const NodeState& a, const NodeState& b,
                              const Vec& start_a, const Vec& start_b,
                              double stale_norm_a, double stale_norm_b,
                              std::int64_t t) {
  const std::size_t d = start_a.size();
  const double scale =
      std::max({1.0, max_abs(a.live_model), max_abs(b.live_model)});
  const double tol = 1e-12 * scale;

  if (config.variant == Variant::blocking) {
    for (std::size_t k = 0; k < d; ++k) {
      engine_check(a.live_model[k] == b.live_model[k],
                   "blocking pair must agree bitwise", t);
      engine_check(a.pending_update[k] == 0.0 && b.pending_update[k] == 0.0,
                   "blocking leaves no pending update", t);
      const double expect_a = 0.5 * ((start_a[k] -
                                      eta * result.h_tilde_initiator[k]) +
                                     result.received_by_initiator[k]);
      engine_check(std::abs(a.live_model[k] - expect_a) <= tol,
                   "blocking update identity", t);
    }
  } else {
    for (std::size_t k = 0; k < d; ++k) {
      const double expect_a =
          0.5 * (start_a[k] + result.received_by_initiator[k]) -
          eta * result.h_tilde_initiator[k];
      const double expect_b =
          0.5 * (start_b[k] + result.received_by_partner[k]) -
          eta * result.h_tilde_partner[k];
      engine_check(std::abs(a.live_model[k] - expect_a) <= tol,
                   "non-blocking update identity (initiator)", t);
      engine_check(std::abs(b.live_model[k] - expect_b) <= tol,
                   "non-blocking update identity (partner)", t);
      engine_check(std::abs(a.comm_copy[k] -
                            (a.live_model[k] - a.pending_update[k])) <= tol,
                   "staleness identity (initiator)", t);
      engine_check(std::abs(b.comm_copy[k] -
                            (b.live_model[k] - b.pending_update[k])) <= tol,
                   "staleness identity (partner)", t);
    }
  }

  // Mean drift: || mu_{t+1} - mu_t || is at most (eta / n) times the
  // batch norms plus half the stale batch norms exchanged this step.
  if (config.variant != Variant::quantized) {
    Vec delta_mu(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      delta_mu[k] = (a.live_model[k] - start_a[k]) +
                    (b.live_model[k] - start_b[k]);
    }
    const double n = static_cast<double>(config.n);
    const double drift = norm(delta_mu) / n;
    double allowed = (eta / n) * (norm(result.h_tilde_initiator) +
                                  norm(result.h_tilde_partner));
    if (config.variant == Variant::nonblocking) {
      allowed += (0.5 / n) * (stale_norm_a + stale_norm_b);
    }
    engine_check(drift <= allowed + tol, "mean drift bound", t);
  }
}

}  // namespace detail

// ===== simulation =====

inline RunOutput run_simulation(const SimConfig& config,
                                const SnapshotSink& sink = {},
                                const EventObserver& observer = {}) {
  if (config.n < 2) throw std::invalid_argument("simulation requires n >= 2");
  if (config.total_t < 1) throw std::invalid_argument("total_t must be >= 1");
  if (config.replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  config.steps.validate();

  const int degree = resolved_degree(config.graph, config.n, config.degree_r);
  const Topology topo =
      build_topology(config.graph, config.n, degree, config.topology_seed);
  const ObjectivePtr objective =
      build_objective(config.objective, config.n, config.master_seed);
  const int d = objective->dimension();
  const double eta = resolved_eta(config);
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  const std::int64_t cadence = resolved_cadence(config);
  if (cadence < 1) throw std::invalid_argument("metrics_every must be >= 1");

  const bool t_ge_n4 =
      horizon_precondition_second_moment(config.total_t, config.n);
  if (!t_ge_n4) {
    std::fprintf(stderr,
                 "warning: total_t=%lld is below n^4=%lld; the rate bounds "
                 "assume T >= n^4\n",
                 static_cast<long long>(config.total_t),
                 static_cast<long long>(config.n) * config.n * config.n *
                     config.n);
  }

  std::vector<Vec> init(config.n, Vec(d, config.initial_fill));
  if (!config.initial_models.empty()) {
    if (static_cast<int>(config.initial_models.size()) != config.n) {
      throw std::invalid_argument("initial_models must list one model per node");
    }
    for (const Vec& x : config.initial_models) {
      if (static_cast<int>(x.size()) != d) {
        throw std::invalid_argument("initial model dimension mismatch");
      }
    }
    init = config.initial_models;
  }

  RunOutput output;
  output.eta = eta;
  output.cadence = cadence;
  output.lambda2 = topo.lambda2;
  output.degree_r = degree;

  // Estimated constants feed both the reported bounds and the
  // quantizer parameter selection.
  const MomentsReport moments = estimate_moments(
      *objective, 8, 256,
      RandomStream::derive_seed(config.master_seed, StreamDomain::moments, 0));
  output.bounds.moments = moments;

  const Vec mu0 = compute_mean_model(init);
  if (objective->meta().f_star.has_value()) {
    output.bounds.f0_gap = objective->value(mu0) - *objective->meta().f_star;
  }
  const double mean_h = config.steps.mean_h;
  output.bounds.gamma_steady = bound_gamma_steady(
      config.n, degree, topo.lambda2, eta, mean_h, moments.m2_hat);
  if (output.bounds.f0_gap.has_value()) {
    if (objective->regime() == Regime::second_moment) {
      output.bounds.rate_second_moment = bound_rate_second_moment(
          *output.bounds.f0_gap, config.total_t, mean_h, moments.l_hat,
          moments.m2_hat, degree, topo.lambda2);
    } else {
      output.bounds.rate_variance = bound_rate_variance(
          *output.bounds.f0_gap, config.total_t, mean_h, moments.l_hat,
          moments.sigma2_hat, moments.rho2_hat.value_or(0.0), degree,
          topo.lambda2);
    }
  }

  std::optional<QuantizerConfig> quantizer;
  if (config.variant == Variant::quantized) {
    QuantizerConfig qc;
    qc.dimension = static_cast<std::uint32_t>(d);
    qc.step = config.quantizer.step.value_or(
        select_quantizer_step(eta, mean_h, moments.m2_hat, d));
    qc.range_cells = config.quantizer.range_cells.value_or(
        select_range_cells(qc.step, *output.bounds.gamma_steady));
    qc.validate();
    quantizer = qc;
  }
  output.quantizer = quantizer;

  for (int replica = 0; replica < config.replicas; ++replica) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t replica_master = RandomStream::derive_seed(
        config.master_seed, StreamDomain::replica,
        static_cast<std::uint64_t>(replica));
    detail::ReplicaStreams streams =
        detail::make_streams(replica_master, config.n);

    std::vector<NodeState> nodes;
    nodes.reserve(config.n);
    for (int i = 0; i < config.n; ++i) nodes.push_back(make_node_state(init[i]));

    RunSummary summary;
    summary.replica_seed = replica_master;
    summary.parallel_time =
        static_cast<double>(config.total_t) / static_cast<double>(config.n);
    summary.t_ge_n4 = t_ge_n4;

    std::uint64_t cum_bits = 0;
    std::uint64_t failures = 0;
    std::int64_t snapshots = 0;
    double grad_sq_sum = 0.0, gamma_sum = 0.0;
    MetricsSnapshot snap;
    snap.per_node_steps.resize(config.n);

    const auto take_snapshot = [&](std::int64_t t) {
      std::vector<Vec> models;
      models.reserve(nodes.size());
      for (const NodeState& node : nodes) models.push_back(node.live_model);
      const Vec mu = compute_mean_model(models);
      Vec grad(d);
      objective->gradient(mu, grad);
      snap.t = t;
      snap.gamma = compute_gamma(models);
      snap.grad_norm_sq_at_mu = norm_sq(grad);
      snap.f_at_mu = objective->value(mu);
      snap.cum_bits = cum_bits;
      snap.quantize_failures = failures;
      for (int i = 0; i < config.n; ++i) {
        snap.per_node_steps[i] = nodes[i].steps_taken;
      }
      grad_sq_sum += snap.grad_norm_sq_at_mu;
      gamma_sum += snap.gamma;
      summary.max_gamma = std::max(summary.max_gamma, snap.gamma);
      ++snapshots;
      if (sink) sink(replica, snap);
      return snap.f_at_mu;
    };

    take_snapshot(0);

    Vec start_a, start_b;
    double final_f = snap.f_at_mu;
    for (std::int64_t t = 1; t <= config.total_t; ++t) {
      const auto [ini, par] = sample_edge(topo, streams.edges);
      NodeState& a = nodes[ini];
      NodeState& b = nodes[par];
      double stale_norm_a = 0.0, stale_norm_b = 0.0;
      if (config.check_invariants) {
        start_a = a.live_model;
        start_b = b.live_model;
        stale_norm_a = norm(a.pending_update) / eta;
        stale_norm_b = norm(b.pending_update) / eta;
      }
      const NodeCtx actx{ini, &streams.gradients[ini], &streams.steps[ini]};
      const NodeCtx bctx{par, &streams.gradients[par], &streams.steps[par]};

      InteractionResult result;
      try {
        switch (config.variant) {
          case Variant::blocking:
            result = interact_blocking(a, b, actx, bctx, config.steps, eta,
                                       *objective, t);
            break;
          case Variant::nonblocking:
            result = interact_nonblocking(a, b, actx, bctx, config.steps, eta,
                                          *objective, t);
            break;
          case Variant::quantized:
            result = interact_quantized(a, b, actx, bctx, config.steps, eta,
                                        *objective, *quantizer,
                                        streams.quantizer, t);
            break;
        }
      } catch (const DivergenceError& err) {
        throw DivergenceError(err.node(),
                              std::string(err.what()) + " at t=" +
                                  std::to_string(t) + " (replica " +
                                  std::to_string(replica) + ")");
      }

      cum_bits += result.bits;
      if (result.quantize_fallback) ++failures;

      if (config.check_invariants) {
        detail::check_interaction(config, eta, result, a, b, start_a, start_b,
                                  stale_norm_a, stale_norm_b, t);
      }
      if (observer) {
        InteractionEvent event;
        event.replica = replica;
        event.t = t;
        event.initiator = ini;
        event.partner = par;
        event.eta = eta;
        event.result = &result;
        event.initiator_state = &a;
        event.partner_state = &b;
        observer(event);
      }
      if (t % cadence == 0 || t == config.total_t) {
        final_f = take_snapshot(t);
      }
    }

    summary.avg_grad_norm_sq = grad_sq_sum / static_cast<double>(snapshots);
    summary.mean_gamma = gamma_sum / static_cast<double>(snapshots);
    summary.final_f = final_f;
    if (objective->meta().f_star.has_value()) {
      summary.final_f_gap = final_f - *objective->meta().f_star;
    }
    summary.cum_bits = cum_bits;
    summary.quantize_failures = failures;
    double steps_total = 0.0;
    for (const NodeState& node : nodes) {
      steps_total += static_cast<double>(node.steps_taken);
    }
    summary.mean_steps_per_node = steps_total / config.n;
    summary.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    output.replicas.push_back(std::move(summary));
  }

  AggregateSummary& agg = output.aggregate;
  agg.replicas = config.replicas;
  agg.t_ge_n4 = t_ge_n4;
  bool all_gaps = true;
  double gap_sum = 0.0;
  for (const RunSummary& r : output.replicas) {
    agg.avg_grad_norm_sq += r.avg_grad_norm_sq;
    agg.max_gamma += r.max_gamma;
    agg.mean_gamma += r.mean_gamma;
    agg.mean_bits += static_cast<double>(r.cum_bits);
    agg.mean_quantize_failures += static_cast<double>(r.quantize_failures);
    agg.mean_steps_per_node += r.mean_steps_per_node;
    agg.parallel_time = r.parallel_time;
    if (r.final_f_gap.has_value()) {
      gap_sum += *r.final_f_gap;
    } else {
      all_gaps = false;
    }
  }
  const double inv = 1.0 / config.replicas;
  agg.avg_grad_norm_sq *= inv;
  agg.max_gamma *= inv;
  agg.mean_gamma *= inv;
  agg.mean_bits *= inv;
  agg.mean_quantize_failures *= inv;
  agg.mean_steps_per_node *= inv;
  if (all_gaps) agg.final_f_gap = gap_sum * inv;
  return output;
}

// ===== bound verification =====

struct BoundCheckEntry {
  std::string bound;
  double bound_value = 0.0;
  double empirical_mean = 0.0;
  int seed_violations = 0;
  int replicas = 0;
  bool pass = false;
};

struct BoundCheckReport {
  std::vector<BoundCheckEntry> entries;
  bool t_ge_n4 = false;
};

// Compares each evaluated bound against its empirical counterpart,
// aggregated across replicas by arithmetic mean. A bound passes when
// the mean respects it and at most one replica exceeds it.
inline BoundCheckReport bound_check(const RunOutput& output) {
  BoundCheckReport report;
  report.t_ge_n4 = output.aggregate.t_ge_n4;
  const int replicas = static_cast<int>(output.replicas.size());

  if (output.bounds.gamma_steady.has_value()) {
    BoundCheckEntry entry;
    entry.bound = "gamma_steady";
    entry.bound_value = *output.bounds.gamma_steady;
    entry.empirical_mean = output.aggregate.mean_gamma;
    entry.replicas = replicas;
    for (const RunSummary& r : output.replicas) {
      if (r.mean_gamma > entry.bound_value) ++entry.seed_violations;
    }
    entry.pass = entry.empirical_mean <= entry.bound_value &&
                 entry.seed_violations <= 1;
    report.entries.push_back(std::move(entry));
  }

  const std::optional<double>& rate =
      output.bounds.rate_second_moment.has_value()
          ? output.bounds.rate_second_moment
          : output.bounds.rate_variance;
  if (rate.has_value()) {
    BoundCheckEntry entry;
    entry.bound = output.bounds.rate_second_moment.has_value()
                      ? "rate_second_moment"
                      : "rate_variance";
    entry.bound_value = *rate;
    entry.empirical_mean = output.aggregate.avg_grad_norm_sq;
    entry.replicas = replicas;
    for (const RunSummary& r : output.replicas) {
      if (r.avg_grad_norm_sq > entry.bound_value) ++entry.seed_violations;
    }
    entry.pass = entry.empirical_mean <= entry.bound_value &&
                 entry.seed_violations <= 1;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace swarm
