// Command implementations behind the swarm binary. Each command is an
// ordinary function returning a process exit code so tests can drive
// it in-process: 0 success, 1 configuration error, 2 divergence abort.
//
// Output layout: <out>/<name>/<master_seed>/metrics.jsonl (one
// metrics-r<k>.jsonl per replica when replicas > 1) plus summary.json.
// <out> comes from --out, then $SWARM_OUT_DIR, then ./out.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "swarm/config.hpp"
#include "swarm/engine.hpp"

namespace swarm::cli {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<long long> seed;
  std::string out_dir;  // empty: fall back to $SWARM_OUT_DIR, then ./out
};

inline std::filesystem::path resolve_out_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SWARM_OUT_DIR"); env && *env) return env;
  return "out";
}

inline json load_effective_config(const CommonArgs& args) {
  json doc = load_json_file(args.config_path);
  for (const std::string& assignment : args.overrides) {
    apply_override(doc, assignment);
  }
  if (args.seed.has_value()) doc["master_seed"] = *args.seed;
  return doc;
}

namespace detail {

inline int report_error(const std::exception& err, int code,
                        std::ostream& errs) {
  errs << "error: " << err.what() << "\n";
  return code;
}

struct RunProducts {
  RunOutput output;
  std::filesystem::path run_dir;
};

// Parses, runs, and writes metrics + summary for a single experiment
// document. Metrics lines stream to disk as they are produced so an
// aborted run leaves its partial trace behind. Sweeps nest their run
// directories one level deeper via run_subdir.
inline RunProducts execute_run(
    const json& doc, const std::filesystem::path& out_root,
    const std::optional<std::filesystem::path>& run_subdir = std::nullopt) {
  const SimConfig config = parse_sim_config(doc);
  const std::filesystem::path run_dir = out_root /
                                        run_subdir.value_or(config.name) /
                                        std::to_string(config.master_seed);
  std::filesystem::create_directories(run_dir);

  std::vector<std::unique_ptr<std::ofstream>> streams;
  for (int k = 0; k < config.replicas; ++k) {
    std::string filename = "metrics.jsonl";
    if (config.replicas > 1) {
      char buffer[32];
      std::snprintf(buffer, sizeof buffer, "metrics-r%03d.jsonl", k);
      filename = buffer;
    }
    auto stream = std::make_unique<std::ofstream>(run_dir / filename,
                                                  std::ios::trunc);
    if (!*stream) {
      throw ConfigError("cannot open metrics file under " + run_dir.string());
    }
    streams.push_back(std::move(stream));
  }

  RunProducts products;
  products.run_dir = run_dir;
  products.output = run_simulation(
      config, [&](int replica, const MetricsSnapshot& snap) {
        *streams[replica] << snapshot_json(snap).dump() << "\n";
      });

  std::ofstream summary(run_dir / "summary.json", std::ios::trunc);
  summary << summary_json(products.output, false).dump(2) << "\n";
  return products;
}

}  // namespace detail

// ===== run =====

inline int cmd_run(const CommonArgs& args, std::ostream& out = std::cout,
                   std::ostream& errs = std::cerr) {
  try {
    const json doc = load_effective_config(args);
    const auto products =
        detail::execute_run(doc, resolve_out_root(args.out_dir));
    out << summary_json(products.output, true).dump(2) << "\n";
    return 0;
  } catch (const DivergenceError& err) {
    return detail::report_error(err, 2, errs);
  } catch (const std::exception& err) {
    return detail::report_error(err, 1, errs);
  }
}

// ===== sweep =====

struct SweepArgs {
  CommonArgs base;
  std::string axis;  // T | H | n | eta | variant
  std::vector<std::string> values;
  int jobs = 1;
};

namespace detail {

inline json apply_axis(json doc, const std::string& axis,
                       const std::string& value) {
  try {
    if (axis == "T") {
      doc["total_t"] = std::stoll(value);
    } else if (axis == "H") {
      doc["steps"]["mean_h"] = std::stod(value);
    } else if (axis == "n") {
      doc["n"] = std::stoi(value);
      // Family-defined degrees track n; an explicit random_regular
      // degree is kept.
      if (doc.contains("topology") && doc["topology"].contains("r") &&
          doc["topology"]["kind"] != "random_regular") {
        doc["topology"].erase("r");
      }
    } else if (axis == "eta") {
      doc["eta"] = std::stod(value);
    } else if (axis == "variant") {
      doc["variant"] = value;
    } else {
      throw ConfigError("sweep axis must be one of T, H, n, eta, variant");
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("cannot parse sweep value \"" + value + "\" for axis " +
                      axis);
  } catch (const std::out_of_range&) {
    throw ConfigError("sweep value \"" + value + "\" out of range");
  }
  return doc;
}

inline std::string csv_number(double v) { return json(v).dump(); }

inline std::string sweep_row(const std::string& axis, const std::string& value,
                             const RunOutput& output) {
  const std::optional<double>& rate =
      output.bounds.rate_second_moment.has_value()
          ? output.bounds.rate_second_moment
          : output.bounds.rate_variance;
  std::ostringstream row;
  row << axis << ',' << value << ','
      << csv_number(output.aggregate.avg_grad_norm_sq) << ','
      << csv_number(output.aggregate.mean_gamma) << ','
      << (output.aggregate.final_f_gap.has_value()
              ? csv_number(*output.aggregate.final_f_gap)
              : std::string())
      << ',' << csv_number(output.aggregate.mean_bits) << ','
      << (rate.has_value() ? csv_number(*rate) : std::string()) << ','
      << (output.bounds.gamma_steady.has_value()
              ? csv_number(*output.bounds.gamma_steady)
              : std::string())
      << ',' << output.aggregate.replicas;
  return row.str();
}

}  // namespace detail

inline constexpr const char* kSweepCsvHeader =
    "axis,value,avg_grad_norm_sq,mean_gamma,final_f_gap,mean_bits,bound_rate,"
    "bound_gamma,replicas";

// Runs one configuration per value of the chosen axis, up to --jobs
// points concurrently, and appends one CSV row per completed point in
// axis order. Completed batches are flushed even when a later point
// fails.
inline int cmd_sweep(const SweepArgs& args, std::ostream& out = std::cout,
                     std::ostream& errs = std::cerr) {
  try {
    if (args.values.empty()) throw ConfigError("sweep needs at least one value");
    if (args.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const json base = load_effective_config(args.base);
    const SimConfig base_config = parse_sim_config(base);  // early validation
    const std::filesystem::path out_root = resolve_out_root(args.base.out_dir);
    const std::filesystem::path sweep_dir = out_root / base_config.name;
    std::filesystem::create_directories(sweep_dir);
    const std::filesystem::path csv_path =
        sweep_dir / ("sweep-" + args.axis + ".csv");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw ConfigError("cannot open " + csv_path.string());
    csv << kSweepCsvHeader << "\n";
    csv.flush();

    const int points = static_cast<int>(args.values.size());
    std::vector<std::string> rows(points);
    std::vector<std::exception_ptr> failures(points);

    for (int batch = 0; batch < points; batch += args.jobs) {
      const int end = std::min(points, batch + args.jobs);
      std::vector<std::thread> workers;
      for (int index = batch; index < end; ++index) {
        workers.emplace_back([&, index] {
          try {
            const json doc =
                detail::apply_axis(base, args.axis, args.values[index]);
            const std::filesystem::path subdir =
                std::filesystem::path(base_config.name) /
                (args.axis + "=" + args.values[index]);
            const auto products = detail::execute_run(doc, out_root, subdir);
            rows[index] =
                detail::sweep_row(args.axis, args.values[index],
                                  products.output);
          } catch (...) {
            failures[index] = std::current_exception();
          }
        });
      }
      for (std::thread& worker : workers) worker.join();
      for (int index = batch; index < end; ++index) {
        if (failures[index]) std::rethrow_exception(failures[index]);
        csv << rows[index] << "\n";
        csv.flush();
      }
    }
    out << "wrote " << csv_path.string() << "\n";
    return 0;
  } catch (const DivergenceError& err) {
    return detail::report_error(err, 2, errs);
  } catch (const std::exception& err) {
    return detail::report_error(err, 1, errs);
  }
}

// ===== bound =====

struct BoundArgs {
  std::string form;  // second-moment | variance | gamma
  std::optional<double> f0_gap;
  std::optional<long long> total_t;
  std::optional<double> mean_h;
  std::optional<double> smoothness;
  std::optional<double> m2;
  std::optional<double> sigma2;
  std::optional<double> rho2;
  std::optional<long long> n;
  std::optional<long long> r;
  std::optional<double> lambda2;
  std::optional<double> eta;
};

namespace detail {

inline double require_arg(const std::optional<double>& value,
                          const char* flag) {
  if (!value.has_value()) {
    throw ConfigError(std::string("bound form needs ") + flag);
  }
  return *value;
}

inline long long require_arg(const std::optional<long long>& value,
                             const char* flag) {
  if (!value.has_value()) {
    throw ConfigError(std::string("bound form needs ") + flag);
  }
  return *value;
}

}  // namespace detail

inline int cmd_bound(const BoundArgs& args, std::ostream& out = std::cout,
                     std::ostream& errs = std::cerr) {
  try {
    json result;
    result["form"] = args.form;
    json preconditions{{"t_ge_n4", nullptr}, {"variance_min_t", nullptr}};
    if (args.form == "second-moment") {
      const long long t = detail::require_arg(args.total_t, "--t");
      const double mean_h = detail::require_arg(args.mean_h, "--mean-h");
      const double l = detail::require_arg(args.smoothness, "--l");
      const int r = static_cast<int>(detail::require_arg(args.r, "--r"));
      const double lambda2 = detail::require_arg(args.lambda2, "--lambda2");
      result["value"] = bound_rate_second_moment(
          detail::require_arg(args.f0_gap, "--f0-gap"), t, mean_h, l,
          detail::require_arg(args.m2, "--m2"), r, lambda2);
      if (args.n.has_value()) {
        preconditions["t_ge_n4"] = horizon_precondition_second_moment(
            t, static_cast<int>(*args.n));
      }
    } else if (args.form == "variance") {
      const long long t = detail::require_arg(args.total_t, "--t");
      const double mean_h = detail::require_arg(args.mean_h, "--mean-h");
      const double l = detail::require_arg(args.smoothness, "--l");
      const int r = static_cast<int>(detail::require_arg(args.r, "--r"));
      const double lambda2 = detail::require_arg(args.lambda2, "--lambda2");
      result["value"] = bound_rate_variance(
          detail::require_arg(args.f0_gap, "--f0-gap"), t, mean_h, l,
          detail::require_arg(args.sigma2, "--sigma2"),
          detail::require_arg(args.rho2, "--rho2"), r, lambda2);
      if (args.n.has_value()) {
        const double min_t = horizon_threshold_variance(
            static_cast<int>(*args.n), mean_h, l, r, lambda2);
        preconditions["variance_min_t"] = min_t;
        preconditions["t_ge_n4"] = static_cast<double>(t) >= min_t;
      }
    } else if (args.form == "gamma") {
      result["value"] = bound_gamma_steady(
          static_cast<int>(detail::require_arg(args.n, "--n")),
          static_cast<int>(detail::require_arg(args.r, "--r")),
          detail::require_arg(args.lambda2, "--lambda2"),
          detail::require_arg(args.eta, "--eta"),
          detail::require_arg(args.mean_h, "--mean-h"),
          detail::require_arg(args.m2, "--m2"));
    } else {
      throw ConfigError(
          "--form must be second-moment, variance, or gamma");
    }
    result["preconditions"] = preconditions;
    out << result.dump(2) << "\n";
    return 0;
  } catch (const std::exception& err) {
    return detail::report_error(err, 1, errs);
  }
}

// ===== graph-info =====

struct GraphInfoArgs {
  std::string kind;
  int n = 0;
  std::optional<int> r;
  long long seed = 0;
};

inline int cmd_graph_info(const GraphInfoArgs& args,
                          std::ostream& out = std::cout,
                          std::ostream& errs = std::cerr) {
  try {
    const GraphKind kind = graph_kind_from_string(args.kind);
    const int degree = resolved_degree(kind, args.n, args.r);
    const Topology topo = build_topology(kind, args.n, degree,
                                         static_cast<std::uint64_t>(args.seed));
    out << json{{"kind", to_string(topo.kind)},
                {"n", topo.n},
                {"r", topo.degree_r},
                {"edges", topo.edge_count()},
                {"lambda2", topo.lambda2}}
               .dump(2)
        << "\n";
    return 0;
  } catch (const std::exception& err) {
    return detail::report_error(err, 1, errs);
  }
}

// ===== moments =====

struct MomentsArgs {
  CommonArgs base;
  int probe_points = 16;
  int draws_per_point = 1000;
  std::optional<long long> moments_seed;
  bool require_rho2 = false;
};

inline int cmd_moments(const MomentsArgs& args, std::ostream& out = std::cout,
                       std::ostream& errs = std::cerr) {
  try {
    const json doc = load_effective_config(args.base);
    const SimConfig config = parse_sim_config(doc);
    const ObjectivePtr objective =
        build_objective(config.objective, config.n, config.master_seed);
    const std::uint64_t seed =
        args.moments_seed.has_value()
            ? static_cast<std::uint64_t>(*args.moments_seed)
            : RandomStream::derive_seed(config.master_seed,
                                        StreamDomain::moments, 0);
    const MomentsReport report = estimate_moments(
        *objective, args.probe_points, args.draws_per_point, seed,
        args.require_rho2 ? std::optional<bool>(true) : std::nullopt);
    json result = moments_json(report);
    result["regime"] = to_string(objective->regime());
    out << result.dump(2) << "\n";
    return 0;
  } catch (const std::exception& err) {
    return detail::report_error(err, 1, errs);
  }
}

}  // namespace swarm::cli
