// Experiment file schema (versioned JSON), dotted-path overrides, and
// serialization of run products. Unknown keys are rejected so a typo
// in a config fails loudly instead of silently using a default.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "swarm/engine.hpp"

namespace swarm {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kConfigSchemaVersion = 1;

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed,
                       const std::set<std::string>& required) {
  if (!obj.is_object()) {
    throw ConfigError(where + " must be a JSON object");
  }
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
    }
  }
  for (const std::string& key : required) {
    if (!obj.contains(key) || obj.at(key).is_null()) {
      throw ConfigError("missing required key \"" + key + "\" in " + where);
    }
  }
}

inline double get_number(const json& obj, const std::string& key,
                         const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError("key \"" + key + "\" in " + where + " must be a number");
  }
  return v.get<double>();
}

inline std::int64_t get_integer(const json& obj, const std::string& key,
                                const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError("key \"" + key + "\" in " + where +
                      " must be an integer");
  }
  return v.get<std::int64_t>();
}

inline std::string get_string(const json& obj, const std::string& key,
                              const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw ConfigError("key \"" + key + "\" in " + where + " must be a string");
  }
  return v.get<std::string>();
}

inline bool present(const json& obj, const std::string& key) {
  return obj.contains(key) && !obj.at(key).is_null();
}

}  // namespace detail

// ===== experiment file parsing =====

inline ObjectiveSpec parse_objective_spec(const json& obj) {
  using detail::present;
  const std::string where = "objective";
  if (!obj.is_object() || !detail::present(obj, "kind")) {
    throw ConfigError("objective requires a \"kind\"");
  }
  ObjectiveSpec spec;
  spec.kind = detail::get_string(obj, "kind", where);
  if (spec.kind == "constant") {
    detail::check_keys(obj, where, {"kind", "dimension"}, {"dimension"});
  } else if (spec.kind == "quadratic") {
    detail::check_keys(obj, where, {"kind", "dimension", "center", "noise_std"},
                       {"dimension"});
  } else if (spec.kind == "bounded_nonconvex") {
    detail::check_keys(obj, where, {"kind", "dimension", "noise_std"},
                       {"dimension"});
    spec.noise_std = 0.1;
  } else if (spec.kind == "noniid_logistic") {
    detail::check_keys(
        obj, where,
        {"kind", "dimension", "samples_per_agent", "heterogeneity", "seed"},
        {"dimension", "samples_per_agent", "heterogeneity"});
    spec.samples_per_agent = static_cast<int>(
        detail::get_integer(obj, "samples_per_agent", where));
    spec.heterogeneity = detail::get_number(obj, "heterogeneity", where);
    if (present(obj, "seed")) {
      spec.data_seed =
          static_cast<std::uint64_t>(detail::get_integer(obj, "seed", where));
    }
  } else {
    throw ConfigError("unknown objective kind: " + spec.kind);
  }
  spec.dimension =
      static_cast<int>(detail::get_integer(obj, "dimension", where));
  if (spec.dimension < 1) throw ConfigError("objective dimension must be >= 1");
  if (present(obj, "noise_std")) {
    spec.noise_std = detail::get_number(obj, "noise_std", where);
  }
  if (present(obj, "center")) {
    const json& c = obj.at("center");
    if (c.is_number()) {
      spec.center.assign(spec.dimension, c.get<double>());
    } else if (c.is_array()) {
      spec.center = c.get<Vec>();
      if (static_cast<int>(spec.center.size()) != spec.dimension) {
        throw ConfigError("objective center length must match dimension");
      }
    } else {
      throw ConfigError("objective center must be a number or an array");
    }
  }
  return spec;
}

inline SimConfig parse_sim_config(const json& doc) {
  detail::check_keys(
      doc, "experiment file",
      {"schema_version", "name", "n", "total_t", "eta", "steps", "variant",
       "topology", "objective", "quantizer", "master_seed", "metrics_every",
       "replicas", "initial_fill", "initial_models", "check_invariants"},
      {"schema_version", "name", "n", "total_t", "steps", "variant",
       "topology", "objective"});

  const std::int64_t version =
      detail::get_integer(doc, "schema_version", "experiment file");
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) +
                      " (expected " + std::to_string(kConfigSchemaVersion) +
                      ")");
  }

  SimConfig config;
  config.name = detail::get_string(doc, "name", "experiment file");
  if (config.name.empty() ||
      config.name.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("experiment name must be a non-empty path component");
  }
  config.n =
      static_cast<int>(detail::get_integer(doc, "n", "experiment file"));
  config.total_t = detail::get_integer(doc, "total_t", "experiment file");
  if (detail::present(doc, "eta")) {
    config.eta = detail::get_number(doc, "eta", "experiment file");
  }

  const json& steps = doc.at("steps");
  detail::check_keys(steps, "steps", {"kind", "mean_h"}, {"kind", "mean_h"});
  const std::string step_kind = detail::get_string(steps, "kind", "steps");
  if (step_kind == "fixed") {
    config.steps.kind = StepKind::fixed;
  } else if (step_kind == "geometric") {
    config.steps.kind = StepKind::geometric;
  } else {
    throw ConfigError("steps.kind must be \"fixed\" or \"geometric\"");
  }
  config.steps.mean_h = detail::get_number(steps, "mean_h", "steps");

  config.variant =
      variant_from_string(detail::get_string(doc, "variant", "experiment file"));

  const json& topo = doc.at("topology");
  detail::check_keys(topo, "topology", {"kind", "r", "seed"}, {"kind"});
  config.graph = graph_kind_from_string(
      detail::get_string(topo, "kind", "topology"));
  if (detail::present(topo, "r")) {
    config.degree_r =
        static_cast<int>(detail::get_integer(topo, "r", "topology"));
  }
  if (detail::present(topo, "seed")) {
    config.topology_seed =
        static_cast<std::uint64_t>(detail::get_integer(topo, "seed", "topology"));
  }

  config.objective = parse_objective_spec(doc.at("objective"));

  if (detail::present(doc, "quantizer")) {
    const json& q = doc.at("quantizer");
    detail::check_keys(q, "quantizer", {"step", "range_cells"}, {});
    if (detail::present(q, "step") && !q.at("step").is_string()) {
      config.quantizer.step = detail::get_number(q, "step", "quantizer");
    } else if (detail::present(q, "step") &&
               q.at("step").get<std::string>() != "auto") {
      throw ConfigError("quantizer.step must be a number or \"auto\"");
    }
    if (detail::present(q, "range_cells") && !q.at("range_cells").is_string()) {
      config.quantizer.range_cells = static_cast<std::uint32_t>(
          detail::get_integer(q, "range_cells", "quantizer"));
    } else if (detail::present(q, "range_cells") &&
               q.at("range_cells").get<std::string>() != "auto") {
      throw ConfigError("quantizer.range_cells must be an integer or \"auto\"");
    }
  }

  if (detail::present(doc, "master_seed")) {
    config.master_seed = static_cast<std::uint64_t>(
        detail::get_integer(doc, "master_seed", "experiment file"));
  }
  if (detail::present(doc, "metrics_every")) {
    config.metrics_every =
        detail::get_integer(doc, "metrics_every", "experiment file");
  }
  if (detail::present(doc, "replicas")) {
    config.replicas = static_cast<int>(
        detail::get_integer(doc, "replicas", "experiment file"));
  }
  if (detail::present(doc, "initial_fill")) {
    config.initial_fill =
        detail::get_number(doc, "initial_fill", "experiment file");
  }
  if (detail::present(doc, "initial_models")) {
    const json& models = doc.at("initial_models");
    if (!models.is_array()) {
      throw ConfigError("initial_models must be an array of arrays");
    }
    for (const json& row : models) {
      if (!row.is_array()) {
        throw ConfigError("initial_models must be an array of arrays");
      }
      config.initial_models.push_back(row.get<Vec>());
    }
  }
  if (detail::present(doc, "check_invariants")) {
    const json& v = doc.at("check_invariants");
    if (!v.is_boolean()) throw ConfigError("check_invariants must be boolean");
    config.check_invariants = v.get<bool>();
  }
  return config;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& err) {
    throw ConfigError("config parse error in " + path + ": " + err.what());
  }
  return doc;
}

// Applies "dotted.path=value" onto a JSON document. The value is
// parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got \"" +
                      assignment + "\"");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }

  json* cursor = &doc;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(
        begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) throw ConfigError("override path has an empty segment");
    if (dot == std::string::npos) {
      (*cursor)[key] = value;
      return;
    }
    if (!cursor->contains(key) || !(*cursor)[key].is_object()) {
      (*cursor)[key] = json::object();
    }
    cursor = &(*cursor)[key];
    begin = dot + 1;
  }
}

// ===== output serialization =====

inline json snapshot_json(const MetricsSnapshot& snap) {
  return json{{"t", snap.t},
              {"gamma", snap.gamma},
              {"grad_norm_sq_at_mu", snap.grad_norm_sq_at_mu},
              {"f_at_mu", snap.f_at_mu},
              {"cum_bits", snap.cum_bits},
              {"quantize_failures", snap.quantize_failures},
              {"per_node_steps", snap.per_node_steps}};
}

inline json moments_json(const MomentsReport& report) {
  json out{{"M2_hat", report.m2_hat},
           {"M2_se", report.m2_se},
           {"sigma2_hat", report.sigma2_hat},
           {"sigma2_se", report.sigma2_se},
           {"L_hat", report.l_hat},
           {"probe_points", report.probe_points},
           {"draws_per_point", report.draws_per_point}};
  out["rho2_hat"] =
      report.rho2_hat.has_value() ? json(*report.rho2_hat) : json(nullptr);
  return out;
}

inline json replica_summary_json(const RunSummary& summary,
                                 bool include_wall_time) {
  json out{{"replica_seed", summary.replica_seed},
           {"avg_grad_norm_sq", summary.avg_grad_norm_sq},
           {"final_f", summary.final_f},
           {"max_gamma", summary.max_gamma},
           {"mean_gamma", summary.mean_gamma},
           {"cum_bits", summary.cum_bits},
           {"quantize_failures", summary.quantize_failures},
           {"mean_steps_per_node", summary.mean_steps_per_node},
           {"parallel_time", summary.parallel_time},
           {"t_ge_n4", summary.t_ge_n4}};
  out["final_f_gap"] = summary.final_f_gap.has_value()
                           ? json(*summary.final_f_gap)
                           : json(nullptr);
  if (include_wall_time) out["wall_time_sec"] = summary.wall_time_sec;
  return out;
}

// Wall-clock time is reported on standard output only; the summary
// written to disk stays byte-identical across repeated runs.
inline json summary_json(const RunOutput& output, bool include_wall_time) {
  json bounds;
  bounds["rate_second_moment"] = output.bounds.rate_second_moment.has_value()
                                     ? json(*output.bounds.rate_second_moment)
                                     : json(nullptr);
  bounds["rate_variance"] = output.bounds.rate_variance.has_value()
                                ? json(*output.bounds.rate_variance)
                                : json(nullptr);
  bounds["gamma_steady"] = output.bounds.gamma_steady.has_value()
                               ? json(*output.bounds.gamma_steady)
                               : json(nullptr);
  bounds["f0_gap"] = output.bounds.f0_gap.has_value()
                         ? json(*output.bounds.f0_gap)
                         : json(nullptr);
  bounds["moments"] = moments_json(output.bounds.moments);

  json aggregate{{"replicas", output.aggregate.replicas},
                 {"avg_grad_norm_sq", output.aggregate.avg_grad_norm_sq},
                 {"max_gamma", output.aggregate.max_gamma},
                 {"mean_gamma", output.aggregate.mean_gamma},
                 {"mean_bits", output.aggregate.mean_bits},
                 {"mean_quantize_failures",
                  output.aggregate.mean_quantize_failures},
                 {"mean_steps_per_node", output.aggregate.mean_steps_per_node},
                 {"parallel_time", output.aggregate.parallel_time},
                 {"t_ge_n4", output.aggregate.t_ge_n4}};
  aggregate["final_f_gap"] = output.aggregate.final_f_gap.has_value()
                                 ? json(*output.aggregate.final_f_gap)
                                 : json(nullptr);

  json quantizer(nullptr);
  if (output.quantizer.has_value()) {
    quantizer = json{{"step", output.quantizer->step},
                     {"range_cells", output.quantizer->range_cells},
                     {"dimension", output.quantizer->dimension}};
  }

  json replicas = json::array();
  for (const RunSummary& r : output.replicas) {
    replicas.push_back(replica_summary_json(r, include_wall_time));
  }

  return json{{"schema_version", kConfigSchemaVersion},
              {"eta", output.eta},
              {"cadence", output.cadence},
              {"lambda2", output.lambda2},
              {"degree_r", output.degree_r},
              {"quantizer", quantizer},
              {"bounds", bounds},
              {"aggregate", aggregate},
              {"replicas", replicas}};
}

inline json bound_check_json(const BoundCheckReport& report) {
  json entries = json::array();
  for (const BoundCheckEntry& e : report.entries) {
    entries.push_back(json{{"bound", e.bound},
                           {"bound_value", e.bound_value},
                           {"empirical_mean", e.empirical_mean},
                           {"seed_violations", e.seed_violations},
                           {"replicas", e.replicas},
                           {"pass", e.pass}});
  }
  return json{{"entries", entries}, {"t_ge_n4", report.t_ge_n4}};
}

}  // namespace swarm
