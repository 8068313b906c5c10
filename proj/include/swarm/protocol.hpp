// Pairwise interaction protocol: local SGD batches plus blocking,
// non-blocking, and quantized averaging rules.
//
// Local steps are materialised lazily at interaction time. For the
// non-blocking rule each node keeps, besides its live model X, the
// communicated copy X' = X + eta * h~ that peers average against; the
// identity comm_copy - live_model = -pending_update holds exactly
// after every interaction.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarm/objective.hpp"
#include "swarm/quantizer.hpp"
#include "swarm/random.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {

constexpr double kDivergenceLimit = 1e12;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int node, const std::string& what)
      : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_ = 0;
};

inline void check_model_in_range(int node, std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) {
      throw DivergenceError(
          node, "model diverged at node " + std::to_string(node) +
                    " (coordinate non-finite or beyond 1e12)");
    }
  }
}

// ===== node state =====

struct NodeState {
  Vec live_model;
  Vec comm_copy;                    // what peers read; X' = live - pending
  std::int64_t last_interaction = 0;
  Vec pending_update;               // -eta * h~ of the most recent batch
  std::uint64_t steps_taken = 0;
};

inline NodeState make_node_state(Vec initial) {
  NodeState state;
  state.comm_copy = initial;
  state.pending_update.assign(initial.size(), 0.0);
  state.live_model = std::move(initial);
  return state;
}

// ===== local step counts =====

enum class StepKind { fixed, geometric };

struct LocalStepPolicy {
  StepKind kind = StepKind::fixed;
  double mean_h = 1.0;

  void validate() const {
    if (mean_h < 1.0) {
      throw std::invalid_argument("step policy mean must be >= 1");
    }
    if (kind == StepKind::fixed &&
        mean_h != std::floor(mean_h)) {
      throw std::invalid_argument("fixed step policy needs an integer count");
    }
  }
};

// Geometric draws take support {1, 2, ...} with mean H via inverse-CDF
// on one uniform variate.
inline int sample_local_count(const LocalStepPolicy& policy,
                              RandomStream& rng) {
  policy.validate();
  if (policy.kind == StepKind::fixed) {
    return static_cast<int>(policy.mean_h);
  }
  const double p = 1.0 / policy.mean_h;
  if (p >= 1.0) return 1;
  const double u = rng.uniform01();
  const double draw = std::floor(std::log1p(-u) / std::log1p(-p)) + 1.0;
  return draw < 1.0 ? 1 : static_cast<int>(draw);
}

// ===== local step batch =====

struct LocalUpdate {
  Vec h_tilde_sum;   // sum of the batch's stochastic gradients
  int steps_h = 0;
  Vec final_model;   // start - eta * h_tilde_sum, up to rounding
};

// Runs `count` chained stochastic gradient steps from `start`:
//   h^q = g~(x - eta * sum_{s<q} h^s),  x <- x - eta * h^q.
inline LocalUpdate local_steps(std::span<const double> start, int count,
                               double eta, int agent, const Objective& obj,
                               RandomStream& grad_rng) {
  if (count < 0) throw std::invalid_argument("step count must be >= 0");
  LocalUpdate update;
  update.steps_h = count;
  update.final_model.assign(start.begin(), start.end());
  update.h_tilde_sum.assign(start.size(), 0.0);
  Vec grad(start.size());
  for (int q = 0; q < count; ++q) {
    obj.stochastic_gradient(agent, update.final_model, grad, grad_rng);
    axpy(1.0, grad, update.h_tilde_sum);
    axpy(-eta, grad, update.final_model);
    check_model_in_range(agent, update.final_model);
  }
  return update;
}

// ===== interactions =====

struct NodeCtx {
  int agent = 0;
  RandomStream* gradients = nullptr;
  RandomStream* steps = nullptr;
};

// Per-direction transport accounting: a 64-bit payload header plus a
// 32-bit routing frame, then the payload itself (raw f64 coordinates or
// packed residues).
constexpr std::uint64_t kFrameBits = 32;

inline std::uint64_t raw_transfer_bits(int dimension) {
  return 64 + kFrameBits + 64ull * static_cast<std::uint64_t>(dimension);
}

inline std::uint64_t quantized_transfer_bits(const QuantizedMessage& msg) {
  return msg.bit_cost() + kFrameBits;
}

struct InteractionResult {
  int h_initiator = 0;
  int h_partner = 0;
  Vec h_tilde_initiator;
  Vec h_tilde_partner;
  Vec received_by_initiator;  // model copy the initiator averaged with
  Vec received_by_partner;
  std::uint64_t bits = 0;
  bool quantize_fallback = false;
};

namespace detail {

inline void require_same_dim(const NodeState& a, const NodeState& b) {
  if (a.live_model.size() != b.live_model.size()) {
    throw std::invalid_argument("interacting nodes disagree on dimension");
  }
}

}  // namespace detail

// Blocking rule: both nodes run their local batches, then adopt the
// exact average of the two results. The initiator's draws come first;
// comm copies simply mirror the live models.
inline InteractionResult interact_blocking(NodeState& initiator,
                                           NodeState& partner,
                                           const NodeCtx& ictx,
                                           const NodeCtx& pctx,
                                           const LocalStepPolicy& policy,
                                           double eta, const Objective& obj,
                                           std::int64_t t) {
  detail::require_same_dim(initiator, partner);
  InteractionResult result;
  result.h_initiator = sample_local_count(policy, *ictx.steps);
  result.h_partner = sample_local_count(policy, *pctx.steps);
  LocalUpdate up_i = local_steps(initiator.live_model, result.h_initiator, eta,
                                 ictx.agent, obj, *ictx.gradients);
  LocalUpdate up_j = local_steps(partner.live_model, result.h_partner, eta,
                                 pctx.agent, obj, *pctx.gradients);

  const Vec merged = average(up_i.final_model, up_j.final_model);
  check_model_in_range(ictx.agent, merged);

  initiator.live_model = merged;
  partner.live_model = merged;
  initiator.comm_copy = merged;
  partner.comm_copy = merged;
  fill(initiator.pending_update, 0.0);
  fill(partner.pending_update, 0.0);
  initiator.last_interaction = t;
  partner.last_interaction = t;
  initiator.steps_taken += static_cast<std::uint64_t>(result.h_initiator);
  partner.steps_taken += static_cast<std::uint64_t>(result.h_partner);

  result.received_by_initiator = std::move(up_j.final_model);
  result.received_by_partner = std::move(up_i.final_model);
  result.h_tilde_initiator = std::move(up_i.h_tilde_sum);
  result.h_tilde_partner = std::move(up_j.h_tilde_sum);
  result.bits = 2 * raw_transfer_bits(static_cast<int>(merged.size()));
  return result;
}

namespace detail {

// Shared tail of the non-blocking and quantized rules. Each node
// averages its pre-batch model S with the copy it received, then
// re-applies its own fresh batch:
//   live <- (S + received) / 2 - eta * h~,
//   comm <- (S + received) / 2,   pending <- -eta * h~.
inline void apply_nonblocking_update(NodeState& node, const Vec& received,
                                     const LocalUpdate& update, int agent,
                                     std::int64_t t) {
  const std::size_t d = node.live_model.size();
  for (std::size_t k = 0; k < d; ++k) {
    const double half = 0.5 * (node.live_model[k] + received[k]);
    const double pending = update.final_model[k] - node.live_model[k];
    node.comm_copy[k] = half;
    node.pending_update[k] = pending;
    node.live_model[k] = half + pending;
  }
  node.last_interaction = t;
  node.steps_taken += static_cast<std::uint64_t>(update.steps_h);
  check_model_in_range(agent, node.live_model);
}

}  // namespace detail

// Non-blocking rule: both nodes exchange the stale comm copies
// published at their previous interactions (worst-case staleness on
// both sides), average against them, and republish.
inline InteractionResult interact_nonblocking(NodeState& initiator,
                                              NodeState& partner,
                                              const NodeCtx& ictx,
                                              const NodeCtx& pctx,
                                              const LocalStepPolicy& policy,
                                              double eta, const Objective& obj,
                                              std::int64_t t) {
  detail::require_same_dim(initiator, partner);
  InteractionResult result;
  result.h_initiator = sample_local_count(policy, *ictx.steps);
  result.h_partner = sample_local_count(policy, *pctx.steps);
  LocalUpdate up_i = local_steps(initiator.live_model, result.h_initiator, eta,
                                 ictx.agent, obj, *ictx.gradients);
  LocalUpdate up_j = local_steps(partner.live_model, result.h_partner, eta,
                                 pctx.agent, obj, *pctx.gradients);

  result.received_by_initiator = partner.comm_copy;
  result.received_by_partner = initiator.comm_copy;

  detail::apply_nonblocking_update(initiator, result.received_by_initiator,
                                   up_i, ictx.agent, t);
  detail::apply_nonblocking_update(partner, result.received_by_partner, up_j,
                                   pctx.agent, t);

  result.h_tilde_initiator = std::move(up_i.h_tilde_sum);
  result.h_tilde_partner = std::move(up_j.h_tilde_sum);
  result.bits =
      2 * raw_transfer_bits(static_cast<int>(initiator.live_model.size()));
  return result;
}

// Quantized rule: the non-blocking exchange with each comm copy sent
// through encode/decode. The receiver's side information is its own
// model with the current batch applied. If either direction fails to
// decode, the interaction falls back to the raw copies (counted as an
// additional raw exchange on the wire) and reports the fallback.
inline InteractionResult interact_quantized(
    NodeState& initiator, NodeState& partner, const NodeCtx& ictx,
    const NodeCtx& pctx, const LocalStepPolicy& policy, double eta,
    const Objective& obj, const QuantizerConfig& quantizer,
    RandomStream& quant_rng, std::int64_t t) {
  detail::require_same_dim(initiator, partner);
  if (quantizer.dimension != initiator.live_model.size()) {
    throw std::invalid_argument("quantizer dimension mismatch");
  }
  InteractionResult result;
  result.h_initiator = sample_local_count(policy, *ictx.steps);
  result.h_partner = sample_local_count(policy, *pctx.steps);
  LocalUpdate up_i = local_steps(initiator.live_model, result.h_initiator, eta,
                                 ictx.agent, obj, *ictx.gradients);
  LocalUpdate up_j = local_steps(partner.live_model, result.h_partner, eta,
                                 pctx.agent, obj, *pctx.gradients);

  const QuantizedMessage to_initiator =
      encode(partner.comm_copy, quantizer, quant_rng);
  const QuantizedMessage to_partner =
      encode(initiator.comm_copy, quantizer, quant_rng);
  std::optional<Vec> recv_i =
      decode(to_initiator, up_i.final_model, quantizer);
  std::optional<Vec> recv_j = decode(to_partner, up_j.final_model, quantizer);

  result.bits = quantized_transfer_bits(to_initiator) +
                quantized_transfer_bits(to_partner);
  if (!recv_i.has_value() || !recv_j.has_value()) {
    result.quantize_fallback = true;
    recv_i = partner.comm_copy;
    recv_j = initiator.comm_copy;
    result.bits +=
        2 * raw_transfer_bits(static_cast<int>(initiator.live_model.size()));
  }

  result.received_by_initiator = std::move(*recv_i);
  result.received_by_partner = std::move(*recv_j);

  detail::apply_nonblocking_update(initiator, result.received_by_initiator,
                                   up_i, ictx.agent, t);
  detail::apply_nonblocking_update(partner, result.received_by_partner, up_j,
                                   pctx.agent, t);

  result.h_tilde_initiator = std::move(up_i.h_tilde_sum);
  result.h_tilde_partner = std::move(up_j.h_tilde_sum);
  return result;
}

}  // namespace swarm
