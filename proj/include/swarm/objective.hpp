// Stochastic first-order oracles and empirical moment estimation.
//
// Two noise regimes are supported, tagged by which constants the
// objective declares:
//   second-moment regime: E||g~||^2 <= M^2 everywhere,
//   variance regime:      E||g~_i - grad f_i||^2 <= sigma^2 plus a
//                         gradient-dissimilarity bound rho^2, with
//                         f = (1/n) sum_i f_i.
// Exactly one set of constants is present on any objective.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarm/random.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {

enum class Regime { second_moment, variance };

inline const char* to_string(Regime regime) {
  return regime == Regime::second_moment ? "second_moment" : "variance";
}

struct ObjectiveMeta {
  std::string name;
  int dimension = 0;
  double smoothness = 0.0;
  std::optional<double> second_moment;  // M^2
  std::optional<double> variance;       // sigma^2
  std::optional<double> dissimilarity;  // rho^2
  std::optional<double> f_star;
  int agents = 1;

  Regime regime() const {
    const bool a = second_moment.has_value();
    const bool b = variance.has_value() && dissimilarity.has_value();
    if (a == b) {
      throw std::logic_error(
          "objective must declare exactly one regime's constants");
    }
    return a ? Regime::second_moment : Regime::variance;
  }
};

class Objective {
 public:
  virtual ~Objective() = default;

  const ObjectiveMeta& meta() const { return meta_; }
  int dimension() const { return meta_.dimension; }
  Regime regime() const { return meta_.regime(); }

  virtual double value(std::span<const double> x) const = 0;
  virtual void gradient(std::span<const double> x,
                        std::span<double> out) const = 0;

  // Per-agent component value and gradient. In the second-moment
  // regime every agent shares the same objective, so the defaults
  // forward to the full value and gradient.
  virtual double agent_value(int agent, std::span<const double> x) const {
    (void)agent;
    return value(x);
  }
  virtual void agent_gradient(int agent, std::span<const double> x,
                              std::span<double> out) const {
    (void)agent;
    gradient(x, out);
  }

  virtual void stochastic_gradient(int agent, std::span<const double> x,
                                   std::span<double> out,
                                   RandomStream& rng) const = 0;

 protected:
  explicit Objective(ObjectiveMeta meta) : meta_(std::move(meta)) {
    meta_.regime();  // validates the constant set
  }

 private:
  ObjectiveMeta meta_;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

namespace detail {

inline void check_dim(const Objective& obj, std::span<const double> x) {
  if (static_cast<int>(x.size()) != obj.dimension()) {
    throw std::invalid_argument("input dimension mismatch for objective " +
                                obj.meta().name);
  }
}

inline Vec draw_gaussian(int d, double std_dev, RandomStream& rng) {
  Vec noise(d);
  for (double& v : noise) v = std_dev * rng.normal();
  return noise;
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double softplus(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

}  // namespace detail

// ===== zero-gradient oracle =====

// f identically zero; every gradient query returns the zero vector.
// Useful for isolating the pure averaging dynamics.
class ConstantObjective final : public Objective {
 public:
  explicit ConstantObjective(int d)
      : Objective([&] {
          ObjectiveMeta m;
          m.name = "constant";
          m.dimension = d;
          m.smoothness = 0.0;
          m.second_moment = 0.0;
          m.f_star = 0.0;
          return m;
        }()) {}

  double value(std::span<const double> x) const override {
    detail::check_dim(*this, x);
    return 0.0;
  }
  void gradient(std::span<const double> x, std::span<double> out) const override {
    detail::check_dim(*this, x);
    fill(out, 0.0);
  }
  void stochastic_gradient(int, std::span<const double> x, std::span<double> out,
                           RandomStream&) const override {
    detail::check_dim(*this, x);
    fill(out, 0.0);
  }
};

inline ObjectivePtr make_constant(int d) {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  return std::make_shared<ConstantObjective>(d);
}

// ===== noisy quadratic =====

// f(x) = 0.5 ||x - a||^2 with smoothness exactly 1 and minimum 0 at a.
// The stochastic oracle adds isotropic Gaussian noise whose norm is
// clipped, so the second-moment certificate holds on the start region
// reachable from the all-zeros initialisation.
class NoisyQuadratic final : public Objective {
 public:
  NoisyQuadratic(int d, Vec center, double noise_std)
      : Objective(make_meta(d, center, noise_std)),
        center_(std::move(center)),
        noise_std_(noise_std),
        noise_radius_(10.0 + 9.0 * norm(std::span<const double>(center_))) {}

  double value(std::span<const double> x) const override {
    detail::check_dim(*this, x);
    return 0.5 * dist_sq(x, center_);
  }

  void gradient(std::span<const double> x, std::span<double> out) const override {
    detail::check_dim(*this, x);
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - center_[k];
  }

  void stochastic_gradient(int, std::span<const double> x,
                           std::span<double> out,
                           RandomStream& rng) const override {
    gradient(x, out);
    if (noise_std_ == 0.0) return;
    Vec noise = detail::draw_gaussian(dimension(), noise_std_, rng);
    clip_to_norm(noise, noise_radius_);
    axpy(1.0, noise, out);
  }

 private:
  static ObjectiveMeta make_meta(int d, const Vec& center, double noise_std) {
    if (d < 1) throw std::invalid_argument("dimension must be >= 1");
    if (static_cast<int>(center.size()) != d) {
      throw std::invalid_argument("center dimension mismatch");
    }
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
    const double grad_cap = norm(std::span<const double>(center));
    ObjectiveMeta m;
    m.name = "noisy_quadratic";
    m.dimension = d;
    m.smoothness = 1.0;
    m.second_moment = 100.0 * (1.0 + grad_cap) * (1.0 + grad_cap);
    m.f_star = 0.0;
    return m;
  }

  Vec center_;
  double noise_std_ = 0.0;
  double noise_radius_ = 0.0;
};

inline ObjectivePtr make_noisy_quadratic(int d, Vec center, double noise_std) {
  return std::make_shared<NoisyQuadratic>(d, std::move(center), noise_std);
}

// ===== bounded nonconvex =====

// f(x) = sum_k x_k^2 / (1 + x_k^2). Separable, nonconvex, with
// ||grad f|| <= sqrt(d) and smoothness at most 2 everywhere, so the
// clipped oracle carries a global second-moment certificate.
class BoundedNonconvex final : public Objective {
 public:
  explicit BoundedNonconvex(int d, double noise_std)
      : Objective(make_meta(d, noise_std)),
        noise_std_(noise_std),
        noise_radius_(10.0 + 9.0 * std::sqrt(static_cast<double>(d))) {}

  double value(std::span<const double> x) const override {
    detail::check_dim(*this, x);
    double acc = 0.0;
    for (double v : x) acc += v * v / (1.0 + v * v);
    return acc;
  }

  void gradient(std::span<const double> x, std::span<double> out) const override {
    detail::check_dim(*this, x);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double denom = 1.0 + x[k] * x[k];
      out[k] = 2.0 * x[k] / (denom * denom);
    }
  }

  void stochastic_gradient(int, std::span<const double> x,
                           std::span<double> out,
                           RandomStream& rng) const override {
    gradient(x, out);
    if (noise_std_ == 0.0) return;
    Vec noise = detail::draw_gaussian(dimension(), noise_std_, rng);
    clip_to_norm(noise, noise_radius_);
    axpy(1.0, noise, out);
  }

 private:
  static ObjectiveMeta make_meta(int d, double noise_std) {
    if (d < 1) throw std::invalid_argument("dimension must be >= 1");
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
    const double grad_cap = std::sqrt(static_cast<double>(d));
    ObjectiveMeta m;
    m.name = "bounded_nonconvex";
    m.dimension = d;
    m.smoothness = 2.0;
    m.second_moment = 100.0 * (1.0 + grad_cap) * (1.0 + grad_cap);
    m.f_star = 0.0;
    return m;
  }

  double noise_std_ = 0.0;
  double noise_radius_ = 0.0;
};

inline ObjectivePtr make_bounded_nonconvex(int d, double noise_std = 0.1) {
  return std::make_shared<BoundedNonconvex>(d, noise_std);
}

// ===== non-iid regularised logistic regression =====

// Synthetic per-agent datasets. heterogeneity = 0 draws every agent's
// samples from one pooled generator; heterogeneity = 1 gives each agent
// its own feature shift and label-flip rate; intermediate values scale
// both distortions linearly. f_i is the agent's regularised empirical
// logistic loss and f is their average, so the variance-regime identity
// f = (1/n) sum_i f_i holds by construction.
class NonIidLogistic final : public Objective {
 public:
  struct Sample {
    Vec features;
    double label = 1.0;  // +1 or -1
  };

  NonIidLogistic(int n_agents, int samples_per_agent, int d,
                 double heterogeneity, std::uint64_t seed)
      : NonIidLogistic(
            synthesize(n_agents, samples_per_agent, d, heterogeneity, seed)) {}

  double value(std::span<const double> x) const override {
    detail::check_dim(*this, x);
    double acc = 0.0;
    for (int i = 0; i < meta().agents; ++i) acc += agent_value(i, x);
    return acc / meta().agents;
  }

  double agent_value(int agent, std::span<const double> x) const override {
    detail::check_dim(*this, x);
    const auto& samples = data_[check_agent(agent)];
    double acc = 0.0;
    for (const Sample& s : samples) {
      acc += detail::softplus(-s.label * dot(s.features, x));
    }
    return acc / samples.size() + 0.5 * kRidge * norm_sq(x);
  }

  void gradient(std::span<const double> x, std::span<double> out) const override {
    detail::check_dim(*this, x);
    fill(out, 0.0);
    Vec part(x.size());
    for (int i = 0; i < meta().agents; ++i) {
      agent_gradient(i, x, part);
      axpy(1.0, part, out);
    }
    scale(out, 1.0 / meta().agents);
  }

  void agent_gradient(int agent, std::span<const double> x,
                      std::span<double> out) const override {
    detail::check_dim(*this, x);
    const auto& samples = data_[check_agent(agent)];
    fill(out, 0.0);
    for (const Sample& s : samples) {
      const double weight =
          -s.label * detail::sigmoid(-s.label * dot(s.features, x));
      axpy(weight, s.features, out);
    }
    scale(out, 1.0 / samples.size());
    axpy(kRidge, x, out);
  }

  // One uniformly chosen sample of the agent's dataset; unbiased for
  // agent_gradient.
  void stochastic_gradient(int agent, std::span<const double> x,
                           std::span<double> out,
                           RandomStream& rng) const override {
    detail::check_dim(*this, x);
    const auto& samples = data_[check_agent(agent)];
    const Sample& s = samples[rng.uniform_below(samples.size())];
    const double weight =
        -s.label * detail::sigmoid(-s.label * dot(s.features, x));
    for (std::size_t k = 0; k < x.size(); ++k) {
      out[k] = weight * s.features[k] + kRidge * x[k];
    }
  }

  static constexpr double kRidge = 0.01;

 private:
  int check_agent(int agent) const {
    if (agent < 0 || agent >= meta().agents) {
      throw std::invalid_argument("agent index out of range");
    }
    return agent;
  }

  struct Dataset {
    ObjectiveMeta meta;
    std::vector<std::vector<Sample>> samples;
  };

  explicit NonIidLogistic(Dataset built)
      : Objective(std::move(built.meta)), data_(std::move(built.samples)) {}

  static Dataset synthesize(int n_agents, int samples_per_agent, int d,
                            double heterogeneity, std::uint64_t seed) {
    if (n_agents < 1 || samples_per_agent < 1 || d < 1) {
      throw std::invalid_argument("logistic sizes must be >= 1");
    }
    if (heterogeneity < 0.0 || heterogeneity > 1.0) {
      throw std::invalid_argument("heterogeneity must lie in [0, 1]");
    }
    const long long total =
        static_cast<long long>(n_agents) * samples_per_agent;
    if (total > 10'000'000LL) {
      throw std::invalid_argument("n_agents * samples_per_agent too large");
    }

    RandomStream rng =
        RandomStream::substream(seed, StreamDomain::objective_data, 0);
    Vec w_star(d);
    for (double& v : w_star) v = rng.normal() / std::sqrt(double(d));

    std::vector<std::vector<Sample>> data(n_agents);
    double max_row_sq = 0.0;
    for (int i = 0; i < n_agents; ++i) {
      Vec shift(d);
      for (double& v : shift) v = 2.0 * rng.normal() / std::sqrt(double(d));
      const double flip_rate =
          n_agents > 1 ? 0.4 * double(i) / double(n_agents - 1) : 0.0;
      data[i].resize(samples_per_agent);
      for (Sample& s : data[i]) {
        s.features.resize(d);
        for (int k = 0; k < d; ++k) {
          s.features[k] = rng.normal() + heterogeneity * shift[k];
        }
        const double margin = dot(s.features, w_star) + 0.5 * rng.normal();
        s.label = margin >= 0.0 ? 1.0 : -1.0;
        if (rng.uniform01() < heterogeneity * flip_rate) s.label = -s.label;
        max_row_sq = std::max(max_row_sq, norm_sq(s.features));
      }
    }

    // Certificates: the ridge term cancels inside g~_i - grad f_i and
    // grad f_i - grad f, and every data term has norm <= max ||row||.
    ObjectiveMeta m;
    m.name = "noniid_logistic";
    m.dimension = d;
    m.agents = n_agents;
    m.smoothness = 0.25 * max_row_sq + kRidge;
    m.variance = 4.0 * max_row_sq;
    m.dissimilarity = 4.0 * max_row_sq;
    return {std::move(m), std::move(data)};
  }

  std::vector<std::vector<Sample>> data_;
};

inline ObjectivePtr make_noniid_logistic(int n_agents, int samples_per_agent,
                                         int d, double heterogeneity,
                                         std::uint64_t seed) {
  return std::make_shared<NonIidLogistic>(n_agents, samples_per_agent, d,
                                          heterogeneity, seed);
}

// ===== empirical moment estimation =====

struct MomentsReport {
  double m2_hat = 0.0;
  double m2_se = 0.0;
  double sigma2_hat = 0.0;
  double sigma2_se = 0.0;
  std::optional<double> rho2_hat;
  double l_hat = 0.0;
  int probe_points = 0;
  int draws_per_point = 0;
};

// Estimates the oracle constants at Gaussian probe points:
//   m2_hat     max over probes of mean ||g~||^2,
//   sigma2_hat max over probes of mean ||g~_i - grad f_i||^2,
//   rho2_hat   max over probes of (1/n) sum_i ||grad f_i - grad f||^2
//              (variance regime only; requesting it for a second-moment
//              objective is a regime mismatch),
//   l_hat      max secant ratio ||grad f(x) - grad f(y)|| / ||x - y||.
// Standard errors accompany the Monte Carlo quantities; rho2_hat and
// l_hat are exact given the probes.
inline MomentsReport estimate_moments(
    const Objective& obj, int probe_points, int draws_per_point,
    std::uint64_t seed, std::optional<bool> want_rho2 = std::nullopt) {
  if (probe_points < 2) {
    throw std::invalid_argument("estimate_moments needs >= 2 probe points");
  }
  if (draws_per_point < 100) {
    throw std::invalid_argument(
        "estimate_moments needs >= 100 draws per point");
  }
  const bool regime_b = obj.regime() == Regime::variance;
  const bool compute_rho2 = want_rho2.value_or(regime_b);
  if (compute_rho2 && !regime_b) {
    throw std::invalid_argument(
        "regime mismatch: rho2 requested from a second-moment objective");
  }

  const int d = obj.dimension();
  const int agents = std::max(1, obj.meta().agents);

  std::vector<Vec> probes(probe_points, Vec(d));
  {
    RandomStream probe_rng =
        RandomStream::substream(seed, StreamDomain::probe_points, 0);
    for (Vec& p : probes) {
      for (double& v : p) v = probe_rng.normal();
    }
  }

  MomentsReport report;
  report.probe_points = probe_points;
  report.draws_per_point = draws_per_point;

  Vec grad(d), grad_agent(d), sample(d);
  double best_m2 = -1.0, best_m2_se = 0.0;
  double best_sigma2 = -1.0, best_sigma2_se = 0.0;
  double best_rho2 = -1.0;

  for (int p = 0; p < probe_points; ++p) {
    RandomStream draw_rng =
        RandomStream::substream(seed, StreamDomain::moments, p);
    double m2_sum = 0.0, m2_sq_sum = 0.0;
    double var_sum = 0.0, var_sq_sum = 0.0;
    for (int t = 0; t < draws_per_point; ++t) {
      const int agent = agents > 1 ? t % agents : 0;
      obj.agent_gradient(agent, probes[p], grad_agent);
      obj.stochastic_gradient(agent, probes[p], sample, draw_rng);
      const double m2 = norm_sq(sample);
      m2_sum += m2;
      m2_sq_sum += m2 * m2;
      const double dev = dist_sq(sample, grad_agent);
      var_sum += dev;
      var_sq_sum += dev * dev;
    }
    const double inv = 1.0 / draws_per_point;
    const double m2_mean = m2_sum * inv;
    const double m2_var =
        std::max(0.0, m2_sq_sum * inv - m2_mean * m2_mean);
    const double var_mean = var_sum * inv;
    const double var_var =
        std::max(0.0, var_sq_sum * inv - var_mean * var_mean);
    if (m2_mean > best_m2) {
      best_m2 = m2_mean;
      best_m2_se = std::sqrt(m2_var / draws_per_point);
    }
    if (var_mean > best_sigma2) {
      best_sigma2 = var_mean;
      best_sigma2_se = std::sqrt(var_var / draws_per_point);
    }
    if (compute_rho2) {
      obj.gradient(probes[p], grad);
      double acc = 0.0;
      for (int i = 0; i < agents; ++i) {
        obj.agent_gradient(i, probes[p], grad_agent);
        acc += dist_sq(grad_agent, grad);
      }
      best_rho2 = std::max(best_rho2, acc / agents);
    }
  }

  Vec grad_p(d), grad_q(d);
  double best_secant = 0.0;
  for (int p = 0; p < probe_points; ++p) {
    obj.gradient(probes[p], grad_p);
    for (int q = p + 1; q < probe_points; ++q) {
      obj.gradient(probes[q], grad_q);
      const double gap = std::sqrt(dist_sq(probes[p], probes[q]));
      if (gap > 1e-12) {
        best_secant =
            std::max(best_secant, std::sqrt(dist_sq(grad_p, grad_q)) / gap);
      }
    }
  }

  report.m2_hat = best_m2;
  report.m2_se = best_m2_se;
  report.sigma2_hat = best_sigma2;
  report.sigma2_se = best_sigma2_se;
  if (compute_rho2) report.rho2_hat = best_rho2;
  report.l_hat = best_secant;
  return report;
}

}  // namespace swarm
