// Regular interaction graphs: construction, spectral gap, edge sampling.
//
// A topology is immutable after construction. lambda2 (the algebraic
// connectivity of the graph Laplacian) is computed once at build time by
// a dense Jacobi eigensolver, so shared use across concurrent runs needs
// no synchronisation.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarm/random.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {

enum class GraphKind { complete, ring, hypercube, random_regular };

inline const char* to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::complete: return "complete";
    case GraphKind::ring: return "ring";
    case GraphKind::hypercube: return "hypercube";
    case GraphKind::random_regular: return "random_regular";
  }
  return "unknown";
}

inline GraphKind graph_kind_from_string(const std::string& s) {
  if (s == "complete") return GraphKind::complete;
  if (s == "ring") return GraphKind::ring;
  if (s == "hypercube") return GraphKind::hypercube;
  if (s == "random_regular") return GraphKind::random_regular;
  throw std::invalid_argument("unknown graph kind: " + s);
}

struct Edge {
  int u = 0;
  int v = 0;  // stored with u < v
};

struct Topology {
  GraphKind kind = GraphKind::complete;
  int n = 0;
  int degree_r = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> adjacency;
  double lambda2 = 0.0;

  int edge_count() const { return static_cast<int>(edges.size()); }
};

namespace detail {

constexpr int kMaxNodes = 2048;
constexpr int kConnectivityRetryBudget = 100;
constexpr int kPairingRetryBudget = 10000;

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline int log2_exact(int v) {
  int log = 0;
  while ((1 << log) < v) ++log;
  return log;
}

inline bool is_connected(int n, const std::vector<std::vector<int>>& adj) {
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int visited = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        frontier.push(v);
      }
    }
  }
  return visited == n;
}

inline std::vector<std::vector<int>> adjacency_from_edges(
    int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const Edge& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

// One attempt of the configuration model: pair up n*r stubs uniformly,
// reject the whole pairing on any self-loop or duplicate edge.
inline bool try_random_pairing(int n, int r, RandomStream& rng,
                               std::vector<Edge>& out) {
  std::vector<int> stubs(static_cast<std::size_t>(n) * r);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) stubs[static_cast<std::size_t>(i) * r + k] = i;
  }
  for (std::size_t k = stubs.size(); k > 1; --k) {
    const std::size_t j = rng.uniform_below(k);
    std::swap(stubs[k - 1], stubs[j]);
  }
  std::vector<std::vector<char>> present(n, std::vector<char>(n, 0));
  out.clear();
  for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
    int a = stubs[k];
    int b = stubs[k + 1];
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    if (present[a][b]) return false;
    present[a][b] = 1;
    out.push_back({a, b});
  }
  return true;
}

}  // namespace detail

// Second-smallest eigenvalue of the combinatorial Laplacian L = D - A,
// by cyclic Jacobi sweeps on the dense matrix. Converged when the
// off-diagonal Frobenius norm drops below 1e-12.
inline double laplacian_lambda2(int n, const std::vector<Edge>& edges) {
  if (n < 2) throw std::invalid_argument("lambda2 requires n >= 2");
  if (n > detail::kMaxNodes) {
    throw std::invalid_argument("dense eigensolver limited to n <= 2048");
  }
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (const Edge& e : edges) {
    a[e.u][e.v] -= 1.0;
    a[e.v][e.u] -= 1.0;
    a[e.u][e.u] += 1.0;
    a[e.v][e.v] += 1.0;
  }

  const double tol = 1e-12;
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off_sq = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off_sq += 2.0 * a[p][q] * a[p][q];
    }
    if (std::sqrt(off_sq) < tol) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p][q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = 0.5 * (a[q][q] - a[p][p]) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eig(n);
  for (int k = 0; k < n; ++k) eig[k] = a[k][k];
  std::sort(eig.begin(), eig.end());
  return eig[1];
}

inline double laplacian_lambda2(const Topology& topo) {
  return topo.lambda2;
}

// Builds an r-regular graph of the requested family. Throws
// std::invalid_argument on an infeasible (kind, n, r) combination and
// std::runtime_error when the random-regular connectivity retry budget
// (100 attempts) is exhausted.
inline Topology build_topology(GraphKind kind, int n, int r,
                               std::uint64_t seed = 0) {
  if (n < 2) throw std::invalid_argument("topology requires n >= 2");
  if (n > detail::kMaxNodes) {
    throw std::invalid_argument("topology limited to n <= 2048");
  }
  if (r < 1 || r >= n) {
    throw std::invalid_argument("degree must satisfy 1 <= r < n, got r=" +
                                std::to_string(r) + " with n=" +
                                std::to_string(n));
  }

  Topology topo;
  topo.kind = kind;
  topo.n = n;
  topo.degree_r = r;

  switch (kind) {
    case GraphKind::complete: {
      if (r != n - 1) {
        throw std::invalid_argument("complete graph requires r = n - 1");
      }
      for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) topo.edges.push_back({u, v});
      }
      break;
    }
    case GraphKind::ring: {
      if (r != 2) throw std::invalid_argument("ring requires r = 2");
      if (n < 3) throw std::invalid_argument("ring requires n >= 3");
      for (int u = 0; u < n; ++u) {
        const int v = (u + 1) % n;
        topo.edges.push_back({std::min(u, v), std::max(u, v)});
      }
      std::sort(topo.edges.begin(), topo.edges.end(),
                [](const Edge& a, const Edge& b) {
                  return a.u != b.u ? a.u < b.u : a.v < b.v;
                });
      break;
    }
    case GraphKind::hypercube: {
      if (!detail::is_power_of_two(n) || detail::log2_exact(n) != r) {
        throw std::invalid_argument("hypercube requires n = 2^r");
      }
      for (int u = 0; u < n; ++u) {
        for (int bit = 0; bit < r; ++bit) {
          const int v = u ^ (1 << bit);
          if (u < v) topo.edges.push_back({u, v});
        }
      }
      break;
    }
    case GraphKind::random_regular: {
      if (r < 3) {
        throw std::invalid_argument(
            "random_regular requires r >= 3 for the connectivity retry loop");
      }
      if ((static_cast<long long>(n) * r) % 2 != 0) {
        throw std::invalid_argument("random_regular requires n*r even (got n=" +
                                    std::to_string(n) + ", r=" +
                                    std::to_string(r) + ")");
      }
      RandomStream rng(seed);
      bool built = false;
      for (int attempt = 0; attempt < detail::kConnectivityRetryBudget;
           ++attempt) {
        bool simple = false;
        for (int inner = 0; inner < detail::kPairingRetryBudget; ++inner) {
          if (detail::try_random_pairing(n, r, rng, topo.edges)) {
            simple = true;
            break;
          }
        }
        if (!simple) {
          throw std::runtime_error(
              "random_regular pairing budget exhausted without a simple graph");
        }
        auto adj = detail::adjacency_from_edges(n, topo.edges);
        if (detail::is_connected(n, adj)) {
          built = true;
          break;
        }
      }
      if (!built) {
        throw std::runtime_error(
            "random_regular connectivity retry budget (100 attempts) "
            "exhausted");
      }
      std::sort(topo.edges.begin(), topo.edges.end(),
                [](const Edge& a, const Edge& b) {
                  return a.u != b.u ? a.u < b.u : a.v < b.v;
                });
      break;
    }
  }

  topo.adjacency = detail::adjacency_from_edges(n, topo.edges);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(topo.adjacency[i].size()) != r) {
      throw std::logic_error("constructed graph is not r-regular");
    }
  }
  topo.lambda2 = laplacian_lambda2(n, topo.edges);
  return topo;
}

// Uniformly samples an active edge and orients it: the first element of
// the returned pair initiates the interaction (fair coin).
inline std::pair<int, int> sample_edge(const Topology& topo,
                                       RandomStream& rng) {
  const Edge& e = topo.edges[rng.uniform_below(topo.edges.size())];
  return rng.coin() ? std::make_pair(e.v, e.u) : std::make_pair(e.u, e.v);
}

// Sum over edges of the squared model disagreement. For any model list
// this dominates lambda2 times the variance potential.
inline double pairwise_disagreement(const Topology& topo,
                                    std::span<const Vec> models) {
  if (static_cast<int>(models.size()) != topo.n) {
    throw std::invalid_argument("model list size must equal node count");
  }
  double acc = 0.0;
  for (const Edge& e : topo.edges) {
    acc += dist_sq(models[e.u], models[e.v]);
  }
  return acc;
}

}  // namespace swarm
