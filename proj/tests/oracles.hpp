#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "gsnn/eval.hpp"
#include "gsnn/pipeline.hpp"

namespace oracle {

using namespace gsnn;

inline constexpr double kStep = 1e-5;

// The floor keeps round-off on near-zero derivatives (about 1e-10 absolute
// at this step) from reading as a relative error.
inline constexpr double kRelFloor = 1e-5;

inline double rel_err(double analytic, double numeric, double floor = kRelFloor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

// (f(x+h) - f(x-h)) / 2h, restoring x.
inline double central_diff(const std::function<double()>& f, double& x, double h = kStep) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * h);
}

// Plain BFS over the undirected graph; -1 for unreachable.
inline std::vector<int> bfs_hops(const KnowledgeGraph& g, const std::vector<NodeId>& sources) {
  std::vector<std::vector<NodeId>> adj(g.node_count());
  for (const auto& e : g.edges()) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<int> d(g.node_count(), -1);
  std::deque<NodeId> q;
  for (NodeId s : sources) {
    if (d[s] < 0) {
      d[s] = 0;
      q.push_back(s);
    }
  }
  while (!q.empty()) {
    const NodeId v = q.front();
    q.pop_front();
    for (NodeId u : adj[v]) {
      if (d[u] < 0) {
        d[u] = d[v] + 1;
        q.push_back(u);
      }
    }
  }
  return d;
}

// Average precision by enumerating every ranking consistent with the scores
// and tie rule: for each positive, count items that outrank it.
inline std::optional<double> brute_force_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  const std::size_t n = s.size();
  double sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!y[i]) continue;
    ++pos;
    std::size_t rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool ahead = s[j] > s[i] || (s[j] == s[i] && j < i);
      if (ahead) {
        ++rank;
        if (y[j]) ++hits;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  if (pos == 0) return std::nullopt;
  return sum / static_cast<double>(pos);
}

// AP from an explicit permutation (order[r] = item at rank r).
inline double ap_of_order(const std::vector<std::size_t>& order, const std::vector<std::uint8_t>& y) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (y[order[r]]) sum += static_cast<double>(++hits) / static_cast<double>(r + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

// One synchronous update written directly from the definition: per edge
// messages through per-direction matrices, summed, then the gated update.
inline Tensor2 naive_step(const KnowledgeGraph& g, const std::vector<bool>& active, const Tensor2& h,
                          const PropagationParams& prop, const ParameterSet& params) {
  const std::size_t n = g.node_count();
  const std::size_t hd = h.cols();
  Tensor2 out(n, hd);
  const auto& bias = params.value(prop.msg_bias);
  for (std::size_t v = 0; v < n; ++v) {
    if (!active[v]) continue;
    Vec a(hd);
    for (std::size_t k = 0; k < hd; ++k) a[k] = bias(k, 0);
    for (const auto& e : g.edges()) {
      if (!active[e.src] || !active[e.dst]) continue;
      if (e.dst == v) matvec_acc(params.value(prop.msg[2 * e.type]), h.row(e.src), a);
      if (e.src == v) matvec_acc(params.value(prop.msg[2 * e.type + 1]), h.row(e.dst), a);
    }
    const auto& wz = params.value(prop.wz);
    const auto& uz = params.value(prop.uz);
    const auto& wr = params.value(prop.wr);
    const auto& ur = params.value(prop.ur);
    const auto& w = params.value(prop.w);
    const auto& u = params.value(prop.u);
    auto hv = h.row(v);
    Vec z(hd), r(hd), rh(hd), c(hd);
    for (std::size_t i = 0; i < hd; ++i) {
      double sz = 0.0, sr = 0.0;
      for (std::size_t j = 0; j < hd; ++j) {
        sz += wz(i, j) * a[j] + uz(i, j) * hv[j];
        sr += wr(i, j) * a[j] + ur(i, j) * hv[j];
      }
      z[i] = 1.0 / (1.0 + std::exp(-sz));
      r[i] = 1.0 / (1.0 + std::exp(-sr));
      rh[i] = r[i] * hv[i];
    }
    for (std::size_t i = 0; i < hd; ++i) {
      double sc = 0.0;
      for (std::size_t j = 0; j < hd; ++j) sc += w(i, j) * a[j] + u(i, j) * rh[j];
      c[i] = std::tanh(sc);
      out(v, i) = (1.0 - z[i]) * hv[i] + z[i] * c[i];
    }
  }
  return out;
}

// Random graph, params and detections for small oracle runs.
struct Fixture {
  KnowledgeGraph graph;
  ParameterSet params;
  PropagationParams prop;
  Vec detections;
};

inline Fixture make_fixture(std::size_t nodes, double degree, int types, std::size_t detectables, const GsnnConfig& cfg,
                            std::uint64_t seed) {
  Rng rng = make_rng(seed, "fixture");
  Fixture f;
  f.graph = random_graph(nodes, degree, types, detectables, rng);
  f.prop = PropagationParams::create(f.params, cfg.dims(f.graph), rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto& nb = f.params.value(f.prop.node_bias);
  for (double& v : nb.flat()) v = u(rng);
  std::uniform_real_distribution<double> s(0.0, 1.0);
  f.detections.resize(f.graph.detectables().size());
  for (double& d : f.detections) d = s(rng);
  return f;
}

}  // namespace oracle
