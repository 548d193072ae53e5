// Serial vs OpenMP kernel timings, then a short dense vs budgeted sweep.
//   gsnn_bench [nodes] [reps]

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>

#include "gsnn/eval.hpp"

using namespace gsnn;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

void row(const char* name, double serial, double parallel, double diff) {
  std::printf("%-22s %12.6f %12.6f %8.2fx %10.2e\n", name, serial, parallel, serial / parallel, diff);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && (std::string(argv[1]) == "-h" || std::string(argv[1]) == "--help")) {
    std::printf("usage: %s [nodes=2000] [reps=5]\n", argv[0]);
    return 0;
  }
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2000;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 5;
  if (n == 0 || reps <= 0) {
    std::fprintf(stderr, "nodes and reps must be positive\n");
    return 2;
  }

  Rng rng = make_rng(3, "bench");
  const KnowledgeGraph g = random_graph(n, 6.0, 3, 80, rng);
  GsnnConfig cfg;
  ParameterSet params;
  const auto prop = PropagationParams::create(params, cfg.dims(g), rng);
  const auto mw = prop.message_weights(params);
  const auto gw = prop.gru(params);

  std::vector<LocalEdge> edges;
  for (const auto& e : g.edges()) {
    edges.push_back({e.dst, e.src, in_channel(e.type)});
    edges.push_back({e.src, e.dst, out_channel(e.type)});
  }
  const LocalTopology topo = make_topology(n, edges);
  const DenseAdjacency adj = DenseAdjacency::from_graph(g);

  Tensor2 h(n, prop.dims.hidden);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : h.flat()) v = u(rng);
  Tensor2 da = h;

  std::printf("nodes %zu, edges %zu, threads %d\n", n, g.edge_count(), omp_get_max_threads());
  std::printf("%-22s %12s %12s %9s %10s\n", "kernel", "serial s", "omp s", "speedup", "max diff");

  Tensor2 a_s(n, prop.dims.hidden), a_p(n, prop.dims.hidden);
  const double t_ss = seconds([&] { aggregate_serial(topo, h, mw, a_s); }, reps);
  const double t_sp = seconds([&] { aggregate_omp(topo, h, mw, a_p); }, reps);
  row("sparse aggregate", t_ss, t_sp, max_abs_diff(a_s, a_p));

  auto backward = [&](bool parallel) {
    GradientBuffer gb = params.make_gradient_buffer(prop.ids());
    auto mg = prop.message_grads(gb);
    Tensor2 dh(n, prop.dims.hidden);
    parallel ? aggregate_backward_omp(topo, h, da, mw, dh, mg) : aggregate_backward_serial(topo, h, da, mw, dh, mg);
    return dh;
  };
  Tensor2 dh_s, dh_p;
  const double t_bs = seconds([&] { dh_s = backward(false); }, reps);
  const double t_bp = seconds([&] { dh_p = backward(true); }, reps);
  row("sparse backward", t_bs, t_bp, max_abs_diff(dh_s, dh_p));

  std::vector<GruCache> cache;
  Tensor2 o_s(n, prop.dims.hidden), o_p(n, prop.dims.hidden);
  const double t_gs = seconds([&] { gru_rows_serial(h, a_s, gw, o_s, cache); }, reps);
  const double t_gp = seconds([&] { gru_rows_omp(h, a_s, gw, o_p, cache); }, reps);
  row("gated update", t_gs, t_gp, max_abs_diff(o_s, o_p));

  Tensor2 d_s(n, prop.dims.hidden), d_p(n, prop.dims.hidden);
  const double t_ds = seconds([&] { dense_aggregate_serial(adj, h, mw, d_s); }, reps);
  const double t_dp = seconds([&] { dense_aggregate_omp(adj, h, mw, d_p); }, reps);
  row("dense aggregate", t_ds, t_dp, max_abs_diff(d_s, d_p));
  std::printf("dense vs sparse aggregate max diff %.2e\n\n", max_abs_diff(d_s, a_s));

  ScalingConfig sc;
  sc.sizes = {250, 500, 1000, 2000};
  sc.trials = 5;
  sc.seed = 11;
  const ScalingReport r = scaling_benchmark(sc);
  write_scaling_tsv(std::cout, r);
  return 0;
}
