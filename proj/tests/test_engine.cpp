#include "doctest.h"
#include "oracles.hpp"

using namespace gsnn;
using oracle::rel_err;

namespace {

// Node 0 detectable, nodes 1..k hanging off it through the same relation.
KnowledgeGraph star(std::size_t k) {
  std::vector<ConceptNode> nodes;
  std::vector<TypedEdge> edges;
  for (std::size_t i = 0; i <= k; ++i) {
    nodes.push_back({static_cast<NodeId>(i), "n" + std::to_string(i), NodeKind::object, true, i == 0});
    if (i > 0) edges.push_back({0, static_cast<NodeId>(i), 0});
  }
  return KnowledgeGraph(std::move(nodes), {"near"}, std::move(edges));
}

// Random output and importance seeds, fixed per run shape.
struct Probe {
  Tensor2 c;
  std::vector<Vec> e;

  double loss(const GsnnRun& run) const {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c.flat()[i] * run.outputs.flat()[i];
    for (std::size_t r = 0; r < e.size(); ++r) {
      for (std::size_t j = 0; j < e[r].size(); ++j) s += e[r][j] * run.rounds[r].scores[j];
    }
    return s;
  }
};

Probe make_probe(const GsnnRun& run, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Probe p{Tensor2(run.outputs.rows(), run.outputs.cols()), {}};
  for (double& v : p.c.flat()) v = u(rng);
  for (const auto& r : run.rounds) {
    Vec v(r.count);
    for (double& x : v) x = u(rng);
    p.e.push_back(v);
  }
  return p;
}

}  // namespace

TEST_CASE("detections above threshold seed the subgraph, else the best one") {
  CHECK(select_detections(Vec{0.2, 0.5, 0.9}, 0.5) == std::vector<std::size_t>{1, 2});
  CHECK(select_detections(Vec{0.2, 0.4, 0.1}, 0.5) == std::vector<std::size_t>{1});
  CHECK(select_detections(Vec{}, 0.5).empty());

  const KnowledgeGraph g = star(3);
  GsnnConfig cfg;
  const ActiveSubgraph sg = initialize_subgraph(g, Vec{0.7}, cfg);
  CHECK(sg.size() == 4);
  CHECK(sg.status(0) == NodeStatus::expanded);
  CHECK(sg.status(2) == NodeStatus::active);
  CHECK(sg.annotation(0)[0] == 0.7);
  CHECK(sg.hidden(0)[0] == 0.7);
  CHECK(sg.hidden(0)[1] == 0.0);
  CHECK(sg.annotation(*sg.slot_of(3))[0] == 0.0);
  CHECK_THROWS_AS(initialize_subgraph(g, Vec{0.7, 0.1}, cfg), DimensionError);

  cfg.binary_annotation = true;
  CHECK(initialize_subgraph(g, Vec{0.7}, cfg).annotation(0)[0] == 1.0);
}

TEST_CASE("equal importance ties go to the lower node id") {
  const KnowledgeGraph g = star(6);
  GsnnConfig cfg;
  cfg.steps = 2;
  Rng rng = make_rng(5, "tie");
  ParameterSet params;
  const auto prop = PropagationParams::create(params, cfg.dims(g), rng);
  const GsnnRun run = run_gsnn(g, Vec{0.9}, prop, params, cfg);
  REQUIRE(run.rounds.size() == 1);
  const auto& scores = run.rounds[0].scores;
  for (std::size_t s = 2; s < scores.size(); ++s) CHECK(scores[s] == scores[1]);
  CHECK(run.rounds[0].expanded == std::vector<NodeId>{1, 2, 3, 4, 5});
}

TEST_CASE("expansions stay within the budget") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    GsnnConfig cfg;
    cfg.expand_per_step = 1 + static_cast<int>(seed % 4);
    cfg.steps = 2 + static_cast<int>(seed % 3);
    const auto f = oracle::make_fixture(40, 3.0, 2, 10, cfg, seed);
    const GsnnRun run = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg);
    CHECK(run.subgraph.expanded_count() <= run.detected.size() + cfg.expand_per_step * (cfg.steps - 1));
    CHECK(run.rounds.size() == static_cast<std::size_t>(cfg.steps - 1));
  }
}

TEST_CASE("fully active run equals the dense network and the per-edge reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GsnnConfig cfg;
    const std::size_t n = 6 + seed % 6;
    auto f = oracle::make_fixture(n, 2.5, 2, n, cfg, 100 + seed);
    // every node detected: all active and expanded before the first step
    for (double& d : f.detections) d = 0.5 + 0.5 * d;
    const GsnnRun run = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg);
    const DenseRun dense = run_dense_ggnn(f.graph, f.detections, f.prop, f.params, cfg);
    REQUIRE(run.subgraph.size() == n);
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const NodeId v = run.subgraph.node_at(s);
      for (std::size_t k = 0; k < run.outputs.cols(); ++k) worst = std::max(worst, std::abs(run.outputs(s, k) - dense.outputs(v, k)));
    }
    CHECK(worst <= 1e-10);

    const std::vector<bool> all(n, true);
    for (const auto& step : dense.steps) {
      const Tensor2 ref = oracle::naive_step(f.graph, all, step.h_in, f.prop, f.params);
      double d = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) d = std::max(d, std::abs(ref.flat()[i] - step.h_out.flat()[i]));
      CHECK(d <= 1e-12);
    }
  }
}

TEST_CASE("partial subgraph step matches the reference restricted to active nodes") {
  GsnnConfig cfg;
  const auto f = oracle::make_fixture(30, 2.0, 3, 6, cfg, 9);
  const GsnnRun run = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg);
  const auto& step = run.steps.back();
  std::vector<bool> active(30, false);
  Tensor2 h(30, step.h_in.cols());
  for (std::size_t s = 0; s < step.h_in.rows(); ++s) {
    const NodeId v = run.subgraph.node_at(s);
    active[v] = true;
    std::copy(step.h_in.row(s).begin(), step.h_in.row(s).end(), h.row(v).begin());
  }
  const Tensor2 ref = oracle::naive_step(f.graph, active, h, f.prop, f.params);
  for (std::size_t s = 0; s < step.h_out.rows(); ++s) {
    const NodeId v = run.subgraph.node_at(s);
    for (std::size_t k = 0; k < h.cols(); ++k) CHECK(std::abs(ref(v, k) - step.h_out(s, k)) <= 1e-12);
  }
}

TEST_CASE("importance targets match breadth-first hop counts") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed, "targets");
    const KnowledgeGraph g = random_graph(25, 2.0, 2, 5, rng);
    std::vector<NodeId> labels{static_cast<NodeId>(seed % 25), static_cast<NodeId>((seed * 7) % 25)};
    const Vec t = importance_targets(g, labels, 0.3, 4);
    const auto d = oracle::bfs_hops(g, labels);
    for (std::size_t v = 0; v < 25; ++v) {
      const double want = (d[v] < 0 || d[v] > 4) ? 0.0 : std::pow(0.3, d[v]);
      CHECK(t[v] == want);
    }
  }
  CHECK_THROWS_AS(importance_targets(star(2), std::vector<NodeId>{7}, 0.3, 4), RangeError);
}

TEST_CASE("runs are deterministic and independent of the execution mode") {
  GsnnConfig cfg;
  const auto f = oracle::make_fixture(200, 4.0, 3, 30, cfg, 4);
  RunOptions serial;
  serial.exec = Exec::serial;
  const GsnnRun a = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg);
  const GsnnRun b = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg, serial);
  CHECK(a.trace == b.trace);
  CHECK(a.outputs == b.outputs);
}

TEST_CASE("graph network gradients match finite differences") {
  GsnnConfig cfg;
  cfg.steps = 3;
  cfg.expand_per_step = 2;
  auto f = oracle::make_fixture(10, 2.0, 2, 4, cfg, 21);
  RunOptions opt;
  const GsnnRun run0 = run_gsnn(f.graph, f.detections, f.prop, f.params, cfg);
  opt.replay = &run0.trace;
  Rng rng = make_rng(21, "seeds");
  const Probe probe = make_probe(run0, rng);

  GradientBuffer grads = f.params.make_gradient_buffer();
  const GsnnGradients g = backward_gsnn(run0, f.prop, f.params, GsnnSeeds{probe.c, probe.e}, grads);

  auto loss = [&] { return probe.loss(run_gsnn(f.graph, f.detections, f.prop, f.params, cfg, opt)); };
  double worst = 0.0;
  for (ParamId id : f.prop.ids()) {
    auto& w = f.params.value(id);
    for (std::size_t i = 0; i < w.size(); i += 3) {
      worst = std::max(worst, rel_err(grads[id].flat()[i], oracle::central_diff(loss, w.flat()[i])));
    }
  }
  CHECK(worst < 1e-4);

  // hidden-state derivatives through additive probes
  double worst_state = 0.0;
  for (std::size_t s = 0; s < g.d_state.size(); ++s) {
    for (std::size_t slot = 0; slot < g.d_state[s].rows(); ++slot) {
      for (std::size_t k = 0; k < g.d_state[s].cols(); k += 4) {
        auto at = [&](double delta) {
          RunOptions o = opt;
          o.probe = StateProbe{s, run0.subgraph.node_at(slot), k, delta};
          return probe.loss(run_gsnn(f.graph, f.detections, f.prop, f.params, cfg, o));
        };
        const double fd = (at(oracle::kStep) - at(-oracle::kStep)) / (2 * oracle::kStep);
        worst_state = std::max(worst_state, rel_err(g.d_state[s](slot, k), fd));
      }
    }
  }
  CHECK(worst_state < 1e-4);
}

TEST_CASE("dense network gradients match finite differences") {
  GsnnConfig cfg;
  cfg.steps = 2;
  auto f = oracle::make_fixture(8, 2.0, 2, 3, cfg, 33);
  const DenseAdjacency adj = DenseAdjacency::from_graph(f.graph);
  const DenseRun run = run_dense_ggnn(f.graph, f.detections, f.prop, f.params, cfg, &adj);
  Rng rng = make_rng(33, "seeds");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor2 c(run.outputs.rows(), run.outputs.cols());
  for (double& v : c.flat()) v = u(rng);
  GradientBuffer grads = f.params.make_gradient_buffer();
  backward_dense(run, adj, f.prop, f.params, f.graph, c, grads);
  auto loss = [&] {
    const DenseRun r = run_dense_ggnn(f.graph, f.detections, f.prop, f.params, cfg, &adj);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c.flat()[i] * r.outputs.flat()[i];
    return s;
  };
  double worst = 0.0;
  for (ParamId id : f.prop.ids()) {
    auto& w = f.params.value(id);
    for (std::size_t i = 0; i < w.size(); i += 2) {
      worst = std::max(worst, rel_err(grads[id].flat()[i], oracle::central_diff(loss, w.flat()[i])));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("bad configurations are rejected") {
  GsnnConfig cfg;
  cfg.expand_per_step = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GsnnConfig{};
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GsnnConfig{};
  cfg.expansion_rounds = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
