#include "gsnn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace gsnn {

void GsnnConfig::validate() const {
  if (!(detection_threshold >= 0.0)) throw ConfigError("detection_threshold must be >= 0");
  if (expand_per_step < 1) throw ConfigError("expand_per_step must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (hidden_dim < 1 || out_dim < 1 || annotation_dim < 1) throw ConfigError("network sizes must be positive");
  if (annotation_dim > hidden_dim) throw ConfigError("annotation_dim exceeds hidden_dim");
  if (!(importance_discount > 0.0 && importance_discount < 1.0)) throw ConfigError("importance_discount must be in (0,1)");
  if (expansion_rounds < -1 || expansion_rounds > steps - 1) {
    throw ConfigError("expansion_rounds must be -1 or in [0, steps-1]");
  }
  if (importance_weight < 0.0) throw ConfigError("importance_weight must be >= 0");
  if (importance_max_hops < 0) throw ConfigError("importance_max_hops must be >= 0");
}

int GsnnConfig::rounds() const { return expansion_rounds < 0 ? steps - 1 : expansion_rounds; }

PropagationDims GsnnConfig::dims(const KnowledgeGraph& graph) const {
  PropagationDims d;
  d.hidden = static_cast<std::size_t>(hidden_dim);
  d.annotation = static_cast<std::size_t>(annotation_dim);
  d.out_dim = static_cast<std::size_t>(out_dim);
  d.edge_types = graph.edge_type_count();
  d.node_count = graph.node_count();
  return d;
}

std::vector<std::size_t> select_detections(std::span<const double> detections, double threshold) {
  std::vector<std::size_t> picked;
  for (std::size_t j = 0; j < detections.size(); ++j) {
    if (detections[j] >= threshold) picked.push_back(j);
  }
  if (picked.empty() && !detections.empty()) {
    picked.push_back(static_cast<std::size_t>(std::max_element(detections.begin(), detections.end()) - detections.begin()));
  }
  return picked;
}

namespace {

Vec annotation_for(double score, const GsnnConfig& config) {
  Vec x(static_cast<std::size_t>(config.annotation_dim), 0.0);
  x[0] = config.binary_annotation ? 1.0 : score;
  return x;
}

void check_detections(const KnowledgeGraph& graph, std::span<const double> detections) {
  if (detections.size() != graph.detectables().size()) {
    throw DimensionError("expected " + std::to_string(graph.detectables().size()) + " detection scores, got " +
                         std::to_string(detections.size()));
  }
}

ActiveSubgraph seed_subgraph(const KnowledgeGraph& graph, std::span<const double> detections,
                             const std::vector<std::size_t>& picked, const GsnnConfig& config) {
  const auto hd = static_cast<std::size_t>(config.hidden_dim);
  ActiveSubgraph sg(graph, hd, static_cast<std::size_t>(config.annotation_dim));
  for (std::size_t j : picked) {
    const Vec x = annotation_for(detections[j], config);
    sg.activate(graph.detectables()[j], x, init_hidden(x, hd));
  }
  for (std::size_t j : picked) sg.expand(graph.detectables()[j]);
  return sg;
}

}  // namespace

ActiveSubgraph initialize_subgraph(const KnowledgeGraph& graph, std::span<const double> detections,
                                   const GsnnConfig& config) {
  config.validate();
  check_detections(graph, detections);
  return seed_subgraph(graph, detections, select_detections(detections, config.detection_threshold), config);
}

RoundTape expansion_round(ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params,
                          const GsnnConfig& config, const std::vector<NodeId>* forced) {
  RoundTape tape;
  tape.count = subgraph.size();
  tape.scores.resize(tape.count);
  for (std::size_t s = 0; s < tape.count; ++s) {
    tape.scores[s] = node_importance(subgraph.hidden(s), subgraph.annotation(s), prop, params);
  }
  if (forced) {
    for (NodeId n : *forced) {
      if (subgraph.status(n) != NodeStatus::active) throw StateError("replayed expansion of a node that is not a candidate");
    }
    tape.expanded = *forced;
  } else {
    std::vector<std::size_t> candidates;
    for (std::size_t s = 0; s < tape.count; ++s) {
      if (subgraph.status(subgraph.node_at(s)) == NodeStatus::active) candidates.push_back(s);
    }
    const auto take = std::min(candidates.size(), static_cast<std::size_t>(config.expand_per_step));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (tape.scores[a] != tape.scores[b]) return tape.scores[a] > tape.scores[b];
                        return subgraph.node_at(a) < subgraph.node_at(b);
                      });
    for (std::size_t i = 0; i < take; ++i) tape.expanded.push_back(subgraph.node_at(candidates[i]));
  }
  for (NodeId n : tape.expanded) subgraph.expand(n);
  return tape;
}

GsnnRun run_gsnn(const KnowledgeGraph& graph, std::span<const double> detections, const PropagationParams& prop,
                 const ParameterSet& params, const GsnnConfig& config, const RunOptions& options) {
  config.validate();
  check_detections(graph, detections);
  std::vector<std::size_t> picked;
  if (options.replay) {
    for (NodeId n : options.replay->detected) {
      const auto& det = graph.detectables();
      auto it = std::lower_bound(det.begin(), det.end(), n);
      if (it == det.end() || *it != n) throw StateError("replayed detection is not a detectable node");
      picked.push_back(static_cast<std::size_t>(it - det.begin()));
    }
  } else {
    picked = select_detections(detections, config.detection_threshold);
  }

  GsnnRun run{seed_subgraph(graph, detections, picked, config), {}, {}, {}, {}, picked};
  for (std::size_t j : picked) run.trace.detected.push_back(graph.detectables()[j]);

  auto apply_probe = [&](std::size_t state) {
    if (!options.probe || options.probe->state != state) return;
    auto slot = run.subgraph.slot_of(options.probe->node);
    if (!slot) return;
    run.subgraph.hidden(*slot)[options.probe->component] += options.probe->delta;
  };

  const auto steps = static_cast<std::size_t>(config.steps);
  const auto rounds = static_cast<std::size_t>(config.rounds());
  if (options.replay && options.replay->rounds.size() != rounds) throw StateError("replay trace has wrong round count");
  run.steps.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    apply_probe(t);
    propagate_step(run.subgraph, prop, params, options.exec, &run.steps[t]);
    if (t < rounds) {
      const auto* forced = options.replay ? &options.replay->rounds[t] : nullptr;
      run.rounds.push_back(expansion_round(run.subgraph, prop, params, config, forced));
      run.trace.rounds.push_back(run.rounds.back().expanded);
    }
  }
  apply_probe(steps);

  const auto& sg = run.subgraph;
  const auto& nb = params.value(prop.node_bias);
  run.outputs = Tensor2(sg.size(), prop.dims.out_dim);
  for (std::size_t s = 0; s < sg.size(); ++s) {
    const Vec o = node_output(sg.hidden(s), sg.annotation(s), nb(sg.node_at(s), 0), prop, params);
    std::copy(o.begin(), o.end(), run.outputs.row(s).begin());
  }
  return run;
}

GsnnGradients backward_gsnn(const GsnnRun& run, const PropagationParams& prop, const ParameterSet& params,
                            const GsnnSeeds& seeds, GradientBuffer& grads, Exec exec) {
  const auto& sg = run.subgraph;
  const std::size_t hd = prop.dims.hidden;
  const std::size_t ad = prop.dims.annotation;
  if (seeds.d_outputs.rows() != sg.size() || seeds.d_outputs.cols() != prop.dims.out_dim) {
    throw DimensionError("output seed shape " + seeds.d_outputs.shape_string() + " does not match run");
  }
  const auto& nb = params.value(prop.node_bias);
  auto& gnb = grads.at(prop.node_bias);

  GsnnGradients out;
  out.d_annotation = Tensor2(sg.size(), ad);
  out.d_state.resize(run.steps.size() + 1);

  Tensor2 dh(sg.size(), hd);
  for (std::size_t s = 0; s < sg.size(); ++s) {
    auto seed = seeds.d_outputs.row(s);
    if (std::all_of(seed.begin(), seed.end(), [](double v) { return v == 0.0; })) continue;
    const NodeId node = sg.node_at(s);
    auto g = node_output_backward(sg.hidden(s), sg.annotation(s), nb(node, 0), run.outputs.row(s), seed, prop, params,
                                  grads);
    for (std::size_t k = 0; k < hd; ++k) dh(s, k) += g.dh[k];
    for (std::size_t k = 0; k < ad; ++k) out.d_annotation(s, k) += g.dx[k];
    gnb(node, 0) += g.dn;
  }
  out.d_state.back() = dh;

  for (std::size_t t = run.steps.size(); t-- > 0;) {
    const StepTape& step = run.steps[t];
    const std::size_t rows = step.h_in.rows();
    if (t < run.rounds.size()) {
      const RoundTape& round = run.rounds[t];
      if (t < seeds.d_importance.size() && !seeds.d_importance[t].empty()) {
        const Vec& di = seeds.d_importance[t];
        if (di.size() != round.count) throw DimensionError("importance seed length mismatch");
        for (std::size_t s = 0; s < round.count; ++s) {
          if (di[s] == 0.0) continue;
          auto g = node_importance_backward(step.h_out.row(s), sg.annotation(s), round.scores[s], di[s], prop, params,
                                            grads);
          for (std::size_t k = 0; k < hd; ++k) dh(s, k) += g.dh[k];
          for (std::size_t k = 0; k < ad; ++k) out.d_annotation(s, k) += g.dx[k];
        }
      }
    }
    Tensor2 dh_out(rows, hd);
    std::copy_n(dh.data(), rows * hd, dh_out.data());
    Tensor2 dh_in(rows, hd);
    propagate_step_backward(step, prop, params, dh_out, dh_in, grads, exec);
    out.d_state[t] = dh_in;
    if (t == 0) {
      for (std::size_t s = 0; s < rows; ++s) {
        for (std::size_t k = 0; k < ad; ++k) out.d_annotation(s, k) += dh_in(s, k);
      }
    }
    dh = std::move(dh_in);
  }
  return out;
}

Vec importance_targets(const KnowledgeGraph& graph, std::span<const NodeId> label_nodes, double gamma, int max_hops) {
  const std::size_t n = graph.node_count();
  constexpr int kUnreached = std::numeric_limits<int>::max();
  std::vector<int> dist(n, kUnreached);
  std::deque<NodeId> queue;
  for (NodeId v : label_nodes) {
    if (v >= n) throw RangeError("label node out of range");
    if (dist[v] != 0) {
      dist[v] = 0;
      queue.push_back(v);
    }
  }
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    if (dist[v] >= max_hops) continue;
    auto visit = [&](NodeId u) {
      if (dist[u] == kUnreached) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    };
    for (const auto& inc : graph.in_edges(v)) visit(inc.peer);
    for (const auto& inc : graph.out_edges(v)) visit(inc.peer);
  }
  Vec targets(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (dist[v] <= max_hops) targets[v] = std::pow(gamma, dist[v]);
  }
  return targets;
}

// ---- dense baseline -----------------------------------------------------

DenseRun run_dense_ggnn(const KnowledgeGraph& graph, std::span<const double> detections, const PropagationParams& prop,
                        const ParameterSet& params, const GsnnConfig& config, const DenseAdjacency* adjacency,
                        Exec exec) {
  config.validate();
  check_detections(graph, detections);
  DenseAdjacency owned;
  if (!adjacency) {
    owned = DenseAdjacency::from_graph(graph);
    adjacency = &owned;
  }
  const std::size_t n = graph.node_count();
  const std::size_t hd = prop.dims.hidden;
  const std::size_t ad = prop.dims.annotation;
  DenseRun run;
  run.annotation = Tensor2(n, ad);
  for (std::size_t j : select_detections(detections, config.detection_threshold)) {
    const Vec x = annotation_for(detections[j], config);
    std::copy(x.begin(), x.end(), run.annotation.row(graph.detectables()[j]).begin());
  }
  Tensor2 h(n, hd);
  for (std::size_t v = 0; v < n; ++v) {
    const Vec h0 = init_hidden(run.annotation.row(v), hd);
    std::copy(h0.begin(), h0.end(), h.row(v).begin());
  }
  const auto mw = prop.message_weights(params);
  const auto gw = prop.gru(params);
  run.steps.resize(static_cast<std::size_t>(config.steps));
  for (auto& step : run.steps) {
    step.h_in = h;
    step.msg = Tensor2(n, hd);
    step.h_out = Tensor2(n, hd);
    dense_aggregate(*adjacency, step.h_in, mw, step.msg, exec);
    gru_rows(step.h_in, step.msg, gw, step.h_out, step.gru, exec);
    h = step.h_out;
  }
  const auto& nb = params.value(prop.node_bias);
  run.outputs = Tensor2(n, prop.dims.out_dim);
  for (std::size_t v = 0; v < n; ++v) {
    const Vec o = node_output(h.row(v), run.annotation.row(v), nb(v, 0), prop, params);
    std::copy(o.begin(), o.end(), run.outputs.row(v).begin());
  }
  return run;
}

GsnnGradients backward_dense(const DenseRun& run, const DenseAdjacency& adjacency, const PropagationParams& prop,
                             const ParameterSet& params, const KnowledgeGraph& graph, const Tensor2& d_outputs,
                             GradientBuffer& grads, Exec exec) {
  const std::size_t n = graph.node_count();
  const std::size_t hd = prop.dims.hidden;
  const std::size_t ad = prop.dims.annotation;
  if (d_outputs.rows() != n || d_outputs.cols() != prop.dims.out_dim) throw DimensionError("dense output seed shape");
  const Tensor2& h_final = run.steps.empty() ? run.annotation : run.steps.back().h_out;
  const auto& nb = params.value(prop.node_bias);
  auto& gnb = grads.at(prop.node_bias);

  GsnnGradients out;
  out.d_annotation = Tensor2(n, ad);
  out.d_state.resize(run.steps.size() + 1);
  Tensor2 dh(n, hd);
  for (std::size_t v = 0; v < n; ++v) {
    auto g = node_output_backward(h_final.row(v), run.annotation.row(v), nb(v, 0), run.outputs.row(v), d_outputs.row(v),
                                  prop, params, grads);
    for (std::size_t k = 0; k < hd; ++k) dh(v, k) += g.dh[k];
    for (std::size_t k = 0; k < ad; ++k) out.d_annotation(v, k) += g.dx[k];
    gnb(v, 0) += g.dn;
  }
  out.d_state.back() = dh;

  const auto mw = prop.message_weights(params);
  const auto gw = prop.gru(params);
  auto gg = prop.gru_grads(grads);
  auto mg = prop.message_grads(grads);
  for (std::size_t t = run.steps.size(); t-- > 0;) {
    const StepTape& step = run.steps[t];
    Tensor2 da(n, hd);
    Tensor2 dh_in(n, hd);
    for (std::size_t v = 0; v < n; ++v) {
      gru_gate_backward(step.h_in.row(v), step.msg.row(v), step.gru[v], dh.row(v), gw, gg, dh_in.row(v), da.row(v));
    }
    dense_aggregate_backward(adjacency, step.h_in, da, mw, dh_in, mg, exec);
    out.d_state[t] = dh_in;
    dh = std::move(dh_in);
  }
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < ad; ++k) out.d_annotation(v, k) += dh(v, k);
  }
  return out;
}

}  // namespace gsnn
