#include "gsnn/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <new>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace gsnn {

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

Tensor2 predict_all(const Model& model, std::span<const Example> data, Exec exec) {
  Tensor2 out(data.size(), model.label_count());
  parallel_for(data.size(), exec, [&](std::size_t i) {
    const Vec p = predict(model, data[i], Exec::serial);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  });
  return out;
}

EvalReport evaluate_scores(const Tensor2& scores, std::span<const Example> data, std::string model_name) {
  if (scores.rows() != data.size()) throw DimensionError("one score row per example expected");
  EvalReport r;
  r.model = std::move(model_name);
  r.examples = data.size();
  const std::size_t labels = scores.cols();
  r.ap.resize(labels);
  Vec col(data.size());
  std::vector<std::uint8_t> truth(data.size());
  double sum = 0.0;
  for (std::size_t l = 0; l < labels; ++l) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].labels.size() != labels) throw DimensionError("example label count does not match scores");
      col[i] = scores(i, l);
      truth[i] = data[i].labels[l];
    }
    r.ap[l] = average_precision(col, truth);
    if (r.ap[l]) {
      sum += *r.ap[l];
      ++r.scored_categories;
    }
  }
  r.map = r.scored_categories ? sum / static_cast<double>(r.scored_categories) : 0.0;
  return r;
}

EvalReport evaluate(const Model& model, std::span<const Example> data, Exec exec) {
  return evaluate_scores(predict_all(model, data, exec), data, std::string(to_string(model.kind())));
}

std::vector<std::optional<double>> ap_deltas(const EvalReport& report, const EvalReport& baseline) {
  if (report.ap.size() != baseline.ap.size()) throw DimensionError("reports cover different label sets");
  std::vector<std::optional<double>> d(report.ap.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (report.ap[i] && baseline.ap[i]) d[i] = *report.ap[i] - *baseline.ap[i];
  }
  return d;
}

namespace {

void put_optional(std::ostream& out, const std::optional<double>& v) {
  if (v) {
    out << *v;
  } else {
    out << '-';
  }
}

}  // namespace

void write_eval_tsv(std::ostream& out, const KnowledgeGraph& graph, const EvalReport& report,
                    const EvalReport* baseline) {
  const auto& labels = graph.output_labels();
  if (labels.size() != report.ap.size()) throw DimensionError("report does not match graph labels");
  std::vector<std::optional<double>> delta;
  if (baseline) delta = ap_deltas(report, *baseline);
  out << "label\tap";
  if (baseline) out << "\tbaseline_ap\tdelta";
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << graph.node(labels[i]).name << '\t';
    put_optional(out, report.ap[i]);
    if (baseline) {
      out << '\t';
      put_optional(out, baseline->ap[i]);
      out << '\t';
      put_optional(out, delta[i]);
    }
    out << '\n';
  }
}

void write_eval_summary(std::ostream& out, const EvalReport& report, const EvalReport* baseline) {
  out << "model=" << report.model << '\n'
      << "examples=" << report.examples << '\n'
      << "map=" << report.map << '\n'
      << "scored_categories=" << report.scored_categories << '\n'
      << "ap_variant=" << kApVariant << '\n';
  if (baseline) {
    out << "baseline=" << baseline->model << '\n'
        << "baseline_map=" << baseline->map << '\n'
        << "map_delta=" << report.map - baseline->map << '\n';
  }
}

// ---- sensitivity ----------------------------------------------------------

SensitivityTable sensitivity(const Model& model, const Example& example, std::size_t label, Exec exec) {
  if (label >= model.label_count()) {
    throw RangeError("label index " + std::to_string(label) + " out of range (" + std::to_string(model.label_count()) +
                     " labels)");
  }
  const auto& graph = model.graph();
  Rng unused(0);
  RunOptions opts;
  opts.exec = exec;
  const ForwardPass pass = forward(model, example, Mode::eval, 0.0, unused, opts);

  SensitivityTable t;
  t.label = label;
  t.label_node = graph.output_labels()[label];
  t.logit = pass.cls.logits[label];
  t.probability = pass.cls.probs[label];

  Vec seed(model.label_count(), 0.0);
  seed[label] = 1.0;
  GradientBuffer scratch = model.params().make_gradient_buffer(
      model.has_graph() ? model.graph_param_ids() : std::vector<ParamId>{model.classifier_bias()});
  const ExampleGradients g = backward_from_logits(model, pass, seed, nullptr, scratch, false, exec);

  for (std::size_t j = 0; j < graph.detectables().size(); ++j) {
    t.detectors.push_back({j, graph.detectables()[j], example.detections[j], g.d_detections[j]});
  }
  std::stable_sort(t.detectors.begin(), t.detectors.end(), [](const auto& a, const auto& b) {
    return std::abs(a.derivative) > std::abs(b.derivative);
  });

  if (!pass.run) return t;
  const GsnnRun& run = *pass.run;
  const std::size_t hd = model.propagation().dims.hidden;
  t.trace = run.trace;
  t.expanded = run.subgraph.expanded_nodes();
  for (std::size_t s = 0; s < g.graph->d_state.size(); ++s) {
    const Tensor2& d = g.graph->d_state[s];
    std::vector<NodeSensitivity> rows(graph.node_count());
    for (NodeId v = 0; v < graph.node_count(); ++v) {
      rows[v].node = v;
      rows[v].gradient.assign(hd, 0.0);
    }
    for (std::size_t slot = 0; slot < d.rows(); ++slot) {
      auto& r = rows[run.subgraph.node_at(slot)];
      r.active = true;
      std::copy(d.row(slot).begin(), d.row(slot).end(), r.gradient.begin());
      double sq = 0.0;
      for (double x : r.gradient) sq += x * x;
      r.norm = std::sqrt(sq);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.norm > b.norm; });
    t.states.push_back(std::move(rows));
  }
  for (const auto& e : graph.edges()) {
    const bool touches = run.subgraph.status(e.src) == NodeStatus::expanded ||
                         run.subgraph.status(e.dst) == NodeStatus::expanded;
    if (touches) t.edges.push_back({e.src, e.dst, e.type});
  }
  return t;
}

void write_sensitivity(std::ostream& out, const KnowledgeGraph& graph, const SensitivityTable& table,
                       std::size_t top_k) {
  out << "# label\t" << graph.node(table.label_node).name << "\tlogit " << table.logit << "\tprobability "
      << table.probability << '\n';
  out << "# detectors\n" << "rank\tnode\tscore\tderivative\n";
  for (std::size_t i = 0; i < std::min(top_k, table.detectors.size()); ++i) {
    const auto& d = table.detectors[i];
    out << i + 1 << '\t' << graph.node(d.node).name << '\t' << d.score << '\t' << d.derivative << '\n';
  }
  for (std::size_t s = 0; s < table.states.size(); ++s) {
    out << "# state " << s + 1 << "\n" << "rank\tnode\tnorm\n";
    std::size_t shown = 0;
    for (const auto& r : table.states[s]) {
      if (shown == top_k || !r.active) break;
      out << ++shown << '\t' << graph.node(r.node).name << '\t' << r.norm << '\n';
    }
  }
  out << "# expanded subgraph\n" << "src\trelation\tdst\n";
  for (const auto& e : table.edges) {
    out << graph.node(e.src).name << '\t' << graph.edge_type_name(e.type) << '\t' << graph.node(e.dst).name << '\n';
  }
}

// ---- scaling benchmark -----------------------------------------------------

void ScalingConfig::validate() const {
  if (sizes.empty()) throw ConfigError("scaling sweep needs at least one size");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(mean_degree >= 0.0)) throw ConfigError("mean_degree must be >= 0");
  if (edge_types < 1) throw ConfigError("edge_types must be >= 1");
  if (detections < 1) throw ConfigError("detections must be >= 1");
  gsnn.validate();
}

KnowledgeGraph random_graph(std::size_t nodes, double mean_degree, int edge_types, std::size_t detectables, Rng& rng) {
  if (nodes == 0) throw ConfigError("random graph needs at least one node");
  std::vector<ConceptNode> ns(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "n%05zu", i);
    ns[i] = {static_cast<NodeId>(i), buf, NodeKind::object, true, i < detectables};
  }
  std::vector<std::string> types;
  for (int t = 0; t < edge_types; ++t) types.push_back("rel" + std::to_string(t));
  const auto target = nodes > 1 ? static_cast<std::size_t>(std::llround(mean_degree * static_cast<double>(nodes) / 2.0)) : 0;
  std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
  std::uniform_int_distribution<int> pick_type(0, edge_types - 1);
  std::set<std::pair<NodeId, NodeId>> seen;
  std::vector<TypedEdge> edges;
  const std::size_t max_edges = nodes * (nodes - 1) / 2;
  while (edges.size() < std::min(target, max_edges)) {
    auto a = static_cast<NodeId>(pick(rng));
    auto b = static_cast<NodeId>(pick(rng));
    if (a == b || seen.count({std::min(a, b), std::max(a, b)})) continue;
    seen.insert({std::min(a, b), std::max(a, b)});
    edges.push_back({a, b, static_cast<EdgeTypeId>(pick_type(rng))});
  }
  return KnowledgeGraph(std::move(ns), std::move(types), std::move(edges));
}

std::optional<double> growth_exponent(const std::vector<TimingRecord>& records, const std::string& mode,
                                      std::size_t min_nodes) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : records) {
    if (r.mode == mode && !r.capped && r.nodes >= min_nodes && r.mean_seconds > 0.0) {
      pts.emplace_back(std::log(static_cast<double>(r.nodes)), std::log(r.mean_seconds));
    }
  }
  if (pts.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (auto [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

namespace {

TimingRecord summarize(std::size_t nodes, const char* mode, const std::vector<double>& secs, std::size_t active) {
  TimingRecord r;
  r.nodes = nodes;
  r.mode = mode;
  r.trials = static_cast<int>(secs.size());
  r.active_nodes = active;
  r.mean_seconds = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
  double var = 0.0;
  for (double s : secs) var += (s - r.mean_seconds) * (s - r.mean_seconds);
  r.stddev_seconds = secs.size() > 1 ? std::sqrt(var / static_cast<double>(secs.size() - 1)) : 0.0;
  return r;
}

void fill_random(Tensor2& t, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.flat()) v = u(rng);
}

}  // namespace

ScalingReport scaling_benchmark(const ScalingConfig& config, std::ostream* log) {
  config.validate();
  using clock = std::chrono::steady_clock;
  ScalingReport report;
  for (std::size_t n : config.sizes) {
    Rng rng = make_rng(config.seed, "bench-graph", n);
    const KnowledgeGraph g = random_graph(n, config.mean_degree, config.edge_types, std::min(config.detectables, n), rng);
    ParameterSet params;
    const auto prop = PropagationParams::create(params, config.gsnn.dims(g), rng);
    Vec det(g.detectables().size(), 0.1);
    for (std::size_t j = 0; j < std::min(config.detections, det.size()); ++j) det[j] = 0.9;

    {
      std::vector<double> secs;
      std::size_t active = 0;
      for (int t = 0; t < config.trials; ++t) {
        const auto t0 = clock::now();
        RunOptions opts;
        opts.exec = Exec::serial;
        const GsnnRun run = run_gsnn(g, det, prop, params, config.gsnn, opts);
        GsnnSeeds seeds{Tensor2(run.outputs.rows(), run.outputs.cols()), {}};
        Rng srng = make_rng(config.seed, "bench-seed", static_cast<std::uint64_t>(t));
        fill_random(seeds.d_outputs, srng);
        GradientBuffer grads = params.make_gradient_buffer();
        backward_gsnn(run, prop, params, seeds, grads, Exec::serial);
        secs.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        active = run.subgraph.size();
      }
      report.records.push_back(summarize(n, "gsnn", secs, active));
    }

    TimingRecord dense;
    if (config.dense_max_nodes != 0 && n > config.dense_max_nodes) {
      dense.nodes = n;
      dense.mode = "dense";
      dense.capped = true;
      dense.note = "above dense_max_nodes";
    } else {
      try {
        const DenseAdjacency adj = DenseAdjacency::from_graph(g);
        std::vector<double> secs;
        for (int t = 0; t < config.trials; ++t) {
          const auto t0 = clock::now();
          const DenseRun run = run_dense_ggnn(g, det, prop, params, config.gsnn, &adj, Exec::serial);
          Tensor2 seed(run.outputs.rows(), run.outputs.cols());
          Rng srng = make_rng(config.seed, "bench-seed", static_cast<std::uint64_t>(t));
          fill_random(seed, srng);
          GradientBuffer grads = params.make_gradient_buffer();
          backward_dense(run, adj, prop, params, g, seed, grads, Exec::serial);
          secs.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        }
        dense = summarize(n, "dense", secs, n);
      } catch (const std::bad_alloc&) {
        dense = TimingRecord{};
        dense.nodes = n;
        dense.mode = "dense";
        dense.capped = true;
        dense.note = "out of memory";
      }
    }
    report.records.push_back(dense);
    if (log) {
      for (std::size_t k = report.records.size() - 2; k < report.records.size(); ++k) {
        const auto& r = report.records[k];
        *log << "N=" << r.nodes << "\t" << r.mode << "\t"
             << (r.capped ? "capped (" + r.note + ")" : std::to_string(r.mean_seconds) + " s") << '\n';
      }
      log->flush();
    }
  }
  report.dense_exponent = growth_exponent(report.records, "dense", config.fit_min_nodes);
  report.gsnn_exponent = growth_exponent(report.records, "gsnn", config.fit_min_nodes);
  return report;
}

void write_scaling_tsv(std::ostream& out, const ScalingReport& report) {
  out << "nodes\tmode\ttrials\tmean_seconds\tstddev_seconds\tactive_nodes\tstatus\n";
  for (const auto& r : report.records) {
    out << r.nodes << '\t' << r.mode << '\t' << r.trials << '\t' << r.mean_seconds << '\t' << r.stddev_seconds << '\t'
        << r.active_nodes << '\t' << (r.capped ? "capped:" + r.note : std::string("ok")) << '\n';
  }
  out << "# exponent\tdense\t";
  put_optional(out, report.dense_exponent);
  out << "\n# exponent\tgsnn\t";
  put_optional(out, report.gsnn_exponent);
  out << '\n';
}

// ---- low-data sweep ---------------------------------------------------------

std::vector<LowDataRow> lowdata_sweep(const KnowledgeGraph& graph, std::span<const Example> train_data,
                                      std::span<const Example> test, const std::vector<std::size_t>& sizes,
                                      const std::vector<ModelKind>& kinds, const GsnnConfig& gsnn,
                                      const TrainConfig& train_config, std::size_t image_dim, std::ostream* log) {
  if (sizes.empty()) throw ConfigError("low-data sweep needs at least one size");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0 || sizes[i] > train_data.size()) {
      throw ConfigError("sweep size " + std::to_string(sizes[i]) + " outside [1, " + std::to_string(train_data.size()) +
                        "]");
    }
    if (i && sizes[i] >= sizes[i - 1]) throw ConfigError("sweep sizes must be strictly descending");
  }
  std::vector<LowDataRow> rows;
  for (std::size_t n : sizes) {
    for (ModelKind kind : kinds) {
      Model m = Model::create(kind, graph, gsnn, image_dim, train_config.seed);
      train(m, train_data.first(n), train_config, nullptr);
      const EvalReport r = evaluate(m, test, train_config.exec);
      rows.push_back({n, kind, r.map});
      if (log) {
        *log << "size " << n << "\t" << to_string(kind) << "\tmap " << r.map << '\n';
        log->flush();
      }
    }
  }
  return rows;
}

void write_lowdata_tsv(std::ostream& out, const std::vector<LowDataRow>& rows) {
  out << "train_size\tmodel\tmap\n";
  for (const auto& r : rows) out << r.train_size << '\t' << to_string(r.kind) << '\t' << r.map << '\n';
}

}  // namespace gsnn
