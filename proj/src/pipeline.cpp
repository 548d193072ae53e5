#include "gsnn/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

namespace gsnn {

// ---- dataset file -------------------------------------------------------

namespace {

constexpr std::string_view kDataMagic = "GSNN-DATA v1";

void write_number(std::ostream& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, end - buf);
}

void write_list(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.put(',');
    write_number(out, values[i]);
  }
}

Vec parse_list(std::string_view text, std::size_t expected, std::size_t line, const char* what) {
  Vec out;
  out.reserve(expected);
  if (text.empty()) {
    if (expected != 0) throw ParseError(line, std::string("empty ") + what + " field");
    return out;
  }
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = text.find(',', pos);
    const std::string_view tok = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
      throw ParseError(line, std::string("bad number '") + std::string(tok) + "' in " + what);
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (out.size() != expected) {
    throw ParseError(line, std::string(what) + " has " + std::to_string(out.size()) + " values, expected " +
                               std::to_string(expected));
  }
  return out;
}

std::size_t parse_count(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(line, "bad header count");
  return v;
}

}  // namespace

void write_dataset_header(std::ostream& out, std::size_t detection_count, std::size_t image_dim, std::size_t label_count) {
  out << kDataMagic << '\t' << detection_count << '\t' << image_dim << '\t' << label_count << '\n';
}

void write_example(std::ostream& out, const Example& example) {
  write_list(out, example.detections);
  out.put('|');
  write_list(out, example.image_feature);
  out.put('|');
  for (auto b : example.labels) out.put(b ? '1' : '0');
  out.put('\n');
}

void write_dataset(std::ostream& out, const Dataset& data) {
  write_dataset_header(out, data.detection_count, data.image_dim, data.label_count);
  for (const auto& e : data.examples) write_example(out, e);
}

Dataset read_dataset(std::istream& in) {
  std::string text;
  std::size_t line = 1;
  if (!std::getline(in, text)) throw ParseError(line, "missing dataset header");
  Dataset data;
  {
    std::vector<std::string_view> f;
    std::string_view rest = text;
    while (true) {
      const auto tab = rest.find('\t');
      f.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (f.empty() || f[0] != kDataMagic) throw ParseError(line, "unsupported dataset version '" + std::string(f[0]) + "'");
    if (f.size() != 4) throw ParseError(line, "dataset header needs 4 fields");
    data.detection_count = parse_count(f[1], line);
    data.image_dim = parse_count(f[2], line);
    data.label_count = parse_count(f[3], line);
  }
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const auto a = text.find('|');
    const auto b = a == std::string::npos ? a : text.find('|', a + 1);
    if (b == std::string::npos) throw ParseError(line, "expected 3 '|'-separated fields");
    const std::string_view sv = text;
    Example e;
    e.detections = parse_list(sv.substr(0, a), data.detection_count, line, "detections");
    e.image_feature = parse_list(sv.substr(a + 1, b - a - 1), data.image_dim, line, "image feature");
    const std::string_view bits = sv.substr(b + 1);
    if (bits.size() != data.label_count) {
      throw ParseError(line, "label field has " + std::to_string(bits.size()) + " bits, expected " +
                                 std::to_string(data.label_count));
    }
    for (char c : bits) {
      if (c != '0' && c != '1') throw ParseError(line, "label bits must be 0 or 1");
      e.labels.push_back(c == '1');
    }
    for (double d : e.detections) {
      if (!(d >= 0.0 && d <= 1.0)) throw ParseError(line, "detection score outside [0,1]");
    }
    data.examples.push_back(std::move(e));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

// ---- model --------------------------------------------------------------

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gsnn: return "gsnn";
    case ModelKind::feature_only: return "feature_only";
    case ModelKind::feature_det: return "feature_det";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "gsnn") return ModelKind::gsnn;
  if (text == "feature_only" || text == "feature-only") return ModelKind::feature_only;
  if (text == "feature_det" || text == "feature-det") return ModelKind::feature_det;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (gsnn, feature_only, feature_det)");
}

namespace {

constexpr const char* kLayout = "cls.layout";

}  // namespace

std::size_t Model::graph_block() const noexcept {
  return kind_ == ModelKind::gsnn ? graph_->node_count() * static_cast<std::size_t>(config_.out_dim) : 0;
}

std::size_t Model::feature_dim() const noexcept {
  return graph_block() + image_dim_ + (kind_ == ModelKind::feature_only ? 0 : detection_count());
}

const PropagationParams& Model::propagation() const {
  if (!prop_) throw StateError("model '" + std::string(to_string(kind_)) + "' has no graph network");
  return *prop_;
}

std::vector<ParamId> Model::graph_param_ids() const { return prop_ ? prop_->ids() : std::vector<ParamId>{}; }

void Model::add_classifier(Rng* rng) {
  const std::size_t f = feature_dim();
  Tensor2 w(label_count(), f);
  Tensor2 b(label_count(), 1);
  if (rng) init_uniform_fan_in(w, f, *rng);
  cls_w_ = params_.add("cls.weight", std::move(w));
  cls_b_ = params_.add("cls.bias", std::move(b));
  // Bookkeeping only, never optimised: [graph block, image dim, detections].
  params_.add(kLayout, Tensor2(1, 3, {static_cast<double>(graph_block()), static_cast<double>(image_dim_),
                                      static_cast<double>(f - graph_block() - image_dim_)}));
}

Model Model::create(ModelKind kind, const KnowledgeGraph& graph, const GsnnConfig& config, std::size_t image_dim,
                    std::uint64_t seed) {
  config.validate();
  if (graph.output_labels().empty()) throw ConfigError("graph has no output labels");
  Model m(kind, graph, config, image_dim);
  Rng rng = make_rng(seed, "init");
  if (kind == ModelKind::gsnn) m.prop_ = PropagationParams::create(m.params_, config.dims(graph), rng);
  m.add_classifier(&rng);
  return m;
}

Model Model::from_checkpoint(const ParameterSet& checkpoint, const KnowledgeGraph& graph, const GsnnConfig& config) {
  config.validate();
  const auto layout_id = checkpoint.find(kLayout);
  if (!layout_id) throw StateError("checkpoint has no classifier layout record");
  const auto& layout = checkpoint.value(*layout_id);
  if (layout.rows() != 1 || layout.cols() != 3) throw DimensionError("malformed classifier layout record");
  const auto block = static_cast<std::size_t>(layout(0, 0));
  const auto image_dim = static_cast<std::size_t>(layout(0, 1));
  const auto dets = static_cast<std::size_t>(layout(0, 2));
  ModelKind kind = ModelKind::feature_only;
  if (block > 0) {
    kind = ModelKind::gsnn;
  } else if (dets > 0) {
    kind = ModelKind::feature_det;
  }
  Model m(kind, graph, config, image_dim);
  if (m.graph_block() != block) {
    throw DimensionError("checkpoint graph block " + std::to_string(block) + " does not match graph/config (" +
                         std::to_string(m.graph_block()) + ")");
  }
  if (dets != 0 && dets != m.detection_count()) {
    throw DimensionError("checkpoint expects " + std::to_string(dets) + " detections, graph has " +
                         std::to_string(m.detection_count()));
  }
  if (kind == ModelKind::gsnn) {
    Rng unused(0);
    m.prop_ = PropagationParams::create(m.params_, config.dims(graph), unused);
  }
  m.add_classifier(nullptr);
  m.params_.assign_from(checkpoint, true);
  if (m.params_.size() != checkpoint.size()) throw StateError("checkpoint has parameters this model does not use");
  return m;
}

// ---- forward ------------------------------------------------------------

Vec assemble_features(const KnowledgeGraph& graph, std::span<const NodeId> nodes, const Tensor2& node_outputs,
                      std::span<const double> image_feature, std::span<const double> detections) {
  if (node_outputs.rows() != nodes.size()) throw DimensionError("one output row per active node expected");
  const std::size_t od = node_outputs.cols();
  const std::size_t block = graph.node_count() * od;
  Vec f(block + image_feature.size() + detections.size(), 0.0);
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    if (nodes[s] >= graph.node_count()) throw RangeError("output for unknown node " + std::to_string(nodes[s]));
    auto row = node_outputs.row(s);
    std::copy(row.begin(), row.end(), f.begin() + static_cast<std::ptrdiff_t>(nodes[s] * od));
  }
  std::copy(image_feature.begin(), image_feature.end(), f.begin() + static_cast<std::ptrdiff_t>(block));
  std::copy(detections.begin(), detections.end(), f.begin() + static_cast<std::ptrdiff_t>(block + image_feature.size()));
  return f;
}

ClassifierPass classify(std::span<const double> features, const Tensor2& weight, std::span<const double> bias,
                        double dropout, Mode mode, Rng& rng) {
  if (features.size() != weight.cols()) {
    throw DimensionError("classifier expects " + std::to_string(weight.cols()) + " features, got " +
                         std::to_string(features.size()));
  }
  ClassifierPass p;
  auto d = dropout_forward(features, dropout, mode, rng);
  p.input = std::move(d.y);
  p.mask = std::move(d.mask);
  p.logits = linear_forward(p.input, weight, bias);
  check_finite(p.logits, "classifier.logits");
  p.probs = sigmoid(p.logits);
  return p;
}

namespace {

void check_example(const Model& model, const Example& e) {
  if (e.image_feature.size() != model.image_dim()) {
    throw DimensionError("image feature has " + std::to_string(e.image_feature.size()) + " values, model expects " +
                         std::to_string(model.image_dim()));
  }
  if (e.detections.size() != model.detection_count()) {
    throw DimensionError("example has " + std::to_string(e.detections.size()) + " detections, graph has " +
                         std::to_string(model.detection_count()));
  }
  if (!e.labels.empty() && e.labels.size() != model.label_count()) {
    throw DimensionError("example has " + std::to_string(e.labels.size()) + " labels, graph has " +
                         std::to_string(model.label_count()));
  }
}

}  // namespace

ForwardPass forward(const Model& model, const Example& example, Mode mode, double dropout, Rng& rng,
                    const RunOptions& options) {
  check_example(model, example);
  ForwardPass pass;
  const auto& p = model.params();
  switch (model.kind()) {
    case ModelKind::gsnn: {
      pass.run = run_gsnn(model.graph(), example.detections, model.propagation(), p, model.config(), options);
      pass.features = assemble_features(model.graph(), pass.run->subgraph.active_nodes(), pass.run->outputs,
                                        example.image_feature, example.detections);
      break;
    }
    case ModelKind::feature_det:
      pass.features = concat(example.image_feature, example.detections);
      break;
    case ModelKind::feature_only:
      pass.features = example.image_feature;
      break;
  }
  pass.cls = classify(pass.features, p.value(model.classifier_weight()), p.value(model.classifier_bias()).flat(),
                      dropout, mode, rng);
  return pass;
}

Vec predict(const Model& model, const Example& example, Exec exec) {
  Rng unused(0);
  RunOptions opts;
  opts.exec = exec;
  return forward(model, example, Mode::eval, 0.0, unused, opts).cls.probs;
}

// ---- loss and backward ---------------------------------------------------

namespace {

Vec label_targets(const Example& e) { return Vec(e.labels.begin(), e.labels.end()); }

std::vector<NodeId> positive_nodes(const Model& model, const Example& e) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < e.labels.size(); ++i) {
    if (e.labels[i]) out.push_back(model.graph().output_labels()[i]);
  }
  return out;
}

Vec round_targets(const Vec& by_node, const GsnnRun& run, const RoundTape& round) {
  Vec t(round.count);
  for (std::size_t s = 0; s < round.count; ++s) t[s] = by_node[run.subgraph.node_at(s)];
  return t;
}

double label_scale(const Model& model) {
  return model.config().sum_label_loss ? static_cast<double>(model.label_count()) : 1.0;
}

}  // namespace

LossBreakdown example_loss(const Model& model, const ForwardPass& pass, const Example& example) {
  if (example.labels.size() != model.label_count()) throw DimensionError("example labels do not match the model");
  LossBreakdown l;
  l.bce = label_scale(model) * bce_loss(pass.cls.probs, label_targets(example));
  if (pass.run && !pass.run->rounds.empty() && model.config().importance_weight > 0.0) {
    const auto& c = model.config();
    const Vec by_node = importance_targets(model.graph(), positive_nodes(model, example), c.importance_discount,
                                           c.importance_max_hops);
    for (const auto& r : pass.run->rounds) l.importance += mse_loss(r.scores, round_targets(by_node, *pass.run, r));
    l.importance *= c.importance_weight;
  }
  return l;
}

ExampleGradients backward_from_logits(const Model& model, const ForwardPass& pass, std::span<const double> d_logits,
                                      const std::vector<Vec>* d_importance, GradientBuffer& grads,
                                      bool include_classifier, Exec exec) {
  const auto& p = model.params();
  const Tensor2& w = p.value(model.classifier_weight());
  if (d_logits.size() != w.rows()) throw DimensionError("logit gradient length mismatch");
  ExampleGradients g;
  g.d_logits.assign(d_logits.begin(), d_logits.end());
  if (include_classifier) {
    outer_acc(grads.at(model.classifier_weight()), d_logits, pass.cls.input);
    auto gb = grads.at(model.classifier_bias()).flat();
    for (std::size_t i = 0; i < d_logits.size(); ++i) gb[i] += d_logits[i];
  }
  Vec d_input(w.cols(), 0.0);
  matTvec_acc(w, d_logits, d_input);
  g.d_features = dropout_backward(pass.cls.mask, d_input);

  const std::size_t block = model.graph_block();
  const std::size_t dets = model.kind() == ModelKind::feature_only ? 0 : model.detection_count();
  g.d_detections.assign(model.detection_count(), 0.0);
  const std::size_t det_off = block + model.image_dim();
  for (std::size_t j = 0; j < dets; ++j) g.d_detections[j] = g.d_features[det_off + j];

  if (pass.run) {
    const GsnnRun& run = *pass.run;
    const auto& prop = model.propagation();
    const std::size_t od = prop.dims.out_dim;
    GsnnSeeds seeds;
    seeds.d_outputs = Tensor2(run.subgraph.size(), od);
    for (std::size_t s = 0; s < run.subgraph.size(); ++s) {
      const std::size_t off = run.subgraph.node_at(s) * od;
      std::copy_n(g.d_features.begin() + static_cast<std::ptrdiff_t>(off), od, seeds.d_outputs.row(s).begin());
    }
    if (d_importance) seeds.d_importance = *d_importance;
    g.graph = backward_gsnn(run, prop, p, seeds, grads, exec);
    if (!model.config().binary_annotation) {
      // Detected node k sits in slot k with annotation[0] = its score.
      for (std::size_t k = 0; k < run.detected.size(); ++k) g.d_detections[run.detected[k]] += g.graph->d_annotation(k, 0);
    }
  }
  return g;
}

ExampleGradients backward_example(const Model& model, const ForwardPass& pass, const Example& example,
                                  GradientBuffer& grads, bool include_classifier, Exec exec) {
  const Vec t = label_targets(example);
  Vec d_logits = sigmoid_backward(pass.cls.probs, bce_backward(pass.cls.probs, t));
  const double scale = label_scale(model);
  for (double& v : d_logits) v *= scale;
  std::vector<Vec> d_imp;
  const auto& c = model.config();
  if (pass.run && !pass.run->rounds.empty() && c.importance_weight > 0.0) {
    const Vec by_node =
        importance_targets(model.graph(), positive_nodes(model, example), c.importance_discount, c.importance_max_hops);
    for (const auto& r : pass.run->rounds) {
      Vec d = mse_backward(r.scores, round_targets(by_node, *pass.run, r));
      for (double& v : d) v *= c.importance_weight;
      d_imp.push_back(std::move(d));
    }
  }
  return backward_from_logits(model, pass, d_logits, &d_imp, grads, include_classifier, exec);
}

// ---- training -----------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  graph_optimizer.validate();
  classifier_optimizer.validate();
}

LossBreakdown train_step(Model& model, const BatchRef& batch, const TrainConfig& config) {
  const std::size_t n = batch.examples.size();
  if (n == 0) throw ConfigError("empty batch");
  const auto graph_ids = model.graph_param_ids();
  const auto& params = model.params();

  struct Slot {
    LossBreakdown loss;
    Vec input;
    Vec d_logits;
    GradientBuffer grads;
  };
  std::vector<Slot> slots(n);
  parallel_for(n, config.exec, [&](std::size_t b) {
    const Example& e = *batch.examples[b];
    Rng rng = make_rng(config.seed, "dropout", batch.first_index + b);
    RunOptions opts;
    opts.exec = Exec::serial;
    const ForwardPass pass = forward(model, e, Mode::train, config.dropout, rng, opts);
    Slot& s = slots[b];
    s.loss = example_loss(model, pass, e);
    if (!std::isfinite(s.loss.total())) {
      throw NumericError("train.loss", "non-finite loss (bce " + std::to_string(s.loss.bce) + ", importance " +
                                           std::to_string(s.loss.importance) + ") at epoch " +
                                           std::to_string(batch.epoch) + ", example " +
                                           std::to_string(batch.first_index + b));
    }
    s.grads = params.make_gradient_buffer(graph_ids.empty() ? std::vector<ParamId>{model.classifier_bias()} : graph_ids);
    auto g = backward_example(model, pass, e, s.grads, false, Exec::serial);
    s.d_logits = std::move(g.d_logits);
    s.input = pass.cls.input;
  });

  ParameterSet& ps = model.params();
  ps.zero_grad();
  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(n);
  for (const Slot& s : slots) {
    if (!graph_ids.empty()) ps.accumulate(s.grads);
    mean.bce += s.loss.bce * inv;
    mean.importance += s.loss.importance * inv;
  }
  for (ParamId id : graph_ids) {
    for (double& v : ps.grad(id).flat()) v *= inv;
  }

  Tensor2& gw = ps.grad(model.classifier_weight());
  Tensor2& gb = ps.grad(model.classifier_bias());
  parallel_for(gw.rows(), config.exec, [&](std::size_t l) {
    auto row = gw.row(l);
    double bias = 0.0;
    for (const Slot& s : slots) {
      const double d = s.d_logits[l] * inv;
      if (d == 0.0) continue;
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += d * s.input[k];
      bias += d;
    }
    gb(l, 0) = bias;
  });

  if (!graph_ids.empty()) optimizer_step(ps, config.graph_optimizer, batch.epoch, graph_ids);
  optimizer_step(ps, config.classifier_optimizer, batch.epoch, model.classifier_param_ids());
  return mean;
}

std::vector<EpochLog> train(Model& model, std::span<const Example> data, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (data.empty()) throw ConfigError("no training examples");
  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(data.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::uint64_t position = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochLog el;
    el.epoch = epoch + 1;
    std::vector<const Example*> batch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&data[order[i]]);
      const LossBreakdown l = train_step(model, {batch, epoch, position}, config);
      position += batch.size();
      const double w = static_cast<double>(batch.size()) / static_cast<double>(data.size());
      el.mean_loss.bce += l.bce * w;
      el.mean_loss.importance += l.importance * w;
    }
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) {
      *log << "epoch " << el.epoch << "\tbce " << el.mean_loss.bce << "\timportance " << el.mean_loss.importance
           << "\tlr " << learning_rate_at(config.classifier_optimizer, epoch) << "\tseconds " << el.seconds << '\n';
      log->flush();
    }
    logs.push_back(el);
  }
  return logs;
}

}  // namespace gsnn
