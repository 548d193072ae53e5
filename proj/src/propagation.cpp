#include "gsnn/propagation.hpp"

#include <cstdio>

namespace gsnn {

namespace {

std::string channel_name(std::size_t channel) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "prop.msg.%03zu.%s", channel / 2, channel % 2 == 0 ? "in" : "out");
  return buf;
}

struct Spec {
  std::string name;
  std::size_t rows, cols, fan_in;
};

std::vector<Spec> layout(const PropagationDims& d) {
  const std::size_t h = d.hidden;
  std::vector<Spec> s;
  for (std::size_t c = 0; c < 2 * d.edge_types; ++c) s.push_back({channel_name(c), h, h, h});
  s.push_back({"prop.bias", h, 1, h});
  for (const char* n : {"gru.Wz", "gru.Uz", "gru.Wr", "gru.Ur", "gru.W", "gru.U"}) s.push_back({n, h, h, h});
  const std::size_t out_in = h + d.annotation + 1;
  s.push_back({"out.weight", d.out_dim, out_in, out_in});
  s.push_back({"out.bias", d.out_dim, 1, out_in});
  s.push_back({"imp.weight", 1, h + d.annotation, h + d.annotation});
  s.push_back({"imp.bias", 1, 1, h + d.annotation});
  s.push_back({"node_bias", d.node_count, 1, 0});
  return s;
}

void validate_dims(const PropagationDims& d) {
  if (d.hidden == 0 || d.annotation == 0 || d.out_dim == 0) throw ConfigError("propagation sizes must be positive");
  if (d.annotation > d.hidden) throw ConfigError("annotation size exceeds hidden size");
}

PropagationParams from_ids(const PropagationDims& d, const std::vector<ParamId>& ids) {
  PropagationParams p;
  p.dims = d;
  const std::size_t ch = 2 * d.edge_types;
  p.msg.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ch));
  std::size_t k = ch;
  p.msg_bias = ids[k++];
  p.wz = ids[k++];
  p.uz = ids[k++];
  p.wr = ids[k++];
  p.ur = ids[k++];
  p.w = ids[k++];
  p.u = ids[k++];
  p.out_weight = ids[k++];
  p.out_bias = ids[k++];
  p.imp_weight = ids[k++];
  p.imp_bias = ids[k++];
  p.node_bias = ids[k++];
  return p;
}

}  // namespace

PropagationParams PropagationParams::create(ParameterSet& params, const PropagationDims& dims, Rng& rng) {
  validate_dims(dims);
  std::vector<ParamId> ids;
  for (const auto& s : layout(dims)) {
    Tensor2 t(s.rows, s.cols);
    if (s.fan_in > 0) init_uniform_fan_in(t, s.fan_in, rng);
    ids.push_back(params.add(s.name, std::move(t)));
  }
  return from_ids(dims, ids);
}

PropagationParams PropagationParams::bind(const ParameterSet& params, const PropagationDims& dims) {
  validate_dims(dims);
  std::vector<ParamId> ids;
  for (const auto& s : layout(dims)) {
    const ParamId id = params.id(s.name);
    const auto& v = params.value(id);
    if (v.rows() != s.rows || v.cols() != s.cols) {
      throw DimensionError("parameter '" + s.name + "' has shape " + v.shape_string() + ", expected " +
                           shape_string(s.rows, s.cols));
    }
    ids.push_back(id);
  }
  return from_ids(dims, ids);
}

std::vector<ParamId> PropagationParams::ids() const {
  std::vector<ParamId> out(msg.begin(), msg.end());
  out.insert(out.end(), {msg_bias, wz, uz, wr, ur, w, u, out_weight, out_bias, imp_weight, imp_bias, node_bias});
  return out;
}

GruWeights PropagationParams::gru(const ParameterSet& p) const {
  return {p.value(wz), p.value(uz), p.value(wr), p.value(ur), p.value(w), p.value(u)};
}

GruGradRefs PropagationParams::gru_grads(GradientBuffer& g) const {
  return {g.at(wz), g.at(uz), g.at(wr), g.at(ur), g.at(w), g.at(u)};
}

MessageWeights PropagationParams::message_weights(const ParameterSet& p) const {
  MessageWeights mw;
  for (ParamId id : msg) mw.channel.push_back(&p.value(id));
  mw.bias = p.value(msg_bias).flat();
  return mw;
}

MessageGrads PropagationParams::message_grads(GradientBuffer& g) const {
  MessageGrads mg;
  for (ParamId id : msg) mg.channel.push_back(&g.at(id));
  mg.bias = g.at(msg_bias).flat();
  return mg;
}

Vec init_hidden(std::span<const double> annotation, std::size_t hidden_dim) {
  if (annotation.size() > hidden_dim) {
    throw DimensionError("annotation of length " + std::to_string(annotation.size()) + " exceeds hidden size " +
                         std::to_string(hidden_dim));
  }
  Vec h(hidden_dim, 0.0);
  std::copy(annotation.begin(), annotation.end(), h.begin());
  return h;
}

Tensor2 aggregate_messages(const ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params,
                           Exec exec) {
  const Tensor2 h = subgraph.hidden_matrix();
  Tensor2 a(h.rows(), h.cols());
  aggregate(subgraph.topology(), h, prop.message_weights(params), a, exec);
  return a;
}

void propagate_step(ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params, Exec exec,
                    StepTape* tape) {
  StepTape local;
  StepTape& t = tape ? *tape : local;
  t.topo = subgraph.topology();
  t.h_in = subgraph.hidden_matrix();
  t.msg = Tensor2(t.h_in.rows(), t.h_in.cols());
  t.h_out = Tensor2(t.h_in.rows(), t.h_in.cols());
  aggregate(t.topo, t.h_in, prop.message_weights(params), t.msg, exec);
  check_finite(t.msg.flat(), "propagation.messages");
  gru_rows(t.h_in, t.msg, prop.gru(params), t.h_out, t.gru, exec);
  subgraph.set_hidden_matrix(t.h_out);
}

void propagate_step_backward(const StepTape& tape, const PropagationParams& prop, const ParameterSet& params,
                             const Tensor2& dh_out, Tensor2& dh_in, GradientBuffer& grads, Exec exec) {
  const std::size_t rows = tape.h_in.rows();
  if (dh_out.rows() != rows || dh_in.rows() != rows) throw DimensionError("step backward: row count mismatch");
  Tensor2 da(rows, tape.h_in.cols());
  const auto gw = prop.gru(params);
  auto gg = prop.gru_grads(grads);
  for (std::size_t i = 0; i < rows; ++i) {
    gru_gate_backward(tape.h_in.row(i), tape.msg.row(i), tape.gru[i], dh_out.row(i), gw, gg, dh_in.row(i), da.row(i));
  }
  auto mg = prop.message_grads(grads);
  aggregate_backward(tape.topo, tape.h_in, da, prop.message_weights(params), dh_in, mg, exec);
}

namespace {

Vec output_input(std::span<const double> h, std::span<const double> x, double n, const PropagationDims& d) {
  if (h.size() != d.hidden || x.size() != d.annotation) throw DimensionError("output net: input size mismatch");
  Vec in;
  in.reserve(d.hidden + d.annotation + 1);
  in.insert(in.end(), h.begin(), h.end());
  in.insert(in.end(), x.begin(), x.end());
  in.push_back(n);
  return in;
}

}  // namespace

Vec node_output(std::span<const double> h, std::span<const double> x, double node_bias, const PropagationParams& prop,
                const ParameterSet& params) {
  const Vec in = output_input(h, x, node_bias, prop.dims);
  return sigmoid(linear_forward(in, params.value(prop.out_weight), params.value(prop.out_bias).flat()));
}

NodeInputGrads node_output_backward(std::span<const double> h, std::span<const double> x, double node_bias,
                                    std::span<const double> output, std::span<const double> d_output,
                                    const PropagationParams& prop, const ParameterSet& params, GradientBuffer& grads) {
  const Vec in = output_input(h, x, node_bias, prop.dims);
  const Vec dz = sigmoid_backward(output, d_output);
  outer_acc(grads.at(prop.out_weight), dz, in);
  auto db = grads.at(prop.out_bias).flat();
  for (std::size_t i = 0; i < dz.size(); ++i) db[i] += dz[i];
  Vec din(in.size(), 0.0);
  matTvec_acc(params.value(prop.out_weight), dz, din);
  const std::size_t hd = prop.dims.hidden;
  const std::size_t ad = prop.dims.annotation;
  NodeInputGrads g;
  g.dh.assign(din.begin(), din.begin() + static_cast<std::ptrdiff_t>(hd));
  g.dx.assign(din.begin() + static_cast<std::ptrdiff_t>(hd), din.begin() + static_cast<std::ptrdiff_t>(hd + ad));
  g.dn = din.back();
  return g;
}

double node_importance(std::span<const double> h, std::span<const double> x, const PropagationParams& prop,
                       const ParameterSet& params) {
  if (h.size() != prop.dims.hidden || x.size() != prop.dims.annotation) {
    throw DimensionError("importance net: input size mismatch");
  }
  const Vec in = concat(h, x);
  const auto& w = params.value(prop.imp_weight);
  double z = params.value(prop.imp_bias)(0, 0);
  for (std::size_t i = 0; i < in.size(); ++i) z += w(0, i) * in[i];
  return sigmoid(z);
}

NodeInputGrads node_importance_backward(std::span<const double> h, std::span<const double> x, double score,
                                        double d_score, const PropagationParams& prop, const ParameterSet& params,
                                        GradientBuffer& grads) {
  const Vec in = concat(h, x);
  const double dz = d_score * score * (1.0 - score);
  const auto& w = params.value(prop.imp_weight);
  auto& gw = grads.at(prop.imp_weight);
  for (std::size_t i = 0; i < in.size(); ++i) gw(0, i) += dz * in[i];
  grads.at(prop.imp_bias)(0, 0) += dz;
  NodeInputGrads g;
  g.dh.resize(h.size());
  g.dx.resize(x.size());
  for (std::size_t i = 0; i < h.size(); ++i) g.dh[i] = dz * w(0, i);
  for (std::size_t i = 0; i < x.size(); ++i) g.dx[i] = dz * w(0, h.size() + i);
  return g;
}

}  // namespace gsnn
