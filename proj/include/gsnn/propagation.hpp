#pragma once

#include <vector>

#include "gsnn/kernels.hpp"
#include "gsnn/params.hpp"
#include "gsnn/subgraph.hpp"

namespace gsnn {

struct PropagationDims {
  std::size_t hidden = 10;
  std::size_t annotation = 1;
  std::size_t out_dim = 5;
  std::size_t edge_types = 1;
  std::size_t node_count = 1;
};

/// Handles to the propagation, output and importance networks inside a
/// ParameterSet. Message matrices are per channel (edge type x direction).
///
/// Parameter names:
///   prop.msg.<type>.in / prop.msg.<type>.out   hidden x hidden
///   prop.bias                                  hidden x 1
///   gru.{Wz,Uz,Wr,Ur,W,U}                      hidden x hidden
///   out.weight  out_dim x (hidden + annotation + 1), out.bias out_dim x 1
///   imp.weight  1 x (hidden + annotation),           imp.bias 1 x 1
///   node_bias   node_count x 1
struct PropagationParams {
  PropagationDims dims;
  std::vector<ParamId> msg;  // indexed by channel
  ParamId msg_bias = 0;
  ParamId wz = 0, uz = 0, wr = 0, ur = 0, w = 0, u = 0;
  ParamId out_weight = 0, out_bias = 0;
  ParamId imp_weight = 0, imp_bias = 0;
  ParamId node_bias = 0;

  // Registers freshly initialised tensors (uniform +-1/sqrt(fan_in); node bias zero).
  static PropagationParams create(ParameterSet& params, const PropagationDims& dims, Rng& rng);
  // Looks up existing tensors by name and checks their shapes.
  static PropagationParams bind(const ParameterSet& params, const PropagationDims& dims);

  std::size_t channels() const noexcept { return msg.size(); }
  std::vector<ParamId> ids() const;

  GruWeights gru(const ParameterSet& params) const;
  GruGradRefs gru_grads(GradientBuffer& g) const;
  MessageWeights message_weights(const ParameterSet& params) const;
  MessageGrads message_grads(GradientBuffer& g) const;
};

/// h = [x, 0, ..., 0] of length hidden_dim.
Vec init_hidden(std::span<const double> annotation, std::size_t hidden_dim);

/// a_v for every active node of the subgraph (rows in slot order).
Tensor2 aggregate_messages(const ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params,
                           Exec exec = Exec::parallel);

struct StepTape {
  LocalTopology topo;
  Tensor2 h_in;
  Tensor2 msg;
  Tensor2 h_out;
  std::vector<GruCache> gru;
};

/// One synchronous update of every active node from the pre-step snapshot.
void propagate_step(ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params,
                    Exec exec = Exec::parallel, StepTape* tape = nullptr);

// Backward through a recorded step. Accumulates dh_in (rows of tape.h_in) and
// parameter gradients; dh_out is consumed.
void propagate_step_backward(const StepTape& tape, const PropagationParams& prop, const ParameterSet& params,
                             const Tensor2& dh_out, Tensor2& dh_in, GradientBuffer& grads, Exec exec = Exec::parallel);

/// Output network: sigmoid(W [h, x, n_v] + b).
Vec node_output(std::span<const double> h, std::span<const double> x, double node_bias, const PropagationParams& prop,
                const ParameterSet& params);

struct NodeInputGrads {
  Vec dh;
  Vec dx;
  double dn = 0.0;
};

NodeInputGrads node_output_backward(std::span<const double> h, std::span<const double> x, double node_bias,
                                    std::span<const double> output, std::span<const double> d_output,
                                    const PropagationParams& prop, const ParameterSet& params, GradientBuffer& grads);

/// Importance network: sigmoid(w . [h, x] + b).
double node_importance(std::span<const double> h, std::span<const double> x, const PropagationParams& prop,
                       const ParameterSet& params);

NodeInputGrads node_importance_backward(std::span<const double> h, std::span<const double> x, double score,
                                        double d_score, const PropagationParams& prop, const ParameterSet& params,
                                        GradientBuffer& grads);

}  // namespace gsnn
