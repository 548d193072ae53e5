#pragma once

#include <optional>
#include <vector>

#include "gsnn/propagation.hpp"

namespace gsnn {

struct GsnnConfig {
  double detection_threshold = 0.5;
  int expand_per_step = 5;   // P
  int steps = 3;             // T propagation steps
  int hidden_dim = 10;
  int out_dim = 5;
  double importance_discount = 0.3;  // gamma
  int annotation_dim = 1;
  // Expansion happens after steps 1..rounds; -1 means T-1.
  int expansion_rounds = -1;
  // Annotate detected nodes with 1 instead of the raw score.
  bool binary_annotation = false;
  double importance_weight = 1.0;
  int importance_max_hops = 4;
  // Label BCE summed over labels instead of averaged.
  bool sum_label_loss = true;

  void validate() const;
  int rounds() const;
  PropagationDims dims(const KnowledgeGraph& graph) const;
};

/// Detections that seed the subgraph: indices into graph.detectables() with
/// score >= threshold, or the single best one when none pass.
std::vector<std::size_t> select_detections(std::span<const double> detections, double threshold);

/// Detected nodes become active and expanded (annotation = score, state per
/// init_hidden); their neighbours become active with zero annotation/state.
ActiveSubgraph initialize_subgraph(const KnowledgeGraph& graph, std::span<const double> detections,
                                   const GsnnConfig& config);

struct RoundTape {
  std::size_t count = 0;  // active slots scored this round
  Vec scores;             // importance per slot
  std::vector<NodeId> expanded;
};

/// Scores every active node, expands the top P never-expanded ones (ties to
/// the lower node id) and activates their neighbours. `forced` replays a
/// recorded choice instead of ranking.
RoundTape expansion_round(ActiveSubgraph& subgraph, const PropagationParams& prop, const ParameterSet& params,
                          const GsnnConfig& config, const std::vector<NodeId>* forced = nullptr);

/// Discrete choices of a run; replaying it pins the subgraph during
/// finite-difference checks.
struct ExpansionTrace {
  std::vector<NodeId> detected;
  std::vector<std::vector<NodeId>> rounds;

  friend bool operator==(const ExpansionTrace&, const ExpansionTrace&) = default;
};

/// Additive perturbation of one hidden component; state s is the input of
/// step s+1 (s = T is the final state).
struct StateProbe {
  std::size_t state = 0;
  NodeId node = 0;
  std::size_t component = 0;
  double delta = 0.0;
};

struct RunOptions {
  const ExpansionTrace* replay = nullptr;
  std::optional<StateProbe> probe;
  Exec exec = Exec::parallel;
};

struct GsnnRun {
  ActiveSubgraph subgraph;
  std::vector<StepTape> steps;
  std::vector<RoundTape> rounds;
  Tensor2 outputs;  // final slots x out_dim
  ExpansionTrace trace;
  std::vector<std::size_t> detected;  // detection indices, one per leading slot
};

GsnnRun run_gsnn(const KnowledgeGraph& graph, std::span<const double> detections, const PropagationParams& prop,
                 const ParameterSet& params, const GsnnConfig& config, const RunOptions& options = {});

struct GsnnSeeds {
  Tensor2 d_outputs;                  // final slots x out_dim
  std::vector<Vec> d_importance;      // per round, per scored slot
};

struct GsnnGradients {
  Tensor2 d_annotation;               // final slots x annotation_dim
  std::vector<Tensor2> d_state;       // d_state[s]: rows active at state s
};

GsnnGradients backward_gsnn(const GsnnRun& run, const PropagationParams& prop, const ParameterSet& params,
                            const GsnnSeeds& seeds, GradientBuffer& grads, Exec exec = Exec::parallel);

/// gamma^d with d the undirected hop distance to the nearest label node, 0
/// past max_hops. Indexed by node id.
Vec importance_targets(const KnowledgeGraph& graph, std::span<const NodeId> label_nodes, double gamma, int max_hops);

// ---- dense baseline -----------------------------------------------------

struct DenseRun {
  Tensor2 annotation;  // N x annotation_dim
  std::vector<StepTape> steps;
  Tensor2 outputs;     // N x out_dim
};

/// Every node active from the first step, messages through the dense
/// adjacency. Builds the adjacency when none is given.
DenseRun run_dense_ggnn(const KnowledgeGraph& graph, std::span<const double> detections, const PropagationParams& prop,
                        const ParameterSet& params, const GsnnConfig& config, const DenseAdjacency* adjacency = nullptr,
                        Exec exec = Exec::parallel);

GsnnGradients backward_dense(const DenseRun& run, const DenseAdjacency& adjacency, const PropagationParams& prop,
                             const ParameterSet& params, const KnowledgeGraph& graph, const Tensor2& d_outputs,
                             GradientBuffer& grads, Exec exec = Exec::parallel);

}  // namespace gsnn
