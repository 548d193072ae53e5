#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "gsnn/kernels.hpp"
#include "gsnn/kgraph.hpp"

namespace gsnn {

enum class NodeStatus { inactive, active, expanded };

/// Per-example working set: which graph nodes hold state, which have had
/// their neighbourhood pulled in, and the state itself. Rows are slots in
/// activation order; a node keeps its slot for the rest of the run.
class ActiveSubgraph {
 public:
  ActiveSubgraph(const KnowledgeGraph& graph, std::size_t hidden_dim, std::size_t annotation_dim);

  const KnowledgeGraph& graph() const noexcept { return *graph_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t annotation_dim() const noexcept { return annotation_dim_; }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const NodeId> active_nodes() const noexcept { return nodes_; }
  NodeId node_at(std::size_t slot) const { return nodes_.at(slot); }
  std::optional<std::size_t> slot_of(NodeId node) const;
  NodeStatus status(NodeId node) const;
  std::vector<NodeId> expanded_nodes() const;
  std::size_t expanded_count() const noexcept { return expanded_count_; }

  // Adds a node with the given annotation and hidden state. No-op (returns
  // false) when the node is already active.
  bool activate(NodeId node, std::span<const double> annotation, std::span<const double> hidden);
  // Marks an active node expanded and activates its neighbours with zero
  // annotation and state. Returns the newly activated nodes.
  std::vector<NodeId> expand(NodeId node);

  std::span<double> hidden(std::size_t slot);
  std::span<const double> hidden(std::size_t slot) const;
  std::span<const double> annotation(std::size_t slot) const;

  Tensor2 hidden_matrix() const;
  void set_hidden_matrix(const Tensor2& h);
  Tensor2 annotation_matrix() const;

  // Every graph edge whose endpoints are both active, in slot coordinates.
  LocalTopology topology() const;

 private:
  const KnowledgeGraph* graph_;
  std::size_t hidden_dim_;
  std::size_t annotation_dim_;
  std::vector<NodeId> nodes_;
  std::vector<bool> expanded_;
  std::size_t expanded_count_ = 0;
  std::unordered_map<NodeId, std::size_t> slots_;
  std::vector<double> hidden_;
  std::vector<double> annotation_;
};

}  // namespace gsnn
