#include "gsnn/subgraph.hpp"

#include <algorithm>

namespace gsnn {

ActiveSubgraph::ActiveSubgraph(const KnowledgeGraph& graph, std::size_t hidden_dim, std::size_t annotation_dim)
    : graph_(&graph), hidden_dim_(hidden_dim), annotation_dim_(annotation_dim) {
  if (hidden_dim == 0 || annotation_dim == 0) throw ConfigError("hidden and annotation sizes must be positive");
}

std::optional<std::size_t> ActiveSubgraph::slot_of(NodeId node) const {
  auto it = slots_.find(node);
  if (it == slots_.end()) return std::nullopt;
  return it->second;
}

NodeStatus ActiveSubgraph::status(NodeId node) const {
  auto slot = slot_of(node);
  if (!slot) return NodeStatus::inactive;
  return expanded_[*slot] ? NodeStatus::expanded : NodeStatus::active;
}

std::vector<NodeId> ActiveSubgraph::expanded_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t s = 0; s < nodes_.size(); ++s) {
    if (expanded_[s]) out.push_back(nodes_[s]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool ActiveSubgraph::activate(NodeId node, std::span<const double> annotation, std::span<const double> hidden) {
  if (node >= graph_->node_count()) throw RangeError("node id " + std::to_string(node) + " out of range");
  if (annotation.size() != annotation_dim_ || hidden.size() != hidden_dim_) {
    throw DimensionError("activate: annotation/hidden size mismatch");
  }
  if (slots_.contains(node)) return false;
  slots_.emplace(node, nodes_.size());
  nodes_.push_back(node);
  expanded_.push_back(false);
  hidden_.insert(hidden_.end(), hidden.begin(), hidden.end());
  annotation_.insert(annotation_.end(), annotation.begin(), annotation.end());
  return true;
}

std::vector<NodeId> ActiveSubgraph::expand(NodeId node) {
  auto slot = slot_of(node);
  if (!slot) throw StateError("cannot expand inactive node " + std::to_string(node));
  std::vector<NodeId> added;
  if (!expanded_[*slot]) {
    expanded_[*slot] = true;
    ++expanded_count_;
  }
  const Vec zero_annotation(annotation_dim_, 0.0);
  const Vec zero_hidden(hidden_dim_, 0.0);
  for (NodeId peer : neighbors(*graph_, node)) {
    if (activate(peer, zero_annotation, zero_hidden)) added.push_back(peer);
  }
  return added;
}

std::span<double> ActiveSubgraph::hidden(std::size_t slot) {
  return {hidden_.data() + slot * hidden_dim_, hidden_dim_};
}

std::span<const double> ActiveSubgraph::hidden(std::size_t slot) const {
  return {hidden_.data() + slot * hidden_dim_, hidden_dim_};
}

std::span<const double> ActiveSubgraph::annotation(std::size_t slot) const {
  return {annotation_.data() + slot * annotation_dim_, annotation_dim_};
}

Tensor2 ActiveSubgraph::hidden_matrix() const { return Tensor2(nodes_.size(), hidden_dim_, hidden_); }

void ActiveSubgraph::set_hidden_matrix(const Tensor2& h) {
  if (h.rows() != nodes_.size() || h.cols() != hidden_dim_) throw DimensionError("hidden matrix shape mismatch");
  std::copy(h.flat().begin(), h.flat().end(), hidden_.begin());
}

Tensor2 ActiveSubgraph::annotation_matrix() const { return Tensor2(nodes_.size(), annotation_dim_, annotation_); }

LocalTopology ActiveSubgraph::topology() const {
  std::vector<LocalEdge> edges;
  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    const NodeId node = nodes_[v];
    for (const auto& inc : graph_->in_edges(node)) {
      if (auto u = slot_of(inc.peer)) edges.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(*u), in_channel(inc.type)});
    }
    for (const auto& inc : graph_->out_edges(node)) {
      if (auto u = slot_of(inc.peer)) edges.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(*u), out_channel(inc.type)});
    }
  }
  return make_topology(nodes_.size(), std::move(edges));
}

}  // namespace gsnn
