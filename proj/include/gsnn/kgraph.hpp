#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsnn/error.hpp"

namespace gsnn {

using NodeId = std::uint32_t;
using EdgeTypeId = std::uint32_t;

enum class NodeKind { object = 0, attribute = 1, taxonomy = 2 };

std::string_view to_string(NodeKind kind);
NodeKind parse_node_kind(std::string_view text);

struct ConceptNode {
  NodeId id = 0;
  std::string name;
  NodeKind kind = NodeKind::object;
  bool is_output_label = false;
  bool is_detectable = false;

  friend bool operator==(const ConceptNode&, const ConceptNode&) = default;
};

struct TypedEdge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeTypeId type = 0;

  friend bool operator==(const TypedEdge&, const TypedEdge&) = default;
  friend auto operator<=>(const TypedEdge&, const TypedEdge&) = default;
};

/// One endpoint of an incident edge as seen from a node.
struct Incidence {
  NodeId peer;
  EdgeTypeId type;
};

/// Directed, typed, self-loop free concept graph. Immutable once built.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Validates ids, edge types, self-loops and duplicates; sorts edges.
  KnowledgeGraph(std::vector<ConceptNode> nodes, std::vector<std::string> edge_types, std::vector<TypedEdge> edges);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::size_t edge_type_count() const noexcept { return edge_types_.size(); }

  const std::vector<ConceptNode>& nodes() const noexcept { return nodes_; }
  const ConceptNode& node(NodeId id) const;
  const std::vector<TypedEdge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& edge_types() const noexcept { return edge_types_; }
  const std::string& edge_type_name(EdgeTypeId t) const { return edge_types_.at(t); }

  // Incoming edges u->v appear as {u, type}; outgoing v->u as {u, type}.
  std::span<const Incidence> in_edges(NodeId v) const;
  std::span<const Incidence> out_edges(NodeId v) const;

  std::optional<NodeId> find(std::string_view name) const;
  std::optional<EdgeTypeId> find_edge_type(std::string_view name) const;

  // Canonical orderings used for label and detection vectors.
  const std::vector<NodeId>& output_labels() const noexcept { return labels_; }
  const std::vector<NodeId>& detectables() const noexcept { return detectables_; }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.nodes_ == b.nodes_ && a.edge_types_ == b.edge_types_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<ConceptNode> nodes_;
  std::vector<std::string> edge_types_;
  std::vector<TypedEdge> edges_;
  std::vector<std::size_t> in_offsets_, out_offsets_;
  std::vector<Incidence> in_list_, out_list_;
  std::unordered_map<std::string, NodeId> by_name_;
  std::vector<NodeId> labels_;
  std::vector<NodeId> detectables_;
};

/// Union of in- and out-neighbours, sorted ascending, excluding `node`.
std::vector<NodeId> neighbors(const KnowledgeGraph& graph, NodeId node);

// ---- construction -------------------------------------------------------

struct CooccurrenceRecord {
  std::string concept_a;
  std::string relation;
  std::string concept_b;
  std::int64_t count = 0;
};

/// Declared vocabulary entry: an output label with its kind.
struct LabelDecl {
  std::string name;
  NodeKind kind = NodeKind::object;
  bool is_detectable = false;
};

inline constexpr const char* kAttributeRelation = "has-attribute";

struct BuildReport {
  std::size_t records = 0;
  std::size_t kept_edges = 0;
  std::size_t pruned_edges = 0;
  std::size_t self_loops = 0;
};

std::vector<CooccurrenceRecord> parse_cooccurrence(std::istream& in);
std::vector<LabelDecl> parse_labels(std::istream& in);
void write_cooccurrence(std::ostream& out, std::span<const CooccurrenceRecord> records);
void write_labels(std::ostream& out, std::span<const LabelDecl> labels);

/// Keeps relations whose summed count reaches `prune_threshold`. Nodes are the
/// endpoints of kept edges plus every declared label, ordered objects,
/// attributes, taxonomy and lexicographically within each kind. Edge types are
/// the relation names of kept edges in lexicographic order.
KnowledgeGraph build_graph(std::span<const CooccurrenceRecord> records, std::int64_t prune_threshold,
                           std::span<const LabelDecl> labels = {}, BuildReport* report = nullptr);

struct TaxonomyEdge {
  std::string src;
  std::string relation;
  std::string dst;
};

struct FusionReport {
  std::size_t nodes_added = 0;
  std::size_t edges_added = 0;
  std::size_t dropped = 0;
};

std::vector<TaxonomyEdge> parse_taxonomy(std::istream& in);

/// Adds taxonomy concepts one hop from an existing node, then every taxonomy
/// edge among the resulting node set. Base ids and edges are preserved; new
/// relation names are appended to the edge-type vocabulary.
KnowledgeGraph fuse_taxonomy(const KnowledgeGraph& base, std::span<const TaxonomyEdge> taxonomy,
                             FusionReport* report = nullptr);

// ---- serialization ------------------------------------------------------

void save_graph(const KnowledgeGraph& graph, std::ostream& out);
void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load_graph(std::istream& in);
KnowledgeGraph load_graph(const std::filesystem::path& path);

}  // namespace gsnn
