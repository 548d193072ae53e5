#include "gsnn/kgraph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace gsnn {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::object: return "object";
    case NodeKind::attribute: return "attribute";
    case NodeKind::taxonomy: return "taxonomy";
  }
  return "object";
}

NodeKind parse_node_kind(std::string_view text) {
  if (text == "object") return NodeKind::object;
  if (text == "attribute") return NodeKind::attribute;
  if (text == "taxonomy") return NodeKind::taxonomy;
  throw DomainError("unknown node kind '" + std::string(text) + "'");
}

namespace {

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of("\t\n\r") != std::string::npos) {
    throw DomainError("invalid concept or relation name '" + name + "'");
  }
}

void build_csr(std::size_t n, const std::vector<TypedEdge>& edges, bool incoming, std::vector<std::size_t>& offsets,
               std::vector<Incidence>& list) {
  offsets.assign(n + 1, 0);
  for (const auto& e : edges) ++offsets[(incoming ? e.dst : e.src) + 1];
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  list.resize(edges.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& e : edges) {
    const NodeId at = incoming ? e.dst : e.src;
    list[cursor[at]++] = Incidence{incoming ? e.src : e.dst, e.type};
  }
}

}  // namespace

KnowledgeGraph::KnowledgeGraph(std::vector<ConceptNode> nodes, std::vector<std::string> edge_types,
                               std::vector<TypedEdge> edges)
    : nodes_(std::move(nodes)), edge_types_(std::move(edge_types)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    if (node.id != i) throw DomainError("node ids must be contiguous: position " + std::to_string(i) + " has id " +
                                        std::to_string(node.id));
    check_name(node.name);
    if (node.is_detectable && !node.is_output_label) {
      throw DomainError("detectable node '" + node.name + "' must be an output label");
    }
    if (!by_name_.emplace(node.name, node.id).second) throw DomainError("duplicate node name '" + node.name + "'");
    if (node.is_output_label) labels_.push_back(node.id);
    if (node.is_detectable) detectables_.push_back(node.id);
  }
  std::set<std::string> seen_types;
  for (const auto& t : edge_types_) {
    check_name(t);
    if (!seen_types.insert(t).second) throw DomainError("duplicate edge type '" + t + "'");
  }
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    if (e.src >= nodes_.size() || e.dst >= nodes_.size()) throw RangeError("edge endpoint out of range");
    if (e.src == e.dst) throw DomainError("self-loop on node '" + nodes_[e.src].name + "'");
    if (e.type >= edge_types_.size()) throw RangeError("edge type " + std::to_string(e.type) + " not declared");
    if (i > 0 && edges_[i - 1] == e) throw DomainError("duplicate edge");
  }
  build_csr(nodes_.size(), edges_, true, in_offsets_, in_list_);
  build_csr(nodes_.size(), edges_, false, out_offsets_, out_list_);
}

const ConceptNode& KnowledgeGraph::node(NodeId id) const {
  if (id >= nodes_.size()) throw RangeError("node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

std::span<const Incidence> KnowledgeGraph::in_edges(NodeId v) const {
  if (v >= nodes_.size()) throw RangeError("node id " + std::to_string(v) + " out of range");
  return {in_list_.data() + in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]};
}

std::span<const Incidence> KnowledgeGraph::out_edges(NodeId v) const {
  if (v >= nodes_.size()) throw RangeError("node id " + std::to_string(v) + " out of range");
  return {out_list_.data() + out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]};
}

std::optional<NodeId> KnowledgeGraph::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::optional<EdgeTypeId> KnowledgeGraph::find_edge_type(std::string_view name) const {
  for (std::size_t i = 0; i < edge_types_.size(); ++i) {
    if (edge_types_[i] == name) return static_cast<EdgeTypeId>(i);
  }
  return std::nullopt;
}

std::vector<NodeId> neighbors(const KnowledgeGraph& graph, NodeId node) {
  std::vector<NodeId> out;
  for (const auto& inc : graph.in_edges(node)) out.push_back(inc.peer);
  for (const auto& inc : graph.out_edges(node)) out.push_back(inc.peer);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  std::erase(out, node);
  return out;
}

// ---- text parsing -------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

bool skippable(const std::string& line) { return line.empty() || line[0] == '#'; }

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

template <typename T>
T parse_int(const std::string& text, std::size_t line_no, const char* what) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ParseError(line_no, std::string("invalid ") + what + " '" + text + "'");
  return value;
}

bool parse_flag(const std::string& text, std::size_t line_no) {
  if (text == "1") return true;
  if (text == "0") return false;
  throw ParseError(line_no, "expected 0 or 1, got '" + text + "'");
}

}  // namespace

std::vector<CooccurrenceRecord> parse_cooccurrence(std::istream& in) {
  std::vector<CooccurrenceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skippable(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 4) throw ParseError(line_no, "expected 4 tab-separated fields, got " + std::to_string(f.size()));
    for (int i = 0; i < 3; ++i) {
      if (f[i].empty()) throw ParseError(line_no, "empty field");
    }
    const auto count = parse_int<std::int64_t>(f[3], line_no, "count");
    if (count < 0) throw ParseError(line_no, "negative count");
    out.push_back({f[0], f[1], f[2], count});
  }
  return out;
}

std::vector<LabelDecl> parse_labels(std::istream& in) {
  std::vector<LabelDecl> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skippable(line)) continue;
    auto f = split_tabs(line);
    if (f.empty() || f.size() > 3 || f[0].empty()) throw ParseError(line_no, "expected name[<TAB>kind[<TAB>detectable]]");
    LabelDecl decl{f[0], NodeKind::object, false};
    try {
      if (f.size() >= 2) decl.kind = parse_node_kind(f[1]);
    } catch (const DomainError& e) {
      throw ParseError(line_no, e.what());
    }
    if (f.size() == 3) decl.is_detectable = parse_flag(f[2], line_no);
    out.push_back(std::move(decl));
  }
  return out;
}

void write_cooccurrence(std::ostream& out, std::span<const CooccurrenceRecord> records) {
  for (const auto& r : records) out << r.concept_a << '\t' << r.relation << '\t' << r.concept_b << '\t' << r.count << '\n';
}

void write_labels(std::ostream& out, std::span<const LabelDecl> labels) {
  for (const auto& l : labels) out << l.name << '\t' << to_string(l.kind) << '\t' << (l.is_detectable ? 1 : 0) << '\n';
}

std::vector<TaxonomyEdge> parse_taxonomy(std::istream& in) {
  std::vector<TaxonomyEdge> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skippable(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty()) {
      throw ParseError(line_no, "expected src<TAB>relation<TAB>dst");
    }
    out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

// ---- construction -------------------------------------------------------

namespace {

struct PendingNode {
  NodeKind kind;
  bool label = false;
  bool detectable = false;
};

// Sorts by (kind, name), assigns ids, and remaps named edges.
KnowledgeGraph assemble(const std::map<std::string, PendingNode>& pending, std::vector<std::string> edge_types,
                        const std::vector<std::tuple<std::string, std::string, EdgeTypeId>>& named_edges) {
  std::vector<std::pair<std::string, PendingNode>> ordered(pending.begin(), pending.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.kind != b.second.kind) return a.second.kind < b.second.kind;
    return a.first < b.first;
  });
  std::vector<ConceptNode> nodes;
  std::unordered_map<std::string, NodeId> ids;
  for (const auto& [name, p] : ordered) {
    const auto id = static_cast<NodeId>(nodes.size());
    nodes.push_back({id, name, p.kind, p.label, p.detectable});
    ids.emplace(name, id);
  }
  std::vector<TypedEdge> edges;
  edges.reserve(named_edges.size());
  for (const auto& [a, b, t] : named_edges) edges.push_back({ids.at(a), ids.at(b), t});
  return KnowledgeGraph(std::move(nodes), std::move(edge_types), std::move(edges));
}

}  // namespace

KnowledgeGraph build_graph(std::span<const CooccurrenceRecord> records, std::int64_t prune_threshold,
                           std::span<const LabelDecl> labels, BuildReport* report) {
  if (prune_threshold < 0) throw ConfigError("prune threshold must be >= 0");
  BuildReport rep;
  rep.records = records.size();

  std::map<std::tuple<std::string, std::string, std::string>, std::int64_t> summed;
  for (const auto& r : records) {
    if (r.count < 0) throw DomainError("negative co-occurrence count");
    check_name(r.concept_a);
    check_name(r.relation);
    check_name(r.concept_b);
    summed[{r.concept_a, r.relation, r.concept_b}] += r.count;
  }

  std::map<std::string, PendingNode> pending;
  std::set<std::string> object_like, attribute_like;
  std::set<std::string> relations;
  std::vector<std::tuple<std::string, std::string, std::string>> kept;
  for (const auto& [key, count] : summed) {
    const auto& [a, rel, b] = key;
    if (a == b) {
      ++rep.self_loops;
      continue;
    }
    if (count < prune_threshold) {
      ++rep.pruned_edges;
      continue;
    }
    kept.push_back(key);
    relations.insert(rel);
    object_like.insert(a);
    (rel == kAttributeRelation ? attribute_like : object_like).insert(b);
  }
  for (const auto& name : attribute_like) pending[name] = {NodeKind::attribute};
  for (const auto& name : object_like) pending[name] = {NodeKind::object};
  for (const auto& decl : labels) {
    check_name(decl.name);
    pending[decl.name] = {decl.kind, true, decl.is_detectable};
  }

  std::vector<std::string> edge_types(relations.begin(), relations.end());
  std::vector<std::tuple<std::string, std::string, EdgeTypeId>> named;
  for (const auto& [a, rel, b] : kept) {
    const auto t = static_cast<EdgeTypeId>(std::lower_bound(edge_types.begin(), edge_types.end(), rel) - edge_types.begin());
    named.emplace_back(a, b, t);
  }
  rep.kept_edges = named.size();
  if (report) *report = rep;
  return assemble(pending, std::move(edge_types), named);
}

KnowledgeGraph fuse_taxonomy(const KnowledgeGraph& base, std::span<const TaxonomyEdge> taxonomy, FusionReport* report) {
  FusionReport rep;
  std::map<std::string, PendingNode> pending;
  for (const auto& n : base.nodes()) pending[n.name] = {n.kind, n.is_output_label, n.is_detectable};

  std::set<std::string> candidates;
  for (const auto& e : taxonomy) {
    if (e.src == e.dst) continue;
    const bool has_src = base.find(e.src).has_value();
    const bool has_dst = base.find(e.dst).has_value();
    if (has_src && !has_dst) candidates.insert(e.dst);
    if (has_dst && !has_src) candidates.insert(e.src);
  }
  for (const auto& name : candidates) {
    check_name(name);
    pending[name] = {NodeKind::taxonomy};
  }
  rep.nodes_added = candidates.size();

  std::vector<std::string> edge_types = base.edge_types();
  std::set<std::string> new_relations;
  for (const auto& e : taxonomy) {
    if (!base.find_edge_type(e.relation)) new_relations.insert(e.relation);
  }
  for (const auto& r : new_relations) {
    check_name(r);
    edge_types.push_back(r);
  }
  auto type_of = [&](const std::string& rel) {
    return static_cast<EdgeTypeId>(std::find(edge_types.begin(), edge_types.end(), rel) - edge_types.begin());
  };

  std::set<std::tuple<std::string, std::string, EdgeTypeId>> edge_set;
  for (const auto& e : base.edges()) edge_set.emplace(base.node(e.src).name, base.node(e.dst).name, e.type);
  for (const auto& e : taxonomy) {
    if (e.src == e.dst || !pending.contains(e.src) || !pending.contains(e.dst)) {
      ++rep.dropped;
      continue;
    }
    if (edge_set.emplace(e.src, e.dst, type_of(e.relation)).second) ++rep.edges_added;
  }
  std::vector<std::tuple<std::string, std::string, EdgeTypeId>> named(edge_set.begin(), edge_set.end());
  if (report) *report = rep;
  return assemble(pending, std::move(edge_types), named);
}

// ---- serialization ------------------------------------------------------

namespace {
constexpr const char* kGraphMagic = "GSNN-GRAPH";
constexpr int kGraphVersion = 1;
}  // namespace

void save_graph(const KnowledgeGraph& graph, std::ostream& out) {
  out << kGraphMagic << " v" << kGraphVersion << '\n';
  out << "C\t" << graph.node_count() << '\t' << graph.edge_type_count() << '\t' << graph.edge_count() << '\n';
  for (std::size_t t = 0; t < graph.edge_type_count(); ++t) out << "T\t" << t << '\t' << graph.edge_types()[t] << '\n';
  for (const auto& n : graph.nodes()) {
    out << "N\t" << n.id << '\t' << n.name << '\t' << to_string(n.kind) << '\t' << (n.is_output_label ? 1 : 0) << '\t'
        << (n.is_detectable ? 1 : 0) << '\n';
  }
  for (const auto& e : graph.edges()) {
    out << "E\t" << e.src << '\t' << e.dst << '\t' << graph.edge_type_name(e.type) << '\n';
  }
  if (!out) throw IoError("failed writing graph");
}

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_graph(graph, out);
}

KnowledgeGraph load_graph(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty graph file");
  line = strip_cr(line);
  const std::string magic = std::string(kGraphMagic) + " v";
  if (!line.starts_with(magic)) throw ParseError(1, "not a graph file (header '" + line + "')");
  const auto version = parse_int<int>(line.substr(magic.size()), 1, "version");
  if (version != kGraphVersion) {
    throw ParseError(1, "unsupported graph file version " + std::to_string(version) + " (expected " +
                            std::to_string(kGraphVersion) + ")");
  }

  std::size_t want_nodes = 0, want_types = 0, want_edges = 0;
  bool have_counts = false;
  std::vector<ConceptNode> nodes;
  std::vector<std::string> types;
  std::vector<TypedEdge> edges;
  std::unordered_map<std::string, EdgeTypeId> type_ids;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    const std::string& tag = f[0];
    if (tag == "C") {
      if (f.size() != 4 || have_counts) throw ParseError(line_no, "malformed count line");
      want_nodes = parse_int<std::size_t>(f[1], line_no, "node count");
      want_types = parse_int<std::size_t>(f[2], line_no, "edge type count");
      want_edges = parse_int<std::size_t>(f[3], line_no, "edge count");
      have_counts = true;
    } else if (tag == "T") {
      if (f.size() != 3) throw ParseError(line_no, "malformed edge type line");
      const auto id = parse_int<std::size_t>(f[1], line_no, "edge type id");
      if (id != types.size()) throw ParseError(line_no, "edge type ids must be contiguous");
      type_ids.emplace(f[2], static_cast<EdgeTypeId>(id));
      types.push_back(f[2]);
    } else if (tag == "N") {
      if (f.size() != 6) throw ParseError(line_no, "malformed node line");
      ConceptNode n;
      n.id = parse_int<NodeId>(f[1], line_no, "node id");
      if (n.id != nodes.size()) throw ParseError(line_no, "node ids must be contiguous");
      n.name = f[2];
      try {
        n.kind = parse_node_kind(f[3]);
      } catch (const DomainError& e) {
        throw ParseError(line_no, e.what());
      }
      n.is_output_label = parse_flag(f[4], line_no);
      n.is_detectable = parse_flag(f[5], line_no);
      nodes.push_back(std::move(n));
    } else if (tag == "E") {
      if (f.size() != 4) throw ParseError(line_no, "malformed edge line");
      TypedEdge e;
      e.src = parse_int<NodeId>(f[1], line_no, "edge source");
      e.dst = parse_int<NodeId>(f[2], line_no, "edge target");
      auto it = type_ids.find(f[3]);
      if (it == type_ids.end()) throw ParseError(line_no, "unknown edge type '" + f[3] + "'");
      e.type = it->second;
      if (e.src >= nodes.size() || e.dst >= nodes.size()) throw ParseError(line_no, "edge endpoint not declared");
      edges.push_back(e);
    } else {
      throw ParseError(line_no, "unknown record tag '" + tag + "'");
    }
  }
  if (!have_counts) throw ParseError(line_no, "truncated graph file: missing count line");
  if (nodes.size() != want_nodes || types.size() != want_types || edges.size() != want_edges) {
    throw ParseError(line_no, "truncated graph file: expected " + std::to_string(want_nodes) + " nodes, " +
                                  std::to_string(want_edges) + " edges; found " + std::to_string(nodes.size()) +
                                  ", " + std::to_string(edges.size()));
  }
  try {
    return KnowledgeGraph(std::move(nodes), std::move(types), std::move(edges));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open graph " + path.string());
  return load_graph(in);
}

}  // namespace gsnn
