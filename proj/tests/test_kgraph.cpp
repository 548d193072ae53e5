#include <sstream>

#include "doctest.h"
#include "gsnn/kgraph.hpp"
#include "gsnn/synthdata.hpp"

using namespace gsnn;

namespace {

std::vector<CooccurrenceRecord> small_records() {
  return {
      {"dog", "near", "cat", 150},       {"dog", "near", "cat", 60},   // summed to 210
      {"cat", "on", "sofa", 200},        {"dog", "near", "bone", 199},  // pruned
      {"sofa", "has-attribute", "soft", 500}, {"dog", "near", "dog", 900},  // self loop
  };
}

std::size_t parse_error_line(const std::string& text, bool labels) {
  std::istringstream in(text);
  try {
    if (labels) {
      parse_labels(in);
    } else {
      parse_cooccurrence(in);
    }
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("co-occurrence parsing reports the offending line") {
  std::istringstream ok("# comment\n\ndog\tnear\tcat\t3\r\n");
  const auto recs = parse_cooccurrence(ok);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].concept_b == "cat");
  CHECK(recs[0].count == 3);
  CHECK(parse_error_line("a\tnear\tb\t1\na\tnear\tb\n", false) == 2);
  CHECK(parse_error_line("a\tnear\tb\tx\n", false) == 1);
  CHECK(parse_error_line("a\tnear\tb\t-4\n", false) == 1);
  CHECK(parse_error_line("dog\tobject\t1\ncat\tvegetable\n", true) == 2);
  CHECK(parse_error_line("dog\tobject\t2\n", true) == 1);
}

TEST_CASE("build keeps relations at the threshold and drops the rest") {
  BuildReport rep;
  const std::vector<LabelDecl> labels{{"dog", NodeKind::object, true}, {"zebra", NodeKind::object, false}};
  const KnowledgeGraph g = build_graph(small_records(), 200, labels, &rep);
  CHECK(rep.records == 6);
  CHECK(rep.kept_edges == 3);
  CHECK(rep.pruned_edges == 1);
  CHECK(rep.self_loops == 1);
  // objects first, then attributes, each sorted by name; 'bone' only had a pruned edge
  REQUIRE(g.node_count() == 5);
  CHECK(g.node(0).name == "cat");
  CHECK(g.node(1).name == "dog");
  CHECK(g.node(2).name == "sofa");
  CHECK(g.node(3).name == "zebra");
  CHECK(g.node(4).name == "soft");
  CHECK(g.node(4).kind == NodeKind::attribute);
  CHECK(!g.find("bone"));
  CHECK(g.edge_types() == std::vector<std::string>{"has-attribute", "near", "on"});
  CHECK(g.output_labels() == std::vector<NodeId>{1, 3});
  CHECK(g.detectables() == std::vector<NodeId>{1});
  CHECK(neighbors(g, 0) == std::vector<NodeId>{1, 2});
  CHECK(neighbors(g, 3).empty());
  CHECK_THROWS_AS(neighbors(g, 9), RangeError);
  CHECK_THROWS_AS(build_graph(small_records(), -1), ConfigError);

  const KnowledgeGraph loose = build_graph(small_records(), 0);
  CHECK(loose.edge_count() == 4);
}

TEST_CASE("graph constructor rejects malformed structure") {
  std::vector<ConceptNode> nodes{{0, "a", NodeKind::object, true, true}, {1, "b", NodeKind::object, true, false}};
  CHECK_THROWS_AS(KnowledgeGraph(nodes, {"near"}, {{0, 0, 0}}), DomainError);
  CHECK_THROWS_AS(KnowledgeGraph(nodes, {"near"}, {{0, 1, 0}, {0, 1, 0}}), DomainError);
  CHECK_THROWS_AS(KnowledgeGraph(nodes, {"near"}, {{0, 2, 0}}), RangeError);
  CHECK_THROWS_AS(KnowledgeGraph(nodes, {"near"}, {{0, 1, 3}}), RangeError);
  auto dup = nodes;
  dup[1].name = "a";
  CHECK_THROWS_AS(KnowledgeGraph(dup, {"near"}, {}), DomainError);
  auto det = nodes;
  det[0].is_output_label = false;
  CHECK_THROWS_AS(KnowledgeGraph(det, {"near"}, {}), DomainError);
  const KnowledgeGraph ok(nodes, {"near"}, {{0, 1, 0}, {1, 0, 0}});
  CHECK(ok.edge_count() == 2);
  CHECK(neighbors(ok, 0) == std::vector<NodeId>{1});
}

TEST_CASE("taxonomy fusion adds one-hop concepts") {
  const KnowledgeGraph base = build_graph(small_records(), 200);
  std::istringstream tx(
      "dog\tis-a\tanimal\n"
      "cat\tis-a\tanimal\n"
      "animal\tis-a\tliving-thing\n"
      "plant\tis-a\tliving-thing\n"
      "cat\tnear\tsofa\n");
  const auto tax = parse_taxonomy(tx);
  FusionReport rep;
  const KnowledgeGraph g = fuse_taxonomy(base, tax, &rep);
  CHECK(rep.nodes_added == 1);
  CHECK(rep.edges_added == 3);
  CHECK(rep.dropped == 2);
  for (std::size_t i = 0; i < base.node_count(); ++i) CHECK(g.node(static_cast<NodeId>(i)) == base.node(static_cast<NodeId>(i)));
  const auto animal = g.find("animal");
  REQUIRE(animal);
  CHECK(g.node(*animal).kind == NodeKind::taxonomy);
  CHECK(!g.node(*animal).is_output_label);
  CHECK(g.edge_types().back() == "is-a");
  CHECK(g.edge_types().size() == base.edge_types().size() + 1);
  std::istringstream bad("a\tis-a\n");
  CHECK_THROWS_AS(parse_taxonomy(bad), ParseError);
}

TEST_CASE("graph file round trip and malformed files") {
  const std::vector<LabelDecl> labels{{"dog", NodeKind::object, true}};
  const KnowledgeGraph g = build_graph(small_records(), 200, labels);
  std::stringstream s;
  save_graph(g, s);
  const std::string text = s.str();
  const KnowledgeGraph back = load_graph(s);
  CHECK(back.nodes() == g.nodes());
  CHECK(back.edges() == g.edges());
  CHECK(back.edge_types() == g.edge_types());

  auto line_of = [](const std::string& t) -> std::size_t {
    std::istringstream in(t);
    try {
      load_graph(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 9999;
  };
  CHECK(line_of("GSNN-GRAPH v2\n") == 1);
  CHECK(line_of("") == 1);
  CHECK(line_of(text.substr(0, text.size() - 12)) > 1);
  std::string unknown = text;
  const auto at = unknown.rfind("\tnear\n");
  REQUIRE(at != std::string::npos);
  unknown.replace(at, 6, "\tbeside\n");
  CHECK(line_of(unknown) > 1);
}

TEST_CASE("generated co-occurrence builds the expected vocabulary") {
  const SyntheticGraphSpec spec;
  const SyntheticSource src = generate_cooccurrence(spec);
  BuildReport rep;
  const KnowledgeGraph g = build_graph(src.records, 200, src.labels, &rep);
  CHECK(g.node_count() == 316);
  CHECK(g.output_labels().size() == 316);
  CHECK(g.detectables().size() == 80);
  CHECK(g.edge_type_count() == 3);
  CHECK(rep.pruned_edges > 0);
  std::stringstream a, b;
  save_graph(g, a);
  save_graph(build_graph(generate_cooccurrence(spec).records, 200, src.labels), b);
  CHECK(a.str() == b.str());
}
