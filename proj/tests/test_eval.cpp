#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

using namespace gsnn;
using oracle::rel_err;

namespace {

Example random_example(const KnowledgeGraph& g, std::size_t image_dim, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Example ex;
  for (std::size_t j = 0; j < g.detectables().size(); ++j) ex.detections.push_back(u(rng));
  for (std::size_t j = 0; j < image_dim; ++j) ex.image_feature.push_back(u(rng) - 0.5);
  for (std::size_t j = 0; j < g.output_labels().size(); ++j) ex.labels.push_back(u(rng) < 0.3 ? 1 : 0);
  return ex;
}

double logit_of(const Model& m, const Example& ex, std::size_t label, const RunOptions& opt) {
  Rng unused(0);
  return forward(m, ex, Mode::eval, 0.0, unused, opt).cls.logits[label];
}

}  // namespace

TEST_CASE("average precision worked examples") {
  CHECK(*average_precision(Vec{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 1, 0}) == doctest::Approx(1.0));
  CHECK(*average_precision(Vec{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{0, 0, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(*average_precision(Vec{0.9, 0.8, 0.1}, std::vector<std::uint8_t>{1, 0, 1}) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  CHECK(!average_precision(Vec{0.9, 0.8}, std::vector<std::uint8_t>{0, 0}));
  // ties go to the lower index
  CHECK(*average_precision(Vec{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}) == doctest::Approx(0.5));
  CHECK(*average_precision(Vec{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}) == doctest::Approx(1.0));
}

TEST_CASE("average precision agrees with enumeration on small rankings") {
  Rng rng = make_rng(1, "ap");
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 6);
    Vec s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = 0.25 * level(rng);
      y[i] = static_cast<std::uint8_t>(level(rng) % 2);
    }
    const auto got = average_precision(s, y);
    const auto want = oracle::brute_force_ap(s, y);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(std::abs(*got - *want) < 1e-12);
  }
}

TEST_CASE("constant predictor scores the positive rate in expectation") {
  // With all scores equal the ranking is index order; averaging over every
  // placement of k positives among n gives the prevalence-like value below.
  const std::size_t n = 6, k = 2;
  std::vector<std::uint8_t> y(n, 0);
  std::fill(y.end() - k, y.end(), 1);
  double total = 0.0;
  int count = 0;
  do {
    total += *average_precision(Vec(n, 0.3), y);
    ++count;
  } while (std::next_permutation(y.begin(), y.end()));
  double want = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::fill(y.begin(), y.end(), 0);
  std::fill(y.end() - k, y.end(), 1);
  do {
    want += oracle::ap_of_order(order, y);
  } while (std::next_permutation(y.begin(), y.end()));
  CHECK(total / count == doctest::Approx(want / count));
  CHECK(total / count > static_cast<double>(k) / n);
}

TEST_CASE("map skips categories without positives and deltas vs self are zero") {
  Tensor2 scores(3, 2, Vec{0.9, 0.1, 0.2, 0.8, 0.4, 0.3});
  std::vector<Example> data(3);
  data[0].labels = {1, 0};
  data[1].labels = {0, 0};
  data[2].labels = {1, 0};
  const EvalReport r = evaluate_scores(scores, data, "x");
  CHECK(r.scored_categories == 1);
  CHECK(!r.ap[1].has_value());
  CHECK(r.map == doctest::Approx(1.0));
  for (const auto& d : ap_deltas(r, r)) {
    if (d) CHECK(*d == 0.0);
  }
  std::ostringstream tsv;
  Rng rng = make_rng(1, "g");
  const KnowledgeGraph g = random_graph(2, 1.0, 1, 1, rng);
  write_eval_tsv(tsv, g, r, &r);
  CHECK(tsv.str().find('-') != std::string::npos);
}

TEST_CASE("sensitivity derivatives match finite differences") {
  Rng rng = make_rng(2, "graph");
  const KnowledgeGraph g = random_graph(12, 2.0, 2, 4, rng);
  GsnnConfig cfg;
  cfg.steps = 3;
  cfg.expand_per_step = 2;
  const Model m = Model::create(ModelKind::gsnn, g, cfg, 3, 4);
  const Example ex = random_example(g, 3, rng);
  const std::size_t label = 5;
  const SensitivityTable t = sensitivity(m, ex, label);
  REQUIRE(t.states.size() == static_cast<std::size_t>(cfg.steps) + 1);

  RunOptions opt;
  opt.replay = &t.trace;
  CHECK(logit_of(m, ex, label, opt) == t.logit);
  double worst = 0.0;
  for (std::size_t s = 0; s < t.states.size(); ++s) {
    REQUIRE(t.states[s].size() == g.node_count());
    for (const auto& row : t.states[s]) {
      if (!row.active) {
        CHECK(row.norm == 0.0);
        CHECK(std::all_of(row.gradient.begin(), row.gradient.end(), [](double v) { return v == 0.0; }));
      }
      for (std::size_t k = 0; k < row.gradient.size(); ++k) {
        auto at = [&](double d) {
          RunOptions o = opt;
          o.probe = StateProbe{s, row.node, k, d};
          return logit_of(m, ex, label, o);
        };
        const double fd = (at(oracle::kStep) - at(-oracle::kStep)) / (2 * oracle::kStep);
        worst = std::max(worst, rel_err(row.gradient[k], fd));
      }
    }
    for (std::size_t i = 1; i < t.states[s].size(); ++i) CHECK(t.states[s][i - 1].norm >= t.states[s][i].norm);
  }
  Example probe = ex;
  for (const auto& d : t.detectors) {
    const double fd = oracle::central_diff([&] { return logit_of(m, probe, label, opt); }, probe.detections[d.index]);
    worst = std::max(worst, rel_err(d.derivative, fd));
  }
  CHECK(worst < 1e-4);
  CHECK(!t.expanded.empty());
  for (const auto& e : t.edges) {
    CHECK((std::find(t.expanded.begin(), t.expanded.end(), e.src) != t.expanded.end() ||
           std::find(t.expanded.begin(), t.expanded.end(), e.dst) != t.expanded.end()));
  }
}

TEST_CASE("sensitivity is linear in the classifier row") {
  Rng rng = make_rng(3, "graph");
  const KnowledgeGraph g = random_graph(12, 2.0, 2, 4, rng);
  Model m = Model::create(ModelKind::gsnn, g, GsnnConfig{}, 3, 4);
  const Example ex = random_example(g, 3, rng);
  const SensitivityTable a = sensitivity(m, ex, 2);
  auto& w = m.params().value(m.classifier_weight());
  for (double& v : w.row(2)) v *= 2.0;
  const SensitivityTable b = sensitivity(m, ex, 2);
  for (std::size_t i = 0; i < a.states.back().size(); ++i) {
    CHECK(b.states.back()[i].norm == doctest::Approx(2.0 * a.states.back()[i].norm));
  }
  for (double& v : w.row(2)) v = 0.0;
  const SensitivityTable z = sensitivity(m, ex, 2);
  for (const auto& st : z.states) {
    for (const auto& row : st) CHECK(row.norm == 0.0);
  }
  for (const auto& d : z.detectors) CHECK(d.derivative == 0.0);
  CHECK_THROWS_AS(sensitivity(m, ex, 99), RangeError);
  std::ostringstream out;
  write_sensitivity(out, g, a, 3);
  CHECK(out.str().find("# state 1") != std::string::npos);
}

TEST_CASE("growth exponent fits a power law") {
  std::vector<TimingRecord> recs;
  for (std::size_t n : {100, 500, 1000, 2000, 5000}) {
    recs.push_back({n, "dense", 1, 1e-9 * std::pow(static_cast<double>(n), 2.0), 0.0, n, false, ""});
    recs.push_back({n, "gsnn", 1, 0.003, 0.0, 30, false, ""});
  }
  recs.push_back({10000, "dense", 0, 0.0, 0.0, 0, true, "capped"});
  CHECK(*growth_exponent(recs, "dense", 500) == doctest::Approx(2.0));
  CHECK(std::abs(*growth_exponent(recs, "gsnn", 500)) < 1e-9);
  CHECK(!growth_exponent(recs, "dense", 6000));
}

TEST_CASE("random graphs have the requested shape") {
  Rng rng = make_rng(4, "graph");
  const KnowledgeGraph g = random_graph(300, 6.0, 3, 80, rng);
  CHECK(g.node_count() == 300);
  CHECK(g.detectables().size() == 80);
  CHECK(g.detectables().front() == 0);
  CHECK(g.edge_type_count() == 3);
  const double degree = 2.0 * static_cast<double>(g.edge_count()) / 300.0;
  CHECK(degree == doctest::Approx(6.0).epsilon(0.15));
}
