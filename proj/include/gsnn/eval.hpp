#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsnn/pipeline.hpp"

namespace gsnn {

/// Mean over positives of precision at each positive's rank, ranking by
/// descending score with ties broken by ascending index. Empty when there are
/// no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

inline constexpr const char* kApVariant = "precision-at-positive-rank, no interpolation";

struct EvalReport {
  std::string model;
  std::size_t examples = 0;
  double map = 0.0;  // over categories with at least one positive
  std::size_t scored_categories = 0;
  std::vector<std::optional<double>> ap;  // per output label
};

/// Eval-mode probabilities, one row per example.
Tensor2 predict_all(const Model& model, std::span<const Example> data, Exec exec = Exec::parallel);

EvalReport evaluate_scores(const Tensor2& scores, std::span<const Example> data, std::string model_name);
EvalReport evaluate(const Model& model, std::span<const Example> data, Exec exec = Exec::parallel);

/// report.ap - baseline.ap where both are defined.
std::vector<std::optional<double>> ap_deltas(const EvalReport& report, const EvalReport& baseline);

// label<TAB>ap[<TAB>baseline_ap<TAB>delta] per category; "-" marks undefined.
void write_eval_tsv(std::ostream& out, const KnowledgeGraph& graph, const EvalReport& report,
                    const EvalReport* baseline = nullptr);
void write_eval_summary(std::ostream& out, const EvalReport& report, const EvalReport* baseline = nullptr);

// ---- sensitivity ----------------------------------------------------------

struct NodeSensitivity {
  NodeId node = 0;
  bool active = false;
  Vec gradient;  // d logit / d h, zero when inactive
  double norm = 0.0;
};

struct DetectorSensitivity {
  std::size_t index = 0;  // into graph.detectables()
  NodeId node = 0;
  double score = 0.0;
  double derivative = 0.0;
};

struct SubgraphEdge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeTypeId type = 0;
};

/// Derivatives of one class logit. states[s] covers every graph node for
/// hidden state s (s = 0 is the initial state, s = T the final one), ranked by
/// descending norm with ties by node id. Detectors are ranked by |derivative|.
struct SensitivityTable {
  std::size_t label = 0;
  NodeId label_node = 0;
  double logit = 0.0;
  double probability = 0.0;
  std::vector<std::vector<NodeSensitivity>> states;
  std::vector<DetectorSensitivity> detectors;
  std::vector<NodeId> expanded;
  std::vector<SubgraphEdge> edges;  // edges touching an expanded node
  ExpansionTrace trace;
};

SensitivityTable sensitivity(const Model& model, const Example& example, std::size_t label, Exec exec = Exec::parallel);

void write_sensitivity(std::ostream& out, const KnowledgeGraph& graph, const SensitivityTable& table, std::size_t top_k);

// ---- scaling benchmark -----------------------------------------------------

struct ScalingConfig {
  std::vector<std::size_t> sizes{100, 250, 500, 1000, 2000, 5000};
  int trials = 20;
  double mean_degree = 6.0;
  int edge_types = 3;
  std::size_t detectables = 80;
  std::size_t detections = 3;  // detectables scored above threshold
  std::size_t fit_min_nodes = 500;
  std::size_t dense_max_nodes = 0;  // 0: no cap beyond allocation failure
  std::uint64_t seed = 1;
  GsnnConfig gsnn;

  void validate() const;
};

struct TimingRecord {
  std::size_t nodes = 0;
  std::string mode;
  int trials = 0;
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  std::size_t active_nodes = 0;  // final active count of the last trial
  bool capped = false;
  std::string note;
};

struct ScalingReport {
  std::vector<TimingRecord> records;
  std::optional<double> dense_exponent;
  std::optional<double> gsnn_exponent;
};

/// Random graph with `nodes` nodes, Poisson-ish degree and `edge_types` types;
/// the first `detectables` node ids are detectable.
KnowledgeGraph random_graph(std::size_t nodes, double mean_degree, int edge_types, std::size_t detectables, Rng& rng);

/// Least-squares slope of log(seconds) on log(nodes) over uncapped records of
/// `mode` with nodes >= min_nodes.
std::optional<double> growth_exponent(const std::vector<TimingRecord>& records, const std::string& mode,
                                      std::size_t min_nodes);

ScalingReport scaling_benchmark(const ScalingConfig& config, std::ostream* log = nullptr);

void write_scaling_tsv(std::ostream& out, const ScalingReport& report);

// ---- low-data sweep ---------------------------------------------------------

struct LowDataRow {
  std::size_t train_size = 0;
  ModelKind kind = ModelKind::gsnn;
  double map = 0.0;
};

/// Trains every kind from a fresh initialisation on each prefix size
/// (descending, each <= train size) and evaluates on `test`.
std::vector<LowDataRow> lowdata_sweep(const KnowledgeGraph& graph, std::span<const Example> train_data,
                                      std::span<const Example> test, const std::vector<std::size_t>& sizes,
                                      const std::vector<ModelKind>& kinds, const GsnnConfig& gsnn,
                                      const TrainConfig& train_config, std::size_t image_dim,
                                      std::ostream* log = nullptr);

void write_lowdata_tsv(std::ostream& out, const std::vector<LowDataRow>& rows);

}  // namespace gsnn
