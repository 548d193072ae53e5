#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gsnn/engine.hpp"
#include "gsnn/optim.hpp"

namespace gsnn {

/// One image: detector scores (per detectable concept, canonical order), a
/// surrogate image feature and binary labels over the output labels.
struct Example {
  Vec detections;
  Vec image_feature;
  std::vector<std::uint8_t> labels;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::size_t detection_count = 0;
  std::size_t image_dim = 0;
  std::size_t label_count = 0;
  std::vector<Example> examples;
};

// Text format: header "GSNN-DATA v1<TAB>detections<TAB>image_dim<TAB>labels",
// then one example per line "d,d,...|f,f,...|0101...".
void write_dataset_header(std::ostream& out, std::size_t detection_count, std::size_t image_dim, std::size_t label_count);
void write_example(std::ostream& out, const Example& example);
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

enum class ModelKind { gsnn, feature_only, feature_det };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// The classification pipeline: optional graph network feeding a one-layer
/// classifier over [graph outputs, image feature, detections]. The baselines
/// drop the graph block (feature_only also drops detections).
class Model {
 public:
  static Model create(ModelKind kind, const KnowledgeGraph& graph, const GsnnConfig& config, std::size_t image_dim,
                      std::uint64_t seed);
  // Kind and image size are read off the checkpoint's tensor names and shapes.
  static Model from_checkpoint(const ParameterSet& checkpoint, const KnowledgeGraph& graph, const GsnnConfig& config);

  ModelKind kind() const noexcept { return kind_; }
  const KnowledgeGraph& graph() const noexcept { return *graph_; }
  const GsnnConfig& config() const noexcept { return config_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const PropagationParams& propagation() const;
  bool has_graph() const noexcept { return prop_.has_value(); }

  ParamId classifier_weight() const noexcept { return cls_w_; }
  ParamId classifier_bias() const noexcept { return cls_b_; }

  std::size_t image_dim() const noexcept { return image_dim_; }
  std::size_t detection_count() const noexcept { return graph_->detectables().size(); }
  std::size_t label_count() const noexcept { return graph_->output_labels().size(); }
  std::size_t graph_block() const noexcept;
  std::size_t feature_dim() const noexcept;

  std::vector<ParamId> graph_param_ids() const;
  std::vector<ParamId> classifier_param_ids() const { return {cls_w_, cls_b_}; }

 private:
  Model(ModelKind kind, const KnowledgeGraph& graph, const GsnnConfig& config, std::size_t image_dim)
      : kind_(kind), graph_(&graph), config_(config), image_dim_(image_dim) {}
  void add_classifier(Rng* rng);

  ModelKind kind_;
  const KnowledgeGraph* graph_;
  GsnnConfig config_;
  std::size_t image_dim_;
  ParameterSet params_;
  std::optional<PropagationParams> prop_;
  ParamId cls_w_ = 0;
  ParamId cls_b_ = 0;
};

/// [outputs of `nodes` placed at their canonical node slots, zeros for every
/// other node] ++ image_feature ++ detections.
Vec assemble_features(const KnowledgeGraph& graph, std::span<const NodeId> nodes, const Tensor2& node_outputs,
                      std::span<const double> image_feature, std::span<const double> detections);

struct ClassifierPass {
  Vec input;   // features after dropout
  Vec mask;
  Vec logits;
  Vec probs;
};

/// Dropout (train mode), then linear, then per-label sigmoid.
ClassifierPass classify(std::span<const double> features, const Tensor2& weight, std::span<const double> bias,
                        double dropout, Mode mode, Rng& rng);

struct ForwardPass {
  std::optional<GsnnRun> run;
  Vec features;
  ClassifierPass cls;
};

ForwardPass forward(const Model& model, const Example& example, Mode mode, double dropout, Rng& rng,
                    const RunOptions& options = {});
// Eval-mode label probabilities.
Vec predict(const Model& model, const Example& example, Exec exec = Exec::parallel);

struct LossBreakdown {
  double bce = 0.0;
  double importance = 0.0;
  double total() const noexcept { return bce + importance; }
};

/// BCE over labels plus importance_weight * sum over rounds of the MSE
/// between logged scores and gamma^hop targets.
LossBreakdown example_loss(const Model& model, const ForwardPass& pass, const Example& example);

struct ExampleGradients {
  Vec d_logits;
  Vec d_features;
  Vec d_detections;  // graph path plus the direct classifier input
  std::optional<GsnnGradients> graph;
};

/// Backpropagates d_logits (and optional importance seeds) through the
/// pipeline. Graph parameter gradients go to `grads`; classifier gradients
/// too when `include_classifier`.
ExampleGradients backward_from_logits(const Model& model, const ForwardPass& pass, std::span<const double> d_logits,
                                      const std::vector<Vec>* d_importance, GradientBuffer& grads,
                                      bool include_classifier, Exec exec = Exec::parallel);

/// Gradient of example_loss.
ExampleGradients backward_example(const Model& model, const ForwardPass& pass, const Example& example,
                                  GradientBuffer& grads, bool include_classifier, Exec exec = Exec::parallel);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  OptimizerConfig graph_optimizer{OptimizerKind::adam, 0.001, 0.5, 1e-6, 0.1, 10, 0.9, 0.999, 1e-8};
  OptimizerConfig classifier_optimizer{OptimizerKind::sgd_momentum, 0.05, 0.5, 1e-6, 0.1, 10, 0.9, 0.999, 1e-8};
  Exec exec = Exec::parallel;

  void validate() const;
};

struct BatchRef {
  std::span<const Example* const> examples;
  int epoch = 0;
  std::uint64_t first_index = 0;  // global position, keys the dropout streams
};

/// Forward/backward over a batch (examples in parallel, gradients reduced in
/// batch order), then one optimizer step per parameter group. Returns the
/// batch-mean losses.
LossBreakdown train_step(Model& model, const BatchRef& batch, const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean_loss;
  double seconds = 0.0;
};

std::vector<EpochLog> train(Model& model, std::span<const Example> data, const TrainConfig& config,
                            std::ostream* log = nullptr);

}  // namespace gsnn
