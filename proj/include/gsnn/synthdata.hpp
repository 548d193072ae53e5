#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gsnn/kgraph.hpp"
#include "gsnn/pipeline.hpp"

namespace gsnn {

/// Knobs for the synthetic co-occurrence source: clustered objects, attributes
/// hung off a few objects each, and low-count noise that pruning removes.
struct SyntheticGraphSpec {
  int objects = 216;
  int attributes = 100;
  int detectable = 80;
  int clusters = 24;
  double within_cluster_prob = 0.35;
  int cross_cluster_edges = 150;
  int objects_per_attribute = 3;
  int noise_records = 1500;
  std::int64_t min_count = 200;  // kept relations get counts >= this
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticSource {
  std::vector<CooccurrenceRecord> records;
  std::vector<LabelDecl> labels;
};

SyntheticSource generate_cooccurrence(const SyntheticGraphSpec& spec);

struct SceneModel {
  const KnowledgeGraph* graph = nullptr;
  double seed_concept_prob = 0.03;
  double neighbor_inclusion_prob = 0.7;
  double detection_noise = 0.3;
  double detector_miss_rate = 0.3;
  int feature_dim = 64;
  double feature_noise = 1.0;

  void validate() const;
};

/// Draws scenes from a SceneModel. The projection behind the image feature is
/// fixed by `seed`.
class SceneSampler {
 public:
  SceneSampler(const SceneModel& model, std::uint64_t seed);

  Example sample(Rng& rng) const;

  // P(label i present) under one-pass relaxation:
  // 1 - (1-p) (1 - p q)^deg(i), deg counting neighbouring labels.
  Vec label_marginals() const;

  const SceneModel& model() const noexcept { return model_; }
  const Tensor2& projection() const noexcept { return projection_; }

 private:
  SceneModel model_;
  std::vector<std::vector<std::size_t>> label_neighbors_;
  std::vector<std::size_t> detectable_label_;  // label index per detector
  Tensor2 projection_;                         // feature_dim x labels
};

Example sample_scene(const SceneSampler& sampler, Rng& rng);

/// Train example i is drawn from stream ("train", i) and test example i from
/// ("test", i), so a shorter train file is a prefix of a longer one.
Dataset generate_split(const SceneSampler& sampler, std::size_t count, std::uint64_t seed, bool test);

struct GeneratedFiles {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path manifest;
};

GeneratedFiles generate_dataset(const SceneModel& model, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                const std::filesystem::path& dir);

}  // namespace gsnn
