#include "gsnn/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace gsnn {

void SyntheticGraphSpec::validate() const {
  if (objects < 2 || attributes < 0 || clusters < 1 || clusters > objects) {
    throw ConfigError("synthetic graph needs >= 2 objects and 1..objects clusters");
  }
  if (detectable < 1 || detectable > objects) throw ConfigError("detectable must be in [1, objects]");
  if (!(within_cluster_prob >= 0.0 && within_cluster_prob <= 1.0)) throw ConfigError("within_cluster_prob must be in [0,1]");
  if (cross_cluster_edges < 0 || noise_records < 0) throw ConfigError("edge counts must be >= 0");
  if (objects_per_attribute < 1 || objects_per_attribute > objects) {
    throw ConfigError("objects_per_attribute must be in [1, objects]");
  }
  if (min_count < 2) throw ConfigError("min_count must be >= 2");
}

namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
  return buf;
}

}  // namespace

SyntheticSource generate_cooccurrence(const SyntheticGraphSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, "cooccurrence");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto strong = [&] { return std::uniform_int_distribution<std::int64_t>(spec.min_count, 10 * spec.min_count)(rng); };
  auto pick_object = [&] { return std::uniform_int_distribution<int>(0, spec.objects - 1)(rng); };

  SyntheticSource src;
  const char* object_rel[] = {"near", "on"};
  for (int c = 0; c < spec.clusters; ++c) {
    std::vector<int> members;
    for (int o = c; o < spec.objects; o += spec.clusters) members.push_back(o);
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (unit(rng) >= spec.within_cluster_prob) continue;
        const char* rel = object_rel[unit(rng) < 0.5 ? 0 : 1];
        src.records.push_back({numbered("obj", members[i]), rel, numbered("obj", members[j]), strong()});
      }
    }
  }
  for (int e = 0; e < spec.cross_cluster_edges; ++e) {
    const int a = pick_object();
    const int b = pick_object();
    if (a == b) continue;
    src.records.push_back({numbered("obj", a), "near", numbered("obj", b), strong()});
  }
  for (int a = 0; a < spec.attributes; ++a) {
    std::vector<int> owners(static_cast<std::size_t>(spec.objects));
    std::iota(owners.begin(), owners.end(), 0);
    std::shuffle(owners.begin(), owners.end(), rng);
    for (int k = 0; k < spec.objects_per_attribute; ++k) {
      src.records.push_back({numbered("obj", owners[static_cast<std::size_t>(k)]), kAttributeRelation,
                             numbered("attr", a), strong()});
    }
  }
  const int vocab = spec.objects + spec.attributes;
  auto any_name = [&](int i) { return i < spec.objects ? numbered("obj", i) : numbered("attr", i - spec.objects); };
  for (int e = 0; e < spec.noise_records; ++e) {
    const int a = pick_object();
    const int b = std::uniform_int_distribution<int>(0, vocab - 1)(rng);
    const char* rel = b >= spec.objects ? kAttributeRelation : object_rel[unit(rng) < 0.5 ? 0 : 1];
    // Small enough that even repeated draws of one key rarely reach min_count.
    const auto count = std::uniform_int_distribution<std::int64_t>(1, spec.min_count / 8)(rng);
    src.records.push_back({numbered("obj", a), rel, any_name(b), count});
  }

  std::vector<int> order(static_cast<std::size_t>(spec.objects));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> detectable(static_cast<std::size_t>(spec.objects), false);
  for (int k = 0; k < spec.detectable; ++k) detectable[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  for (int o = 0; o < spec.objects; ++o) {
    src.labels.push_back({numbered("obj", o), NodeKind::object, detectable[static_cast<std::size_t>(o)]});
  }
  for (int a = 0; a < spec.attributes; ++a) src.labels.push_back({numbered("attr", a), NodeKind::attribute, false});
  return src;
}

void SceneModel::validate() const {
  if (!graph) throw ConfigError("scene model has no graph");
  if (graph->output_labels().empty()) throw ConfigError("scene model graph has no output labels");
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
  };
  prob(seed_concept_prob, "seed_concept_prob");
  prob(neighbor_inclusion_prob, "neighbor_inclusion_prob");
  prob(detector_miss_rate, "detector_miss_rate");
  if (!(detection_noise >= 0.0)) throw ConfigError("detection_noise must be >= 0");
  if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be >= 0");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
}

SceneSampler::SceneSampler(const SceneModel& model, std::uint64_t seed) : model_(model) {
  model_.validate();
  const KnowledgeGraph& g = *model_.graph;
  const auto& labels = g.output_labels();
  std::vector<std::ptrdiff_t> label_of(g.node_count(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) label_of[labels[i]] = static_cast<std::ptrdiff_t>(i);
  label_neighbors_.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (NodeId u : neighbors(g, labels[i])) {
      if (label_of[u] >= 0) label_neighbors_[i].push_back(static_cast<std::size_t>(label_of[u]));
    }
  }
  for (NodeId d : g.detectables()) detectable_label_.push_back(static_cast<std::size_t>(label_of[d]));

  Rng rng = make_rng(seed, "projection");
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(labels.size())));
  projection_ = Tensor2(static_cast<std::size_t>(model_.feature_dim), labels.size());
  for (double& v : projection_.flat()) v = normal(rng);
}

Example SceneSampler::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = label_neighbors_.size();
  std::vector<std::uint8_t> seeded(n);
  for (auto& s : seeded) s = unit(rng) < model_.seed_concept_prob;
  Example e;
  e.labels = seeded;
  for (std::size_t i = 0; i < n; ++i) {
    if (!seeded[i]) continue;
    for (std::size_t j : label_neighbors_[i]) {
      if (unit(rng) < model_.neighbor_inclusion_prob) e.labels[j] = 1;
    }
  }

  std::normal_distribution<double> det_noise(0.0, 1.0);
  e.detections.reserve(detectable_label_.size());
  for (std::size_t li : detectable_label_) {
    double truth = e.labels[li] ? 1.0 : 0.0;
    if (truth > 0.0 && unit(rng) < model_.detector_miss_rate) truth = 0.0;
    e.detections.push_back(std::clamp(truth + model_.detection_noise * det_noise(rng), 0.0, 1.0));
  }

  const Vec y(e.labels.begin(), e.labels.end());
  e.image_feature.assign(projection_.rows(), 0.0);
  matvec_acc(projection_, y, e.image_feature);
  for (double& v : e.image_feature) v += model_.feature_noise * det_noise(rng);
  return e;
}

Vec SceneSampler::label_marginals() const {
  const double p = model_.seed_concept_prob;
  const double q = model_.neighbor_inclusion_prob;
  Vec m(label_neighbors_.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = 1.0 - (1.0 - p) * std::pow(1.0 - p * q, static_cast<double>(label_neighbors_[i].size()));
  }
  return m;
}

Example sample_scene(const SceneSampler& sampler, Rng& rng) { return sampler.sample(rng); }

Dataset generate_split(const SceneSampler& sampler, std::size_t count, std::uint64_t seed, bool test) {
  const KnowledgeGraph& g = *sampler.model().graph;
  Dataset d;
  d.detection_count = g.detectables().size();
  d.image_dim = static_cast<std::size_t>(sampler.model().feature_dim);
  d.label_count = g.output_labels().size();
  d.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, test ? "test" : "train", i);
    d.examples.push_back(sampler.sample(rng));
  }
  return d;
}

GeneratedFiles generate_dataset(const SceneModel& model, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                const std::filesystem::path& dir) {
  if (n_train < 1 || n_test < 1) throw ConfigError("train and test sizes must be >= 1");
  const SceneSampler sampler(model, seed);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  GeneratedFiles files{dir / "train.txt", dir / "test.txt", dir / "manifest.txt"};

  auto write = [&](const std::filesystem::path& path, std::size_t count, bool test) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_dataset(out, generate_split(sampler, count, seed, test));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  };
  write(files.train, n_train, false);
  write(files.test, n_test, true);

  std::ofstream m(files.manifest, std::ios::binary);
  if (!m) throw IoError("cannot write '" + files.manifest.string() + "'");
  m << "format=GSNN-DATA v1\n"
    << "seed=" << seed << '\n'
    << "train=" << n_train << '\n'
    << "test=" << n_test << '\n'
    << "labels=" << model.graph->output_labels().size() << '\n'
    << "detections=" << model.graph->detectables().size() << '\n'
    << "seed_concept_prob=" << format_double(model.seed_concept_prob) << '\n'
    << "neighbor_inclusion_prob=" << format_double(model.neighbor_inclusion_prob) << '\n'
    << "detection_noise=" << format_double(model.detection_noise) << '\n'
    << "detector_miss_rate=" << format_double(model.detector_miss_rate) << '\n'
    << "feature_dim=" << model.feature_dim << '\n'
    << "feature_noise=" << format_double(model.feature_noise) << '\n';
  return files;
}

}  // namespace gsnn
