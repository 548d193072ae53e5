#include "gsnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <type_traits>

namespace gsnn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("bad value '" + text + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw ConfigError("bad boolean '" + text + "' for " + key);
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_value<std::size_t>(key, trim(tok)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
std::string show(const T& v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    std::ostringstream o;
    o << v;
    return o.str();
  }
}

#define GSNN_FIELD(map, key, member)                                                                 \
  map[key] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {                     \
                     c.member = parse_value<std::decay_t<decltype(c.member)>>(k, v);                  \
                   },                                                                                \
                   [](const RunConfig& c) { return show(c.member); }}

#define GSNN_BOOL(map, key, member)                                                                                  \
  map[key] = Field{[](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
                   [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

void add_optimizer(std::map<std::string, Field>& f, const std::string& prefix, OptimizerConfig TrainConfig::*which) {
  auto num = [&](const std::string& name, double OptimizerConfig::*m) {
    f[prefix + name] = Field{[which, m](RunConfig& c, const std::string& k, const std::string& v) {
                               (c.train.*which).*m = parse_value<double>(k, v);
                             },
                             [which, m](const RunConfig& c) { return show((c.train.*which).*m); }};
  };
  num("lr", &OptimizerConfig::learning_rate);
  num("momentum", &OptimizerConfig::momentum);
  num("l2", &OptimizerConfig::l2_penalty);
  num("decay", &OptimizerConfig::lr_decay_factor);
  num("beta1", &OptimizerConfig::beta1);
  num("beta2", &OptimizerConfig::beta2);
  num("eps", &OptimizerConfig::epsilon);
  f[prefix + "decay_every"] = Field{[which](RunConfig& c, const std::string& k, const std::string& v) {
                                      (c.train.*which).lr_decay_every = parse_value<int>(k, v);
                                    },
                                    [which](const RunConfig& c) { return show((c.train.*which).lr_decay_every); }};
  f[prefix + "kind"] = Field{[which](RunConfig& c, const std::string& k, const std::string& v) {
                               if (v == "adam") {
                                 (c.train.*which).kind = OptimizerKind::adam;
                               } else if (v == "sgd") {
                                 (c.train.*which).kind = OptimizerKind::sgd_momentum;
                               } else {
                                 throw ConfigError("bad optimizer '" + v + "' for " + k + " (adam, sgd)");
                               }
                             },
                             [which](const RunConfig& c) {
                               return std::string((c.train.*which).kind == OptimizerKind::adam ? "adam" : "sgd");
                             }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    GSNN_FIELD(f, "gsnn.detection_threshold", gsnn.detection_threshold);
    GSNN_FIELD(f, "gsnn.expand_per_step", gsnn.expand_per_step);
    GSNN_FIELD(f, "gsnn.steps", gsnn.steps);
    GSNN_FIELD(f, "gsnn.hidden_dim", gsnn.hidden_dim);
    GSNN_FIELD(f, "gsnn.out_dim", gsnn.out_dim);
    GSNN_FIELD(f, "gsnn.importance_discount", gsnn.importance_discount);
    GSNN_FIELD(f, "gsnn.annotation_dim", gsnn.annotation_dim);
    GSNN_FIELD(f, "gsnn.expansion_rounds", gsnn.expansion_rounds);
    GSNN_BOOL(f, "gsnn.binary_annotation", gsnn.binary_annotation);
    GSNN_FIELD(f, "gsnn.importance_weight", gsnn.importance_weight);
    GSNN_FIELD(f, "gsnn.importance_max_hops", gsnn.importance_max_hops);
    GSNN_BOOL(f, "gsnn.sum_label_loss", gsnn.sum_label_loss);

    GSNN_FIELD(f, "train.epochs", train.epochs);
    GSNN_FIELD(f, "train.batch_size", train.batch_size);
    GSNN_FIELD(f, "train.dropout", train.dropout);
    GSNN_FIELD(f, "train.seed", train.seed);
    add_optimizer(f, "optim.graph.", &TrainConfig::graph_optimizer);
    add_optimizer(f, "optim.classifier.", &TrainConfig::classifier_optimizer);

    GSNN_FIELD(f, "scene.seed_concept_prob", scene.seed_concept_prob);
    GSNN_FIELD(f, "scene.neighbor_inclusion_prob", scene.neighbor_inclusion_prob);
    GSNN_FIELD(f, "scene.detection_noise", scene.detection_noise);
    GSNN_FIELD(f, "scene.detector_miss_rate", scene.detector_miss_rate);
    GSNN_FIELD(f, "scene.feature_dim", scene.feature_dim);
    GSNN_FIELD(f, "scene.feature_noise", scene.feature_noise);

    GSNN_FIELD(f, "synth.objects", synth.objects);
    GSNN_FIELD(f, "synth.attributes", synth.attributes);
    GSNN_FIELD(f, "synth.detectable", synth.detectable);
    GSNN_FIELD(f, "synth.clusters", synth.clusters);
    GSNN_FIELD(f, "synth.within_cluster_prob", synth.within_cluster_prob);
    GSNN_FIELD(f, "synth.cross_cluster_edges", synth.cross_cluster_edges);
    GSNN_FIELD(f, "synth.objects_per_attribute", synth.objects_per_attribute);
    GSNN_FIELD(f, "synth.noise_records", synth.noise_records);
    GSNN_FIELD(f, "synth.min_count", synth.min_count);
    GSNN_FIELD(f, "synth.seed", synth.seed);

    f["bench.sizes"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                               c.bench.sizes = parse_sizes(k, v);
                             },
                             [](const RunConfig& c) {
                               std::string s;
                               for (auto n : c.bench.sizes) s += (s.empty() ? "" : ",") + std::to_string(n);
                               return s;
                             }};
    GSNN_FIELD(f, "bench.trials", bench.trials);
    GSNN_FIELD(f, "bench.mean_degree", bench.mean_degree);
    GSNN_FIELD(f, "bench.edge_types", bench.edge_types);
    GSNN_FIELD(f, "bench.detectables", bench.detectables);
    GSNN_FIELD(f, "bench.detections", bench.detections);
    GSNN_FIELD(f, "bench.fit_min_nodes", bench.fit_min_nodes);
    GSNN_FIELD(f, "bench.dense_max_nodes", bench.dense_max_nodes);
    GSNN_FIELD(f, "bench.seed", bench.seed);
    return f;
  }();
  return table;
}

#undef GSNN_FIELD
#undef GSNN_BOOL

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse_key_values(in);
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& f = fields();
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, key, value);
}

void apply_config(RunConfig& config, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) apply_setting(config, k, v);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& [k, f] : fields()) out << k << " = " << f.get(config) << '\n';
}

}  // namespace gsnn
