// gsnn: graph building, data generation, training, evaluation, sensitivity
// analysis and benchmarks from the command line.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gsnn/config.hpp"
#include "gsnn/eval.hpp"
#include "gsnn/kgraph.hpp"
#include "gsnn/pipeline.hpp"
#include "gsnn/synthdata.hpp"

namespace {

using namespace gsnn;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config_path;
  std::vector<std::string> settings;
  int threads = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool wants_seed) {
  cmd->add_option("--config", c.config_path, "key=value config file (default: $GSNN_CONFIG)");
  cmd->add_option("--set", c.settings, "override one config key, e.g. --set gsnn.steps=2")->take_all();
  cmd->add_option("--threads", c.threads, "cap worker threads (1 = deterministic reference mode)");
  if (wants_seed) cmd->add_option("--seed", c.seed, "root random seed")->required();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

// defaults < sidecar < config file (or $GSNN_CONFIG) < --set
RunConfig load_config(const Common& c, const std::string& sidecar = {}) {
  RunConfig cfg;
  if (!sidecar.empty() && std::filesystem::exists(sidecar)) apply_config(cfg, read_key_values(sidecar));
  std::string path = c.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  }
  if (!path.empty()) apply_config(cfg, read_key_values(path));
  for (const auto& s : c.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.threads > 0) set_thread_count(c.threads);
  cfg.train.exec = (c.threads == 1) ? Exec::serial : Exec::parallel;
  cfg.gsnn.validate();
  cfg.train.validate();
  return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, std::size_t full) {
  std::vector<std::size_t> out;
  for (const auto& t : split_csv(s)) {
    if (t == "full") {
      out.push_back(full);
      continue;
    }
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(t)));
    } catch (const std::exception&) {
      throw ConfigError("bad size '" + t + "'");
    }
  }
  return out;
}

Dataset load_data(const std::string& path, const KnowledgeGraph& g) {
  Dataset d = read_dataset(std::filesystem::path(path));
  if (d.detection_count != g.detectables().size() || d.label_count != g.output_labels().size()) {
    throw DimensionError("dataset '" + path + "' has " + std::to_string(d.detection_count) + " detections / " +
                         std::to_string(d.label_count) + " labels; graph has " + std::to_string(g.detectables().size()) +
                         " / " + std::to_string(g.output_labels().size()));
  }
  return d;
}

Model load_model(const std::string& ckpt, const KnowledgeGraph& g, const GsnnConfig& c) {
  return Model::from_checkpoint(load_checkpoint(std::filesystem::path(ckpt)), g, c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph search neural network toolkit"};
  app.require_subcommand(1);

  // gen-cooccur
  Common gc_common;
  std::string gc_dir;
  auto* gen_cooccur = app.add_subcommand("gen-cooccur", "write a synthetic co-occurrence table and label list");
  gen_cooccur->add_option("--out-dir", gc_dir, "output directory")->required();
  add_common(gen_cooccur, gc_common, true);

  // build-graph
  Common bg_common;
  std::string bg_in, bg_labels, bg_tax, bg_out;
  std::int64_t bg_prune = 200;
  auto* build = app.add_subcommand("build-graph", "build a knowledge graph from co-occurrence counts");
  build->add_option("--input", bg_in, "co-occurrence TSV (a, relation, b, count)")->required();
  build->add_option("--labels", bg_labels, "label list (name, kind, detectable)");
  build->add_option("--taxonomy", bg_tax, "taxonomy TSV to fuse (src, relation, dst)");
  build->add_option("--prune", bg_prune, "drop relations seen fewer times than this")->capture_default_str();
  build->add_option("--out", bg_out, "graph file")->required();
  add_common(build, bg_common, false);

  // gen-data
  Common gd_common;
  std::string gd_graph, gd_dir;
  std::size_t gd_train = 5000, gd_test = 1000;
  auto* gen_data = app.add_subcommand("gen-data", "sample a synthetic train/test split");
  gen_data->add_option("--graph", gd_graph, "graph file")->required();
  gen_data->add_option("--out-dir", gd_dir, "output directory")->required();
  gen_data->add_option("--train", gd_train, "training examples")->capture_default_str();
  gen_data->add_option("--test", gd_test, "test examples")->capture_default_str();
  add_common(gen_data, gd_common, true);

  // train
  Common tr_common;
  std::string tr_graph, tr_data, tr_out, tr_log, tr_model = "gsnn";
  std::optional<int> tr_epochs;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--graph", tr_graph, "graph file")->required();
  train_cmd->add_option("--data", tr_data, "training dataset")->required();
  train_cmd->add_option("--model", tr_model, "gsnn, feature_only or feature_det")->capture_default_str();
  train_cmd->add_option("--epochs", tr_epochs, "epochs (train.epochs)");
  train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
  train_cmd->add_option("--log", tr_log, "per-epoch loss log (default: stderr)");
  add_common(train_cmd, tr_common, true);

  // eval
  Common ev_common;
  std::string ev_graph, ev_data, ev_ckpt, ev_base, ev_out, ev_summary;
  auto* eval_cmd = app.add_subcommand("eval", "per-category AP and mAP on a dataset");
  eval_cmd->add_option("--graph", ev_graph, "graph file")->required();
  eval_cmd->add_option("--data", ev_data, "test dataset")->required();
  eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--baseline", ev_base, "baseline checkpoint for per-category deltas");
  eval_cmd->add_option("--out", ev_out, "per-category TSV");
  eval_cmd->add_option("--summary", ev_summary, "key=value summary (default: stdout)");
  add_common(eval_cmd, ev_common, false);

  // sensitivity
  Common se_common;
  std::string se_graph, se_data, se_ckpt, se_label, se_out;
  std::size_t se_example = 0, se_top = 10;
  auto* sens = app.add_subcommand("sensitivity", "derivatives of one class logit w.r.t. states and detections");
  sens->add_option("--graph", se_graph, "graph file")->required();
  sens->add_option("--data", se_data, "dataset")->required();
  sens->add_option("--checkpoint", se_ckpt, "model checkpoint")->required();
  sens->add_option("--example", se_example, "example index")->capture_default_str();
  sens->add_option("--label", se_label, "label name or index")->required();
  sens->add_option("--top", se_top, "rows per ranking")->capture_default_str();
  sens->add_option("--out", se_out, "output table (default: stdout)");
  add_common(sens, se_common, false);

  // bench
  Common be_common;
  std::string be_out, be_sizes;
  std::optional<int> be_trials;
  auto* bench = app.add_subcommand("bench", "dense vs budgeted forward+backward timing sweep");
  bench->add_option("--sizes", be_sizes, "comma-separated node counts (bench.sizes)");
  bench->add_option("--trials", be_trials, "trials per size (bench.trials)");
  bench->add_option("--out", be_out, "timing TSV (default: stdout)");
  add_common(bench, be_common, true);

  // lowdata
  Common ld_common;
  std::string ld_graph, ld_train, ld_test, ld_sizes = "full,2000,1000,500", ld_models = "gsnn,feature_det,feature_only",
                                                ld_out;
  auto* lowdata = app.add_subcommand("lowdata", "mAP against training-set size");
  lowdata->add_option("--graph", ld_graph, "graph file")->required();
  lowdata->add_option("--train", ld_train, "training dataset")->required();
  lowdata->add_option("--test", ld_test, "test dataset")->required();
  lowdata->add_option("--sizes", ld_sizes, "descending prefix sizes; 'full' = whole file")->capture_default_str();
  lowdata->add_option("--models", ld_models, "model kinds")->capture_default_str();
  lowdata->add_option("--out", ld_out, "table TSV (default: stdout)");
  add_common(lowdata, ld_common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cooccur) {
      RunConfig cfg = load_config(gc_common);
      cfg.synth.seed = *gc_common.seed;
      const SyntheticSource src = generate_cooccurrence(cfg.synth);
      std::filesystem::create_directories(gc_dir);
      auto rec = open_out(gc_dir + "/cooccurrence.tsv");
      write_cooccurrence(rec, src.records);
      auto lab = open_out(gc_dir + "/labels.tsv");
      write_labels(lab, src.labels);
      std::cout << "records=" << src.records.size() << "\nlabels=" << src.labels.size() << '\n';
    } else if (*build) {
      load_config(bg_common);
      std::ifstream in(bg_in);
      if (!in) throw IoError("cannot open '" + bg_in + "'");
      const auto records = parse_cooccurrence(in);
      std::vector<LabelDecl> labels;
      if (!bg_labels.empty()) {
        std::ifstream lin(bg_labels);
        if (!lin) throw IoError("cannot open '" + bg_labels + "'");
        labels = parse_labels(lin);
      }
      BuildReport rep;
      KnowledgeGraph g = build_graph(records, bg_prune, labels, &rep);
      FusionReport fused;
      if (!bg_tax.empty()) {
        std::ifstream tin(bg_tax);
        if (!tin) throw IoError("cannot open '" + bg_tax + "'");
        g = fuse_taxonomy(g, parse_taxonomy(tin), &fused);
      }
      save_graph(g, std::filesystem::path(bg_out));
      std::cout << "nodes=" << g.node_count() << "\nedges=" << g.edge_count() << "\nedge_types=" << g.edge_type_count()
                << "\nlabels=" << g.output_labels().size() << "\ndetectable=" << g.detectables().size()
                << "\nrecords=" << rep.records << "\npruned_edges=" << rep.pruned_edges
                << "\nself_loops=" << rep.self_loops;
      if (!bg_tax.empty()) {
        std::cout << "\ntaxonomy_nodes=" << fused.nodes_added << "\ntaxonomy_edges=" << fused.edges_added
                  << "\ntaxonomy_dropped=" << fused.dropped;
      }
      std::cout << '\n';
    } else if (*gen_data) {
      RunConfig cfg = load_config(gd_common);
      const KnowledgeGraph g = load_graph(std::filesystem::path(gd_graph));
      cfg.scene.graph = &g;
      const auto files = generate_dataset(cfg.scene, gd_train, gd_test, *gd_common.seed, gd_dir);
      std::cout << "train=" << files.train.string() << "\ntest=" << files.test.string()
                << "\nmanifest=" << files.manifest.string() << '\n';
    } else if (*train_cmd) {
      RunConfig cfg = load_config(tr_common);
      if (tr_epochs) cfg.train.epochs = *tr_epochs;
      cfg.train.validate();
      const KnowledgeGraph g = load_graph(std::filesystem::path(tr_graph));
      const Dataset data = load_data(tr_data, g);
      Model m = Model::create(parse_model_kind(tr_model), g, cfg.gsnn, data.image_dim, cfg.train.seed);
      std::ofstream log_file;
      std::ostream* log = &std::cerr;
      if (!tr_log.empty()) {
        log_file = open_out(tr_log);
        log = &log_file;
      }
      *log << "model " << tr_model << "\texamples " << data.examples.size() << "\tparameters "
           << m.params().scalar_count() << '\n';
      train(m, data.examples, cfg.train, log);
      save_checkpoint(m.params(), std::filesystem::path(tr_out));
      auto side = open_out(tr_out + ".config");
      write_config(side, cfg);
    } else if (*eval_cmd) {
      RunConfig cfg = load_config(ev_common, ev_ckpt + ".config");
      const KnowledgeGraph g = load_graph(std::filesystem::path(ev_graph));
      const Dataset data = load_data(ev_data, g);
      const Model m = load_model(ev_ckpt, g, cfg.gsnn);
      const EvalReport r = evaluate(m, data.examples, cfg.train.exec);
      std::optional<EvalReport> base;
      if (!ev_base.empty()) {
        RunConfig bcfg = load_config(ev_common, ev_base + ".config");
        const Model b = load_model(ev_base, g, bcfg.gsnn);
        base = evaluate(b, data.examples, cfg.train.exec);
      }
      if (!ev_out.empty()) {
        auto out = open_out(ev_out);
        write_eval_tsv(out, g, r, base ? &*base : nullptr);
      }
      if (ev_summary.empty()) {
        write_eval_summary(std::cout, r, base ? &*base : nullptr);
      } else {
        auto out = open_out(ev_summary);
        write_eval_summary(out, r, base ? &*base : nullptr);
      }
    } else if (*sens) {
      RunConfig cfg = load_config(se_common, se_ckpt + ".config");
      const KnowledgeGraph g = load_graph(std::filesystem::path(se_graph));
      const Dataset data = load_data(se_data, g);
      const Model m = load_model(se_ckpt, g, cfg.gsnn);
      if (se_example >= data.examples.size()) throw RangeError("example index out of range");
      std::size_t label = 0;
      if (auto node = g.find(se_label)) {
        const auto& labels = g.output_labels();
        auto it = std::find(labels.begin(), labels.end(), *node);
        if (it == labels.end()) throw RangeError("'" + se_label + "' is not an output label");
        label = static_cast<std::size_t>(it - labels.begin());
      } else {
        try {
          label = static_cast<std::size_t>(std::stoull(se_label));
        } catch (const std::exception&) {
          throw RangeError("unknown label '" + se_label + "'");
        }
      }
      const SensitivityTable t = sensitivity(m, data.examples[se_example], label, cfg.train.exec);
      if (se_out.empty()) {
        write_sensitivity(std::cout, g, t, se_top);
      } else {
        auto out = open_out(se_out);
        write_sensitivity(out, g, t, se_top);
      }
    } else if (*bench) {
      RunConfig cfg = load_config(be_common);
      cfg.bench.gsnn = cfg.gsnn;
      cfg.bench.seed = *be_common.seed;
      if (!be_sizes.empty()) apply_setting(cfg, "bench.sizes", be_sizes);
      if (be_trials) cfg.bench.trials = *be_trials;
      const ScalingReport r = scaling_benchmark(cfg.bench, &std::cerr);
      if (be_out.empty()) {
        write_scaling_tsv(std::cout, r);
      } else {
        auto out = open_out(be_out);
        write_scaling_tsv(out, r);
      }
    } else if (*lowdata) {
      RunConfig cfg = load_config(ld_common);
      const KnowledgeGraph g = load_graph(std::filesystem::path(ld_graph));
      const Dataset tr = load_data(ld_train, g);
      const Dataset te = load_data(ld_test, g);
      std::vector<ModelKind> kinds;
      for (const auto& k : split_csv(ld_models)) kinds.push_back(parse_model_kind(k));
      const auto rows = lowdata_sweep(g, tr.examples, te.examples, parse_sizes(ld_sizes, tr.examples.size()), kinds,
                                      cfg.gsnn, cfg.train, tr.image_dim, &std::cerr);
      if (ld_out.empty()) {
        write_lowdata_tsv(std::cout, rows);
      } else {
        auto out = open_out(ld_out);
        write_lowdata_tsv(out, rows);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "gsnn: config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "gsnn: numeric failure in " << e.stage() << ": " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "gsnn: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "gsnn: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
