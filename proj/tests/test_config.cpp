#include <sstream>

#include "doctest.h"
#include "gsnn/config.hpp"

using namespace gsnn;

TEST_CASE("key value parsing") {
  std::istringstream in("# comment\ngsnn.steps = 4\n\ntrain.epochs=7  # trailing\ngsnn.steps=5\n");
  const auto kv = parse_key_values(in);
  CHECK(kv.at("gsnn.steps") == "5");
  CHECK(kv.at("train.epochs") == "7");
  std::istringstream bad("gsnn.steps 4\n");
  CHECK_THROWS_AS(parse_key_values(bad), ParseError);
}

TEST_CASE("settings apply and validate") {
  RunConfig c;
  apply_setting(c, "gsnn.expand_per_step", "7");
  apply_setting(c, "optim.graph.kind", "sgd");
  apply_setting(c, "optim.classifier.lr", "0.2");
  apply_setting(c, "bench.sizes", "10,20,30");
  apply_setting(c, "gsnn.sum_label_loss", "true");
  CHECK(c.gsnn.expand_per_step == 7);
  CHECK(c.train.graph_optimizer.kind == OptimizerKind::sgd_momentum);
  CHECK(c.train.classifier_optimizer.learning_rate == 0.2);
  CHECK(c.bench.sizes == std::vector<std::size_t>{10, 20, 30});
  CHECK(c.gsnn.sum_label_loss);
  CHECK_THROWS_AS(apply_setting(c, "gsnn.nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "gsnn.steps", "three"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "optim.graph.kind", "rmsprop"), ConfigError);
}

TEST_CASE("written config reads back to the same values") {
  RunConfig c;
  apply_setting(c, "gsnn.importance_discount", "0.25");
  apply_setting(c, "scene.detection_noise", "0.123456789");
  std::stringstream s;
  write_config(s, c);
  RunConfig d;
  apply_config(d, parse_key_values(s));
  std::stringstream t;
  write_config(t, d);
  CHECK(s.str() == t.str());
  CHECK(d.scene.detection_noise == 0.123456789);
  CHECK(config_keys().size() > 30);
}
