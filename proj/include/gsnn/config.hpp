#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gsnn/eval.hpp"
#include "gsnn/synthdata.hpp"

namespace gsnn {

/// Everything a command can be configured with.
struct RunConfig {
  GsnnConfig gsnn;
  TrainConfig train;
  SceneModel scene;
  SyntheticGraphSpec synth;
  ScalingConfig bench;
};

/// `key = value` lines; '#' starts a comment. Later keys win.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Applies known keys ("gsnn.steps", "train.epochs", "optim.graph.lr", ...);
/// an unknown key or malformed value throws ConfigError.
void apply_config(RunConfig& config, const std::map<std::string, std::string>& values);
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

std::vector<std::string> config_keys();

/// Writes every key with its current value.
void write_config(std::ostream& out, const RunConfig& config);

inline constexpr const char* kConfigEnv = "GSNN_CONFIG";

}  // namespace gsnn
