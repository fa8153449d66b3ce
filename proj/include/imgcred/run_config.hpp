#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "imgcred/convnet.hpp"
#include "imgcred/evaluation.hpp"
#include "imgcred/pipeline.hpp"
#include "imgcred/train_config.hpp"
#include "imgcred/transfer_boost.hpp"

namespace imgcred {

struct DedupParams {
  int planes = 64;
  int threshold = 0;
};

// Paths from a config file are resolved against the file's directory.
struct RunPaths {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> patterns;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> external_model;
  std::optional<std::filesystem::path> out_dir;
  std::map<std::string, std::filesystem::path> lexicons;
};

struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  LearnerKind learner = LearnerKind::logreg;
  TrainConfig logreg = logreg_defaults();
  TrainConfig convnet;
  ConvNetSpec convnet_spec = ConvNetSpec::desk_default();
  BoostConfig boost;
  ShiftSpec shift = ShiftSpec::benchmark();
  BovwParams bovw;
  DedupParams dedup;
  std::vector<Arm> arms = all_arms();
  FeatureLayer transfer_layer = FeatureLayer::FC6;

  LearnerSettings learner_settings() const { return {logreg, convnet, convnet_spec}; }
};

// Unknown keys are rejected so typos surface as data errors.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                               RunConfig base = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace imgcred
