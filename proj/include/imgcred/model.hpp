#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "imgcred/convnet.hpp"
#include "imgcred/logreg.hpp"

namespace imgcred {

// What a base learner sees of one instance.
struct Sample {
  std::vector<double> features;
  std::optional<ImageTensor> image;  // already fitted to the network input
};

using Model = std::variant<LogRegModel, ConvNet>;

struct Prediction {
  int label = 0;
  double prob_fake = 0.0;
};

double prob_fake(const Model& model, const Sample& x);

// label = 1 iff prob_fake >= 0.5
Prediction predict(const Model& model, const Sample& x);
inline int label_from_prob(double prob_fake) { return prob_fake >= 0.5 ? 1 : 0; }

// Model file: {"format_version": 1, "kind": "convnet"|"logreg", "spec": ..., "parameters": ...}
nlohmann::json spec_to_json(const ConvNetSpec& spec);
ConvNetSpec spec_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace imgcred
