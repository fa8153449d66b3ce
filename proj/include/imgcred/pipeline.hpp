#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "imgcred/convnet.hpp"
#include "imgcred/data_model.hpp"
#include "imgcred/features.hpp"
#include "imgcred/logreg.hpp"
#include "imgcred/model.hpp"
#include "imgcred/transfer_boost.hpp"

namespace imgcred {

enum class LearnerKind { logreg, convnet };
std::string_view to_string(LearnerKind k);
LearnerKind parse_learner_kind(std::string_view s);

struct LearnerSettings {
  TrainConfig logreg = logreg_defaults();
  TrainConfig convnet;
  ConvNetSpec net_spec = ConvNetSpec::desk_default();
};

// Dataset with its images decoded and learner inputs materialised.
struct PreparedData {
  Dataset data;
  std::vector<Sample> samples;                     // parallel to data.instances
  std::vector<std::optional<ImageTensor>> images;  // decoded originals
  std::vector<int> labels;                         // -1 where absent

  std::vector<std::size_t> indices(Domain d) const;
  bool has_features(std::span<const std::size_t> idx) const;
  bool has_images(std::span<const std::size_t> idx) const;
  bool has_text(std::span<const std::size_t> idx) const;

  std::vector<Sample> gather_samples(std::span<const std::size_t> idx) const;
  std::vector<int> gather_labels(std::span<const std::size_t> idx) const;
  std::vector<ImageTensor> gather_images(std::span<const std::size_t> idx) const;  // network-fitted
};

struct PrepareOptions {
  bool load_images = true;
  std::optional<Shape3> network_input;   // fit images for the convnet when set
  const FeatureTable* features = nullptr;  // joined by id, replacing embedded features
};

PreparedData prepare(Dataset data, const PrepareOptions& opts);

// Base learner for run_boost and the comparison arms.
BaseLearner make_learner(LearnerKind kind, const LearnerSettings& settings);

// Train on the given rows with their manifest weights.
Model train_model(LearnerKind kind, const LearnerSettings& settings, const PreparedData& data,
                  std::span<const std::size_t> idx, std::uint64_t seed);

// Fine-tune `source` on the rows: convnets replace the output layer and
// retrain; logistic models refit shrunk towards the source weights.
Model fine_tune_model(const Model& source, const LearnerSettings& settings, const PreparedData& data,
                      std::span<const std::size_t> idx, std::uint64_t seed);

std::vector<int> predict_labels(const Model& model, const PreparedData& data, std::span<const std::size_t> idx);

// Column-wise z-scoring fitted on training rows.
struct Standardizer {
  std::vector<double> mean, scale;
  static Standardizer fit(const FeatureMatrix& X);
  FeatureMatrix apply(const FeatureMatrix& X) const;
};

}  // namespace imgcred
