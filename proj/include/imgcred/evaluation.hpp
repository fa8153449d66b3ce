#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imgcred/convnet.hpp"
#include "imgcred/data_model.hpp"
#include "imgcred/features.hpp"
#include "imgcred/pipeline.hpp"
#include "imgcred/transfer_boost.hpp"

namespace imgcred {

// Fake is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::string method_name;
  std::string row;  // table row tag such as "(8)"
  double accuracy = 0.0;
  ClassMetrics fake;
  ClassMetrics real;
  ConfusionCounts counts;
  bool skipped = false;
  std::string note;
};

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);
MetricsReport metrics_from_counts(const ConfusionCounts& c, std::string method_name = {});
MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                              std::string method_name = {});

nlohmann::json metrics_to_json(const MetricsReport& r);
nlohmann::json metrics_to_json(std::span<const MetricsReport> reports);
// Accuracy, then precision/recall/F1 for fake and for real images.
std::string render_table(std::span<const MetricsReport> reports);

// Stratified split of the labelled target instances: per class,
// floor(count * train/(train+test)) go to training after a seeded shuffle.
// Auxiliary instances stay in the training half. Output keeps manifest order.
std::pair<Dataset, Dataset> split(const Dataset& data, std::pair<int, int> ratio, std::uint64_t seed);

// Synthetic domain-shift benchmark. Target instances come from
// class-conditional Gaussians; auxiliary instances from the same draw rotated
// in the (x0, x1) plane and shifted, with labels flipped at the noise rate.
struct ShiftSpec {
  std::size_t aux_size = 2000;
  std::size_t target_train_size = 100;
  std::size_t test_size = 1000;
  std::vector<double> mean_fake;
  std::vector<double> mean_real;
  std::vector<std::vector<double>> cov_fake;  // identity when empty
  std::vector<std::vector<double>> cov_real;
  std::vector<double> shift;
  double rotation_deg = 25.0;
  double aux_label_noise_rate = 0.2;
  double fake_fraction = 0.5;
  bool render_images = false;
  std::uint64_t seed = 0;

  std::size_t dim() const { return mean_fake.size(); }
  void validate() const;

  // Means at +-separation/2 along x0, identity covariances, a 1-sigma shift
  // along x1, 25 degree rotation and 20% auxiliary label noise.
  static ShiftSpec benchmark(std::size_t dim = 100, double separation = 3.0, std::uint64_t seed = 0);
};

nlohmann::json shift_spec_to_json(const ShiftSpec& s);
ShiftSpec shift_spec_from_json(const nlohmann::json& j, ShiftSpec base = ShiftSpec::benchmark());

struct SynthResult {
  Dataset data;                     // auxiliary, then target_train, then target_test
  std::vector<ImageTensor> images;  // parallel to instances when rendered
  std::size_t flipped = 0;          // auxiliary labels flipped by noise
};

SynthResult synth_shift(const ShiftSpec& spec);

// 16x16 grayscale with two Gaussian blobs whose brightness encodes x0 and x1.
ImageTensor render_point(std::span<const double> x);

// Writes images under dir/images and the manifest to dir/manifest.jsonl.
void write_synth(SynthResult& result, const std::filesystem::path& dir);

// Monte Carlo accuracy of the Bayes-optimal target classifier.
double bayes_accuracy(const ShiftSpec& spec, std::size_t samples, std::uint64_t seed);

enum class Arm {
  text_based,                 // (1)
  bovw,                       // (2)
  data_transfer,              // (3)
  feature_transfer_external,  // (4)
  feature_transfer_aux,       // (5)
  model_transfer_external,    // (6)
  model_transfer_aux,         // (7)
  iterative_transfer,         // (8)
  target_only,
  combined,
};
std::string_view to_string(Arm a);
std::string_view arm_row(Arm a);
Arm parse_arm(std::string_view s);
std::vector<Arm> all_arms();

struct BovwParams {
  int k = 256;
  int grid_step = 8;
  int patch = 16;
  int max_iters = 50;
};

struct ComparisonConfig {
  std::vector<Arm> arms;
  LearnerKind learner = LearnerKind::logreg;
  LearnerSettings settings;
  BoostConfig boost;
  BovwParams bovw;
  Lexicons lexicons = Lexicons::defaults();
  FeatureLayer transfer_layer = FeatureLayer::FC6;
  std::optional<ConvNet> external_source;  // stands in for an ImageNet-trained network
  std::uint64_t seed = 0;
};

struct ComparisonResult {
  std::vector<MetricsReport> reports;
  std::vector<IterationLog> boost_log;  // from the iterative arm, if run
};

// One report per arm, in arm order. Arms lacking a modality come back skipped.
ComparisonResult run_comparison(const PreparedData& data, const ComparisonConfig& cfg);

// The iterative arm on its own: boosts over auxiliary + target_train and, when
// target_test rows exist, logs ensemble accuracy on them. finetune_based
// initialisation uses `fine_tuned` if given, else trains the auxiliary model
// and fine-tunes it exactly as the model transfer arm does.
BoostResult iterative_transfer(const PreparedData& data, const ComparisonConfig& cfg,
                               const Model* fine_tuned = nullptr);

// Per layer: extract features, logistic regression on target_train, score target_test.
std::vector<MetricsReport> layer_comparison(const ConvNet& net, const PreparedData& data,
                                            std::span<const FeatureLayer> layers,
                                            const TrainConfig& logreg_cfg);

}  // namespace imgcred
