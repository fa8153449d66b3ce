#include "imgcred/pipeline.hpp"

#include <cmath>
#include <map>

#include "imgcred/error.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

std::string_view to_string(LearnerKind k) { return k == LearnerKind::logreg ? "logreg" : "convnet"; }

LearnerKind parse_learner_kind(std::string_view s) {
  if (s == "logreg") return LearnerKind::logreg;
  if (s == "convnet") return LearnerKind::convnet;
  throw DataError("unknown learner '" + std::string(s) + "'");
}

std::vector<std::size_t> PreparedData::indices(Domain d) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    if (data.instances[i].domain == d) out.push_back(i);
  }
  return out;
}

bool PreparedData::has_features(std::span<const std::size_t> idx) const {
  if (idx.empty()) return false;
  const auto dim = samples[idx[0]].features.size();
  for (auto i : idx) {
    if (samples[i].features.empty() || samples[i].features.size() != dim) return false;
  }
  return true;
}

bool PreparedData::has_images(std::span<const std::size_t> idx) const {
  if (idx.empty()) return false;
  for (auto i : idx) {
    if (!images[i]) return false;
  }
  return true;
}

bool PreparedData::has_text(std::span<const std::size_t> idx) const {
  if (idx.empty()) return false;
  for (auto i : idx) {
    if (!data.instances[i].text) return false;
  }
  return true;
}

std::vector<Sample> PreparedData::gather_samples(std::span<const std::size_t> idx) const {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples[i]);
  return out;
}

std::vector<int> PreparedData::gather_labels(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    if (labels[i] < 0) throw DataError("instance '" + data.instances[i].id + "' has no label");
    out.push_back(labels[i]);
  }
  return out;
}

std::vector<ImageTensor> PreparedData::gather_images(std::span<const std::size_t> idx) const {
  std::vector<ImageTensor> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    if (!samples[i].image) throw DataError("instance '" + data.instances[i].id + "' has no usable image");
    out.push_back(*samples[i].image);
  }
  return out;
}

PreparedData prepare(Dataset data, const PrepareOptions& opts) {
  PreparedData p;
  const std::size_t n = data.instances.size();
  p.samples.resize(n);
  p.images.resize(n);
  p.labels.resize(n, -1);
  std::map<std::string, std::size_t> feature_rows;
  if (opts.features) {
    for (std::size_t r = 0; r < opts.features->ids.size(); ++r) feature_rows[opts.features->ids[r]] = r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = data.instances[i];
    if (inst.label) p.labels[i] = *inst.label;
    if (opts.features) {
      const auto it = feature_rows.find(inst.id);
      if (it != feature_rows.end()) p.samples[i].features = opts.features->rows[it->second];
    } else {
      p.samples[i].features = inst.features;
    }
    if (opts.load_images && inst.image_path) {
      p.images[i] = load_image(data.base_dir / *inst.image_path);
      if (opts.network_input) p.samples[i].image = fit_to_input(*p.images[i], *opts.network_input);
    }
  }
  p.data = std::move(data);
  return p;
}

BaseLearner make_learner(LearnerKind kind, const LearnerSettings& settings) {
  if (kind == LearnerKind::logreg) {
    return [cfg = settings.logreg](std::span<const Sample> samples, std::span<const int> labels,
                                   std::span<const double> weights, std::uint64_t) -> Model {
      FeatureMatrix X;
      X.reserve(samples.size());
      for (const auto& s : samples) X.push_back(s.features);
      return train_weighted_logreg(X, labels, weights, cfg);
    };
  }
  return [cfg = settings.convnet, spec = settings.net_spec](std::span<const Sample> samples, std::span<const int> labels,
                                                            std::span<const double> weights,
                                                            std::uint64_t seed) -> Model {
    std::vector<ImageTensor> images;
    images.reserve(samples.size());
    for (const auto& s : samples) {
      if (!s.image) throw DataError("convolutional learner needs an image for every instance");
      images.push_back(*s.image);
    }
    TrainConfig run = cfg;
    run.seed = seed;
    return sgd_train(ConvNet(spec, mix_seed(seed, 0x1417)), images, labels, weights, run);
  };
}

namespace {

std::vector<double> manifest_weights(const PreparedData& data, std::span<const std::size_t> idx) {
  std::vector<double> w;
  w.reserve(idx.size());
  for (auto i : idx) w.push_back(data.data.instances[i].weight);
  return w;
}

void require_modality(LearnerKind kind, const PreparedData& data, std::span<const std::size_t> idx) {
  if (kind == LearnerKind::logreg && !data.has_features(idx)) {
    throw DataError("logistic regression needs a feature vector for every instance");
  }
  if (kind == LearnerKind::convnet && !data.has_images(idx)) {
    throw DataError("convolutional network needs an image for every instance");
  }
}

}  // namespace

Model train_model(LearnerKind kind, const LearnerSettings& settings, const PreparedData& data,
                  std::span<const std::size_t> idx, std::uint64_t seed) {
  require_modality(kind, data, idx);
  const auto samples = data.gather_samples(idx);
  const auto labels = data.gather_labels(idx);
  const auto weights = manifest_weights(data, idx);
  return make_learner(kind, settings)(samples, labels, weights, seed);
}

Model fine_tune_model(const Model& source, const LearnerSettings& settings, const PreparedData& data,
                      std::span<const std::size_t> idx, std::uint64_t seed) {
  const auto labels = data.gather_labels(idx);
  const auto weights = manifest_weights(data, idx);
  if (const auto* lr = std::get_if<LogRegModel>(&source)) {
    require_modality(LearnerKind::logreg, data, idx);
    FeatureMatrix X;
    for (auto i : idx) X.push_back(data.samples[i].features);
    return fit_weighted_logreg(X, labels, weights, settings.logreg, lr).model;
  }
  require_modality(LearnerKind::convnet, data, idx);
  TrainConfig cfg = settings.convnet;
  cfg.seed = seed;
  return fine_tune(std::get<ConvNet>(source), data.gather_images(idx), labels, weights, cfg);
}

std::vector<int> predict_labels(const Model& model, const PreparedData& data, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(predict(model, data.samples[i]).label);
  return out;
}

Standardizer Standardizer::fit(const FeatureMatrix& X) {
  Standardizer s;
  if (X.empty()) return s;
  const std::size_t d = X[0].size();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (const auto& row : X)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
  for (double& m : s.mean) m /= static_cast<double>(X.size());
  std::vector<double> var(d, 0.0);
  for (const auto& row : X)
    for (std::size_t j = 0; j < d; ++j) var[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(X.size()));
    s.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& X) const {
  FeatureMatrix out = X;
  for (auto& row : out) {
    if (row.size() != mean.size()) throw ShapeError("standardizer dimension mismatch");
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) * scale[j];
  }
  return out;
}

}  // namespace imgcred
