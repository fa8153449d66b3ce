#include "imgcred/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "imgcred/error.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t hit, std::size_t false_alarm, std::size_t miss) {
  ClassMetrics m;
  m.precision = ratio(hit, hit + false_alarm);
  m.recall = ratio(hit, hit + miss);
  const double s = m.precision + m.recall;
  m.f1 = s > 0.0 ? 2.0 * m.precision * m.recall / s : 0.0;
  return m;
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& c, std::string method_name) {
  MetricsReport r;
  r.method_name = std::move(method_name);
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.fake = class_metrics(c.tp, c.fp, c.fn);
  r.real = class_metrics(c.tn, c.fn, c.fp);
  return r;
}

MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                              std::string method_name) {
  if (labels.empty()) throw ShapeError("cannot score an empty prediction list");
  return metrics_from_counts(confusion(predictions, labels), std::move(method_name));
}

namespace {

nlohmann::json class_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

}  // namespace

nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["method"] = r.method_name;
  j["row"] = r.row;
  if (r.skipped) {
    j["skipped"] = true;
    j["note"] = r.note;
    return j;
  }
  j["accuracy"] = r.accuracy;
  j["fake"] = class_json(r.fake);
  j["real"] = class_json(r.real);
  j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

nlohmann::json metrics_to_json(std::span<const MetricsReport> reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(metrics_to_json(r));
  return arr;
}

std::string render_table(std::span<const MetricsReport> reports) {
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.row.size() + 1 + r.method_name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %26s  %26s\n", static_cast<int>(name_w), "Method", "", "Fake Images",
                "Real Images");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s %8s %8s  %8s %8s %8s\n", static_cast<int>(name_w), "",
                "Accuracy", "Prec", "Recall", "F1", "Prec", "Recall", "F1");
  out += buf;
  for (const auto& r : reports) {
    const std::string name = r.row.empty() ? r.method_name : r.row + " " + r.method_name;
    if (r.skipped) {
      std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s %8s %8s  %8s %8s %8s\n", static_cast<int>(name_w),
                    name.c_str(), "-", "-", "-", "-", "-", "-", "-");
    } else {
      std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f %8.4f %8.4f  %8.4f %8.4f %8.4f\n",
                    static_cast<int>(name_w), name.c_str(), r.accuracy, r.fake.precision, r.fake.recall,
                    r.fake.f1, r.real.precision, r.real.recall, r.real.f1);
    }
    out += buf;
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::pair<int, int> ratio, std::uint64_t seed) {
  if (ratio.first < 0 || ratio.second < 0 || ratio.first + ratio.second <= 0) {
    throw DataError("split ratio must be non-negative with a positive sum");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const auto& inst = data.instances[i];
    if (inst.domain == Domain::auxiliary) continue;
    if (!inst.label) throw DataError("target instance '" + inst.id + "' has no label");
    by_class[static_cast<std::size_t>(*inst.label)].push_back(i);
  }
  std::vector<char> to_train(data.instances.size(), 0);
  Rng rng(seed);
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) throw DataError(std::string("no target instances of class ") + (c ? "fake" : "real"));
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t k = idx.size() * static_cast<std::size_t>(ratio.first) /
                          static_cast<std::size_t>(ratio.first + ratio.second);
    for (std::size_t j = 0; j < k; ++j) to_train[idx[j]] = 1;
  }
  Dataset train, test;
  train.base_dir = test.base_dir = data.base_dir;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    Instance inst = data.instances[i];
    if (inst.domain == Domain::auxiliary) {
      train.instances.push_back(std::move(inst));
    } else if (to_train[i]) {
      inst.domain = Domain::target_train;
      train.instances.push_back(std::move(inst));
    } else {
      inst.domain = Domain::target_test;
      test.instances.push_back(std::move(inst));
    }
  }
  return {std::move(train), std::move(test)};
}

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix identity(std::size_t d) {
  Matrix m(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) m[i][i] = 1.0;
  return m;
}

// Lower-triangular L with L L^T = a.
Matrix cholesky(const Matrix& a, const char* what) {
  const std::size_t d = a.size();
  Matrix l(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    if (a[i].size() != d) throw DataError(std::string(what) + " is not square");
    for (std::size_t j = 0; j <= i; ++j) {
      if (std::abs(a[i][j] - a[j][i]) > 1e-9 * (1.0 + std::abs(a[i][j]))) {
        throw DataError(std::string(what) + " is not symmetric");
      }
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (!(s > 1e-12 * (1.0 + std::abs(a[i][i])))) throw DataError(std::string(what) + " is degenerate");
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return l;
}

Matrix cov_or_identity(const Matrix& c, std::size_t d) { return c.empty() ? identity(d) : c; }

std::vector<double> draw(const std::vector<double>& mean, const Matrix& l, Rng& rng) {
  const std::size_t d = mean.size();
  std::vector<double> z(d);
  for (double& v : z) v = rng.normal();
  std::vector<double> x = mean;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k <= i; ++k) x[i] += l[i][k] * z[k];
  return x;
}

// Log density up to the shared constant: -0.5 |L^-1 (x-mu)|^2 - log det L.
double log_density(std::span<const double> x, const std::vector<double>& mean, const Matrix& l) {
  const std::size_t d = mean.size();
  std::vector<double> y(d);
  double logdet = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * y[k];
    y[i] = s / l[i][i];
    logdet += std::log(l[i][i]);
  }
  double q = 0.0;
  for (double v : y) q += v * v;
  return -0.5 * q - logdet;
}

std::string padded_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

// Exactly round(size * fraction) fakes, order shuffled.
std::vector<int> class_labels(std::size_t size, double fraction, Rng& rng) {
  const auto fakes = static_cast<std::size_t>(std::llround(static_cast<double>(size) * fraction));
  std::vector<int> y(size, 0);
  for (std::size_t i = 0; i < fakes && i < size; ++i) y[i] = 1;
  rng.shuffle(std::span<int>(y));
  return y;
}

}  // namespace

void ShiftSpec::validate() const {
  if (aux_size < 1 || target_train_size < 1 || test_size < 1) throw DataError("shift spec sizes must be >= 1");
  if (!(aux_label_noise_rate >= 0.0 && aux_label_noise_rate < 0.5)) {
    throw DataError("aux_label_noise_rate must lie in [0, 0.5)");
  }
  if (!(fake_fraction > 0.0 && fake_fraction < 1.0)) throw DataError("fake_fraction must lie in (0, 1)");
  const std::size_t d = dim();
  if (d < 2) throw DataError("shift spec needs at least two dimensions");
  if (mean_real.size() != d) throw DataError("mean_fake and mean_real differ in dimension");
  if (!shift.empty() && shift.size() != d) throw DataError("shift has the wrong dimension");
  if (!std::isfinite(rotation_deg)) throw DataError("rotation_deg must be finite");
  for (const auto* c : {&cov_fake, &cov_real}) {
    if (!c->empty() && c->size() != d) throw DataError("covariance has the wrong dimension");
    cholesky(cov_or_identity(*c, d), "covariance");
  }
}

ShiftSpec ShiftSpec::benchmark(std::size_t dim, double separation, std::uint64_t seed) {
  if (dim < 2) throw DataError("benchmark needs at least two dimensions");
  ShiftSpec s;
  s.mean_fake.assign(dim, 0.0);
  s.mean_real.assign(dim, 0.0);
  s.mean_fake[0] = separation / 2.0;
  s.mean_real[0] = -separation / 2.0;
  s.shift.assign(dim, 0.0);
  s.shift[1] = 1.0;
  s.seed = seed;
  return s;
}

nlohmann::json shift_spec_to_json(const ShiftSpec& s) {
  return {{"aux_size", s.aux_size},
          {"target_train_size", s.target_train_size},
          {"test_size", s.test_size},
          {"mean_fake", s.mean_fake},
          {"mean_real", s.mean_real},
          {"cov_fake", s.cov_fake},
          {"cov_real", s.cov_real},
          {"shift", s.shift},
          {"rotation_deg", s.rotation_deg},
          {"aux_label_noise_rate", s.aux_label_noise_rate},
          {"fake_fraction", s.fake_fraction},
          {"render_images", s.render_images},
          {"seed", s.seed}};
}

ShiftSpec shift_spec_from_json(const nlohmann::json& j, ShiftSpec base) {
  if (!j.is_object()) throw DataError("shift spec must be a JSON object");
  try {
    // A bare dimension/separation pair builds the standard benchmark first.
    if (j.contains("dim") || j.contains("separation")) {
      base = ShiftSpec::benchmark(j.value("dim", base.dim() ? base.dim() : std::size_t{100}),
                                  j.value("separation", 3.0), base.seed);
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "aux_size") base.aux_size = v.get<std::size_t>();
      else if (key == "target_train_size") base.target_train_size = v.get<std::size_t>();
      else if (key == "test_size") base.test_size = v.get<std::size_t>();
      else if (key == "mean_fake") base.mean_fake = v.get<std::vector<double>>();
      else if (key == "mean_real") base.mean_real = v.get<std::vector<double>>();
      else if (key == "cov_fake") base.cov_fake = v.get<Matrix>();
      else if (key == "cov_real") base.cov_real = v.get<Matrix>();
      else if (key == "shift") base.shift = v.get<std::vector<double>>();
      else if (key == "rotation_deg") base.rotation_deg = v.get<double>();
      else if (key == "aux_label_noise_rate") base.aux_label_noise_rate = v.get<double>();
      else if (key == "fake_fraction") base.fake_fraction = v.get<double>();
      else if (key == "render_images") base.render_images = v.get<bool>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "dim" || key == "separation") continue;
      else throw DataError("unknown shift spec field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad shift spec: ") + e.what());
  }
  base.validate();
  return base;
}

SynthResult synth_shift(const ShiftSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim();
  const Matrix l_fake = cholesky(cov_or_identity(spec.cov_fake, d), "cov_fake");
  const Matrix l_real = cholesky(cov_or_identity(spec.cov_real, d), "cov_real");
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);

  Rng rng(spec.seed);
  Rng label_rng(mix_seed(spec.seed, 1));
  Rng noise_rng(mix_seed(spec.seed, 2));
  SynthResult out;

  const auto point = [&](int y) { return y == 1 ? draw(spec.mean_fake, l_fake, rng) : draw(spec.mean_real, l_real, rng); };

  const auto aux_y = class_labels(spec.aux_size, spec.fake_fraction, label_rng);
  for (std::size_t i = 0; i < spec.aux_size; ++i) {
    auto x = point(aux_y[i]);
    const double x0 = x[0], x1 = x[1];
    x[0] = cs * x0 - sn * x1;
    x[1] = sn * x0 + cs * x1;
    if (!spec.shift.empty())
      for (std::size_t k = 0; k < d; ++k) x[k] += spec.shift[k];
    int y = aux_y[i];
    if (noise_rng.bernoulli(spec.aux_label_noise_rate)) {
      y = 1 - y;
      ++out.flipped;
    }
    Instance inst;
    inst.id = padded_id("aux", i);
    inst.label = y;
    inst.domain = Domain::auxiliary;
    inst.features = std::move(x);
    out.data.instances.push_back(std::move(inst));
  }
  const auto add_target = [&](std::size_t size, Domain domain, const char* prefix) {
    const auto ys = class_labels(size, spec.fake_fraction, label_rng);
    for (std::size_t i = 0; i < size; ++i) {
      Instance inst;
      inst.id = padded_id(prefix, i);
      inst.label = ys[i];
      inst.domain = domain;
      inst.features = point(ys[i]);
      out.data.instances.push_back(std::move(inst));
    }
  };
  add_target(spec.target_train_size, Domain::target_train, "trn");
  add_target(spec.test_size, Domain::target_test, "tst");

  if (spec.render_images) {
    out.images.reserve(out.data.instances.size());
    for (const auto& inst : out.data.instances) out.images.push_back(render_point(inst.features));
  }
  return out;
}

ImageTensor render_point(std::span<const double> x) {
  if (x.size() < 2) throw ShapeError("render_point needs at least two coordinates");
  constexpr int kSide = 16;
  constexpr double kSigma = 2.0;
  const double b0 = 1.0 / (1.0 + std::exp(-x[0]));
  const double b1 = 1.0 / (1.0 + std::exp(-x[1]));
  ImageTensor img(kSide, kSide, 1);
  for (int y = 0; y < kSide; ++y) {
    for (int c = 0; c < kSide; ++c) {
      const double r0 = (y - 4.5) * (y - 4.5) + (c - 4.5) * (c - 4.5);
      const double r1 = (y - 10.5) * (y - 10.5) + (c - 10.5) * (c - 10.5);
      const double v = b0 * std::exp(-r0 / (2 * kSigma * kSigma)) + b1 * std::exp(-r1 / (2 * kSigma * kSigma));
      img.at(y, c, 0) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

void write_synth(SynthResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  result.data.base_dir = dir;
  if (!result.images.empty()) {
    if (result.images.size() != result.data.instances.size()) {
      throw ShapeError("rendered images do not match the instances");
    }
    std::filesystem::create_directories(dir / "images");
    for (std::size_t i = 0; i < result.images.size(); ++i) {
      auto& inst = result.data.instances[i];
      inst.image_path = "images/" + inst.id + ".pgm";
      save_image(result.images[i], dir / *inst.image_path);
    }
  }
  save_manifest(result.data, dir / "manifest.jsonl");
}

double bayes_accuracy(const ShiftSpec& spec, std::size_t samples, std::uint64_t seed) {
  spec.validate();
  if (samples == 0) throw DataError("bayes_accuracy needs samples");
  const std::size_t d = spec.dim();
  const Matrix l_fake = cholesky(cov_or_identity(spec.cov_fake, d), "cov_fake");
  const Matrix l_real = cholesky(cov_or_identity(spec.cov_real, d), "cov_real");
  const double log_prior_odds = std::log(spec.fake_fraction / (1.0 - spec.fake_fraction));
  Rng rng(seed);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const int y = rng.bernoulli(spec.fake_fraction) ? 1 : 0;
    const auto x = y == 1 ? draw(spec.mean_fake, l_fake, rng) : draw(spec.mean_real, l_real, rng);
    const double score = log_density(x, spec.mean_fake, l_fake) - log_density(x, spec.mean_real, l_real) + log_prior_odds;
    if ((score >= 0.0 ? 1 : 0) == y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples);
}

std::string_view to_string(Arm a) {
  switch (a) {
    case Arm::text_based: return "text_based";
    case Arm::bovw: return "bovw";
    case Arm::data_transfer: return "data_transfer";
    case Arm::feature_transfer_external: return "feature_transfer_external";
    case Arm::feature_transfer_aux: return "feature_transfer_aux";
    case Arm::model_transfer_external: return "model_transfer_external";
    case Arm::model_transfer_aux: return "model_transfer_aux";
    case Arm::iterative_transfer: return "iterative_transfer";
    case Arm::target_only: return "target_only";
    case Arm::combined: return "combined";
  }
  return "?";
}

std::string_view arm_row(Arm a) {
  switch (a) {
    case Arm::text_based: return "(1)";
    case Arm::bovw: return "(2)";
    case Arm::data_transfer: return "(3)";
    case Arm::feature_transfer_external: return "(4)";
    case Arm::feature_transfer_aux: return "(5)";
    case Arm::model_transfer_external: return "(6)";
    case Arm::model_transfer_aux: return "(7)";
    case Arm::iterative_transfer: return "(8)";
    case Arm::target_only: return "(b1)";
    case Arm::combined: return "(b2)";
  }
  return "";
}

Arm parse_arm(std::string_view s) {
  for (Arm a : all_arms()) {
    if (to_string(a) == s) return a;
  }
  throw DataError("unknown arm '" + std::string(s) + "'");
}

std::vector<Arm> all_arms() {
  return {Arm::text_based,         Arm::bovw,          Arm::data_transfer,     Arm::feature_transfer_external,
          Arm::feature_transfer_aux, Arm::model_transfer_external, Arm::model_transfer_aux,
          Arm::iterative_transfer, Arm::target_only,   Arm::combined};
}

namespace {

struct Skip {
  std::string why;
};

std::uint64_t arm_seed(std::uint64_t seed, Arm arm) { return mix_seed(seed, static_cast<std::uint64_t>(arm) + 1); }
std::uint64_t aux_model_seed(std::uint64_t seed) { return mix_seed(seed, 0xa0); }

std::vector<std::size_t> concat(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Logistic regression on externally computed features for train/test rows.
MetricsReport logreg_on(const FeatureMatrix& train_x, std::span<const int> train_y, const FeatureMatrix& test_x,
                        std::span<const int> test_y, const TrainConfig& cfg) {
  const auto scaler = Standardizer::fit(train_x);
  const std::vector<double> w(train_y.size(), 1.0);
  const auto model = train_weighted_logreg(scaler.apply(train_x), train_y, w, cfg);
  const auto test = scaler.apply(test_x);
  std::vector<int> pred;
  pred.reserve(test.size());
  for (const auto& row : test) pred.push_back(label_from_prob(model.prob_fake(row)));
  return compute_metrics(pred, test_y);
}

class ComparisonRun {
 public:
  ComparisonRun(const PreparedData& data, const ComparisonConfig& cfg)
      : data_(data),
        cfg_(cfg),
        aux_(data.indices(Domain::auxiliary)),
        train_(data.indices(Domain::target_train)),
        test_(data.indices(Domain::target_test)) {}

  MetricsReport run(Arm arm, ComparisonResult& result) {
    MetricsReport r;
    try {
      if (test_.empty()) throw Skip{"no target test instances"};
      r = dispatch(arm, result);
    } catch (const Skip& s) {
      r = {};
      r.skipped = true;
      r.note = s.why;
    }
    r.method_name = std::string(to_string(arm));
    r.row = std::string(arm_row(arm));
    return r;
  }

 private:
  std::uint64_t seed(Arm arm) const { return arm_seed(cfg_.seed, arm); }

  std::vector<int> test_labels() const { return data_.gather_labels(test_); }

  void need_learner_input(std::span<const std::size_t> idx, const char* what) const {
    if (cfg_.learner == LearnerKind::logreg && !data_.has_features(idx)) {
      throw Skip{std::string(what) + " lack feature vectors"};
    }
    if (cfg_.learner == LearnerKind::convnet && !network_images(idx)) {
      throw Skip{std::string(what) + " lack images"};
    }
  }

  bool network_images(std::span<const std::size_t> idx) const {
    if (idx.empty()) return false;
    for (auto i : idx) {
      if (!data_.samples[i].image) return false;
    }
    return true;
  }

  void need_labels(std::span<const std::size_t> idx, const char* what) const {
    for (auto i : idx) {
      if (data_.labels[i] < 0) throw Skip{std::string(what) + " are not all labelled"};
    }
  }

  MetricsReport score(const Model& model) const {
    return compute_metrics(predict_labels(model, data_, test_), test_labels());
  }

  const Model& aux_model() {
    if (!aux_model_) {
      if (aux_.empty()) throw Skip{"no auxiliary instances"};
      need_learner_input(aux_, "auxiliary instances");
      need_labels(aux_, "auxiliary instances");
      aux_model_ = train_model(cfg_.learner, cfg_.settings, data_, aux_, aux_model_seed(cfg_.seed));
    }
    return *aux_model_;
  }

  // Convolutional source trained on the auxiliary images.
  const ConvNet& aux_network() {
    if (cfg_.learner == LearnerKind::convnet) return std::get<ConvNet>(aux_model());
    if (!aux_net_) {
      if (aux_.empty()) throw Skip{"no auxiliary instances"};
      if (!network_images(aux_)) throw Skip{"auxiliary instances lack images"};
      need_labels(aux_, "auxiliary instances");
      aux_net_ = std::get<ConvNet>(train_model(LearnerKind::convnet, cfg_.settings, data_, aux_, mix_seed(cfg_.seed, 0xa1)));
    }
    return *aux_net_;
  }

  const Model& model_transfer_aux() {
    if (!fine_tuned_) {
      const Model& src = aux_model();
      need_learner_input(train_, "target training instances");
      fine_tuned_ = fine_tune_model(src, cfg_.settings, data_, train_, seed(Arm::model_transfer_aux));
    }
    return *fine_tuned_;
  }

  MetricsReport feature_transfer(const ConvNet& net) {
    if (!network_images(train_) || !network_images(test_)) throw Skip{"target instances lack images"};
    const auto extract = [&](std::span<const std::size_t> idx) {
      FeatureMatrix X;
      for (auto i : idx) X.push_back(extract_features(net, *data_.samples[i].image, cfg_.transfer_layer));
      return X;
    };
    return logreg_on(extract(train_), data_.gather_labels(train_), extract(test_), test_labels(),
                     cfg_.settings.logreg);
  }

  MetricsReport dispatch(Arm arm, ComparisonResult& result) {
    switch (arm) {
      case Arm::text_based: {
        if (!data_.has_text(train_) || !data_.has_text(test_)) throw Skip{"target instances lack text"};
        const auto feats = [&](std::span<const std::size_t> idx) {
          FeatureMatrix X;
          for (auto i : idx) X.push_back(text_features(*data_.data.instances[i].text, cfg_.lexicons).to_vector());
          return X;
        };
        return logreg_on(feats(train_), data_.gather_labels(train_), feats(test_), test_labels(),
                         cfg_.settings.logreg);
      }
      case Arm::bovw: {
        if (!data_.has_images(train_) || !data_.has_images(test_)) throw Skip{"target instances lack images"};
        const auto descs = [&](std::size_t i) {
          return extract_descriptors(to_grayscale(*data_.images[i]), cfg_.bovw.grid_step, cfg_.bovw.patch);
        };
        std::vector<Descriptor> pool;
        for (auto i : train_) {
          auto d = descs(i);
          pool.insert(pool.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
        }
        if (pool.empty()) throw Skip{"images too small for the descriptor patch"};
        const int k = std::min<int>(cfg_.bovw.k, static_cast<int>(pool.size()));
        Vocabulary vocab;
        try {
          vocab = build_vocabulary(pool, k, mix_seed(seed(arm), 1), cfg_.bovw.max_iters).vocab;
        } catch (const DataError& e) {
          throw Skip{e.what()};
        }
        const auto hist = [&](std::span<const std::size_t> idx) {
          FeatureMatrix X;
          for (auto i : idx) X.push_back(bovw_histogram(descs(i), vocab));
          return X;
        };
        return logreg_on(hist(train_), data_.gather_labels(train_), hist(test_), test_labels(),
                         cfg_.settings.logreg);
      }
      case Arm::data_transfer:
        return score(aux_model());
      case Arm::feature_transfer_external:
        if (!cfg_.external_source) throw Skip{"no external source network"};
        return feature_transfer(*cfg_.external_source);
      case Arm::feature_transfer_aux:
        return feature_transfer(aux_network());
      case Arm::model_transfer_external: {
        if (!cfg_.external_source) throw Skip{"no external source network"};
        if (!network_images(train_) || !network_images(test_)) throw Skip{"target instances lack images"};
        return score(fine_tune_model(*cfg_.external_source, cfg_.settings, data_, train_, seed(arm)));
      }
      case Arm::model_transfer_aux:
        return score(model_transfer_aux());
      case Arm::iterative_transfer:
        return iterative(result);
      case Arm::target_only:
        need_learner_input(train_, "target training instances");
        return score(train_model(cfg_.learner, cfg_.settings, data_, train_, seed(arm)));
      case Arm::combined: {
        const auto idx = concat(aux_, train_);
        need_learner_input(idx, "training instances");
        need_labels(idx, "training instances");
        return score(train_model(cfg_.learner, cfg_.settings, data_, idx, seed(arm)));
      }
    }
    throw Skip{"unknown arm"};
  }

  MetricsReport iterative(ComparisonResult& result) {
    if (aux_.empty()) throw Skip{"no auxiliary instances"};
    const auto idx = concat(aux_, train_);
    need_learner_input(idx, "training instances");
    need_labels(idx, "training instances");
    need_learner_input(test_, "target test instances");
    const Model* ft = cfg_.boost.init_strategy == InitStrategy::finetune_based ? &model_transfer_aux() : nullptr;
    const auto boosted = iterative_transfer(data_, cfg_, ft);
    result.boost_log = boosted.log;
    std::vector<int> pred;
    pred.reserve(test_.size());
    for (auto i : test_) pred.push_back(ensemble_predict(boosted.ensemble, data_.samples[i]));
    auto r = compute_metrics(pred, test_labels());
    if (boosted.halted_early) r.note = "halted early: target error reached 0.5";
    return r;
  }

  const PreparedData& data_;
  const ComparisonConfig& cfg_;
  std::vector<std::size_t> aux_, train_, test_;
  std::optional<Model> aux_model_;
  std::optional<ConvNet> aux_net_;
  std::optional<Model> fine_tuned_;
};

}  // namespace

BoostResult iterative_transfer(const PreparedData& data, const ComparisonConfig& cfg, const Model* fine_tuned) {
  cfg.boost.validate();
  const auto aux = data.indices(Domain::auxiliary);
  const auto train = data.indices(Domain::target_train);
  const auto test = data.indices(Domain::target_test);
  if (aux.size() < 2) throw DataError("iterative transfer needs at least two auxiliary instances");
  if (train.empty()) throw DataError("iterative transfer needs target training instances");
  const auto idx = concat(aux, train);
  std::optional<Model> own;
  std::optional<std::vector<double>> aux_probs;
  if (cfg.boost.init_strategy == InitStrategy::finetune_based) {
    if (!fine_tuned) {
      const auto src = train_model(cfg.learner, cfg.settings, data, aux, aux_model_seed(cfg.seed));
      own = fine_tune_model(src, cfg.settings, data, train, arm_seed(cfg.seed, Arm::model_transfer_aux));
      fine_tuned = &*own;
    }
    aux_probs.emplace();
    for (auto i : aux) {
      if (data.labels[i] < 0) throw DataError("instance '" + data.data.instances[i].id + "' has no label");
      const double p = prob_fake(*fine_tuned, data.samples[i]);
      aux_probs->push_back(data.labels[i] == 1 ? p : 1.0 - p);
    }
  }
  const auto samples = data.gather_samples(idx);
  const auto labels = data.gather_labels(idx);
  std::vector<Sample> eval_samples;
  std::vector<int> eval_labels;
  bool with_eval = !test.empty();
  for (auto i : test) with_eval = with_eval && data.labels[i] >= 0;
  if (with_eval) {
    eval_samples = data.gather_samples(test);
    eval_labels = data.gather_labels(test);
  }
  const EvalSet eval{eval_samples, eval_labels};
  std::optional<std::span<const double>> probs;
  if (aux_probs) probs = std::span<const double>(*aux_probs);
  return run_boost(samples, labels, aux.size(), make_learner(cfg.learner, cfg.settings), cfg.boost,
                   arm_seed(cfg.seed, Arm::iterative_transfer), probs, with_eval ? &eval : nullptr);
}

ComparisonResult run_comparison(const PreparedData& data, const ComparisonConfig& cfg) {
  cfg.boost.validate();
  ComparisonResult result;
  if (cfg.arms.empty()) return result;
  ComparisonRun run(data, cfg);
  for (Arm arm : cfg.arms) result.reports.push_back(run.run(arm, result));
  return result;
}

std::vector<MetricsReport> layer_comparison(const ConvNet& net, const PreparedData& data,
                                            std::span<const FeatureLayer> layers, const TrainConfig& logreg_cfg) {
  const auto train = data.indices(Domain::target_train);
  const auto test = data.indices(Domain::target_test);
  const auto train_images = data.gather_images(train);
  const auto test_images = data.gather_images(test);
  const auto train_y = data.gather_labels(train);
  const auto test_y = data.gather_labels(test);
  std::vector<MetricsReport> out;
  for (FeatureLayer layer : layers) {
    FeatureMatrix tx, sx;
    for (const auto& img : train_images) tx.push_back(extract_features(net, img, layer));
    for (const auto& img : test_images) sx.push_back(extract_features(net, img, layer));
    auto r = logreg_on(tx, train_y, sx, test_y, logreg_cfg);
    r.method_name = std::string(to_string(layer));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace imgcred
