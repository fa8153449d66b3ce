#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "imgcred/error.hpp"
#include "imgcred/logreg.hpp"
#include "imgcred/loss.hpp"
#include "imgcred/model.hpp"
#include "imgcred/rng.hpp"

using namespace imgcred;
using imgcred::testing::check_gradients;
using imgcred::testing::random_batch;
using imgcred::testing::randomize;

namespace {

ConvNetSpec tiny_spec(double dropout) {
  ConvNetSpec s;
  s.input = {2, 8, 8};
  s.layers = {ConvLayer{3, 3, 1, 1, Activation::relu},
              ResponseNormLayer{1, 0.5, 0.75, 2.0},
              MaxPoolLayer{2, 2},
              ConvLayer{4, 3, 1, 0, Activation::relu},
              DenseLayer{5, Activation::relu, dropout},
              DenseLayer{2, Activation::softmax, 0.0}};
  return s;
}

// Newton's method on the same objective, solved by Gaussian elimination.
std::vector<double> newton_logreg(const FeatureMatrix& X, const std::vector<int>& y, const std::vector<double>& w,
                                  double decay, const std::vector<double>& anchor) {
  const std::size_t d = X[0].size(), p = d + 1;
  const double inv_n = 1.0 / static_cast<double>(X.size());
  std::vector<double> theta(p, 0.0);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<double> g(p, 0.0);
    std::vector<std::vector<double>> H(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < X.size(); ++i) {
      std::vector<double> xi = X[i];
      xi.push_back(1.0);
      double z = 0;
      for (std::size_t j = 0; j < p; ++j) z += theta[j] * xi[j];
      const double s = 1.0 / (1.0 + std::exp(-z));
      for (std::size_t j = 0; j < p; ++j) {
        g[j] += inv_n * w[i] * (s - y[i]) * xi[j];
        for (std::size_t k = 0; k < p; ++k) H[j][k] += inv_n * w[i] * s * (1 - s) * xi[j] * xi[k];
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      g[j] += decay * (theta[j] - anchor[j]);
      H[j][j] += decay;
    }
    // Solve H delta = g.
    for (std::size_t c = 0; c < p; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < p; ++r)
        if (std::abs(H[r][c]) > std::abs(H[piv][c])) piv = r;
      std::swap(H[c], H[piv]);
      std::swap(g[c], g[piv]);
      for (std::size_t r = c + 1; r < p; ++r) {
        const double f = H[r][c] / H[c][c];
        for (std::size_t k = c; k < p; ++k) H[r][k] -= f * H[c][k];
        g[r] -= f * g[c];
      }
    }
    std::vector<double> delta(p);
    for (std::size_t c = p; c-- > 0;) {
      double s = g[c];
      for (std::size_t k = c + 1; k < p; ++k) s -= H[c][k] * delta[k];
      delta[c] = s / H[c][c];
    }
    for (std::size_t j = 0; j < p; ++j) theta[j] -= delta[j];
  }
  return theta;
}

struct Toy {
  FeatureMatrix X;
  std::vector<int> y;
  std::vector<double> w;
};

Toy toy_problem(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (double& v : x) v = rng.normal();
    const int label = rng.uniform() < 1.0 / (1.0 + std::exp(-(1.5 * x[0] - x[1] + 0.3))) ? 1 : 0;
    t.X.push_back(x);
    t.y.push_back(label);
    t.w.push_back(0.2 + 2.0 * rng.uniform());
  }
  return t;
}

}  // namespace

TEST_CASE("weighted loss against a direct sum") {
  const std::vector<std::array<double, 2>> p{{0.2, 0.8}, {0.7, 0.3}, {1.0, 0.0}};
  const std::vector<int> y{1, 1, 0};
  const std::vector<double> w{1.0, 0.5, 2.0};
  const double want = -(1.0 * std::log(0.8) + 0.5 * std::log(0.3) + 2.0 * std::log(1.0 - kProbClamp));
  CHECK(weighted_loss(p, y, w) == doctest::Approx(want).epsilon(1e-14));
  const std::vector<double> zero(3, 0.0);
  CHECK(weighted_loss(p, y, zero) == 0.0);
  // Clamp keeps a confident wrong answer finite.
  const std::vector<int> wrong{1, 1, 1};
  CHECK(std::isfinite(weighted_loss(p, wrong, w)));
  CHECK(weighted_loss(p, wrong, w) == doctest::Approx(want - 2.0 * std::log(1.0 - kProbClamp) - 2.0 * std::log(kProbClamp)));
  const std::vector<int> short_labels{1};
  CHECK_THROWS_AS(weighted_loss(p, short_labels, w), ShapeError);
}

TEST_CASE("softmax and relu") {
  const std::vector<double> x{1000.0, 1001.0};
  const auto s = softmax(x);
  CHECK(s[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(s[0] + s[1] == doctest::Approx(1.0));
  CHECK(relu(std::vector<double>{-1.0, 0.0, 2.0}) == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("spec shapes") {
  CHECK(tiny_spec(0).output_shapes().back() == Shape3{2, 1, 1});
  const auto alex = ConvNetSpec::alexnet();
  const auto shapes = alex.output_shapes();
  CHECK(shapes[feature_layer_index(alex, FeatureLayer::C5_pooled)].size() == 9216);
  CHECK(shapes[feature_layer_index(alex, FeatureLayer::FC6)].size() == 4096);
  CHECK(shapes[feature_layer_index(alex, FeatureLayer::FC7)].size() == 4096);
  CHECK(shapes[0] == Shape3{96, 55, 55});
  auto bad = tiny_spec(0);
  bad.layers.back() = DenseLayer{3, Activation::softmax, 0.0};
  CHECK_THROWS_AS(bad.output_shapes(), ShapeError);
  auto no_pool = tiny_spec(0);
  no_pool.layers.erase(no_pool.layers.begin() + 2);
  CHECK_THROWS_AS(feature_layer_index(no_pool, FeatureLayer::C5_pooled), ShapeError);
  CHECK_THROWS_AS(feature_layer_index(ConvNetSpec::desk_default(), FeatureLayer::FC7), ShapeError);
}

TEST_CASE("gradients match central finite differences") {
  const std::vector<int> labels{0, 1, 1};
  const std::vector<double> weights{0.5, 1.0, 2.0};
  SUBCASE("eval mode") {
    ConvNet net(tiny_spec(0.0), 1);
    randomize(net, 7, 0.5);
    const auto batch = random_batch(net.spec().input, 3, 9);
    const auto r = check_gradients(net, batch, labels, weights, false, {}, 1e-5);
    CHECK(r.checked == net.parameter_count());
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("train mode with a fixed dropout mask") {
    ConvNet net(tiny_spec(0.4), 2);
    randomize(net, 8, 0.5);
    const auto batch = random_batch(net.spec().input, 3, 10);
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto r = check_gradients(net, batch, labels, weights, true, seeds, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient loss equals weighted loss of forward probabilities") {
  ConvNet net(tiny_spec(0.0), 3);
  randomize(net, 4, 0.5);
  const auto batch = random_batch(net.spec().input, 4, 5);
  const std::vector<int> labels{0, 1, 0, 1};
  const std::vector<double> unit(4, 1.0);
  std::vector<std::array<double, 2>> probs;
  double ce = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    probs.push_back(forward(net, batch[i]).probs);
    ce -= std::log(probs.back()[labels[i]]);
  }
  CHECK(gradients(net, batch, labels, unit).loss == doctest::Approx(ce).epsilon(1e-12));
  const std::vector<double> zero(4, 0.0);
  const auto g = gradients(net, batch, labels, zero);
  CHECK(g.loss == 0.0);
  for (const auto& p : g.grads) {
    for (double v : p.weights) CHECK(v == 0.0);
    for (double v : p.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("SGD lowers the training loss; fine-tuning reinitialises the output layer") {
  ConvNetSpec s;
  s.input = {1, 6, 6};
  // Enough filters that some survive the ReLU at the small default init.
  s.layers = {ConvLayer{8, 3, 1, 0, Activation::relu}, DenseLayer{2, Activation::softmax, 0.0}};
  Rng rng(12);
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    const int y = i % 2;
    ImageTensor img(6, 6, 1);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) img.at(r, c, 0) = 0.1 * rng.uniform() + (y == 1 && c < 3 ? 0.8 : 0.0);
    images.push_back(img);
    labels.push_back(y);
  }
  const std::vector<double> w(40, 1.0);
  TrainConfig cfg;
  cfg.schedule = {{0.1, 30}};
  cfg.batch_size = 8;
  cfg.seed = 1;
  ConvNet net(s, 4);
  std::vector<double> losses;
  const auto trained = sgd_train(net, images, labels, w, cfg, &losses);
  REQUIRE(losses.size() == 30);
  CHECK(losses.back() < 0.5 * losses.front());
  const auto again = sgd_train(net, images, labels, w, cfg);
  CHECK(again.params() == trained.params());

  const auto tuned = fine_tune(trained, images, labels, w, cfg);
  CHECK(tuned.shapes() == trained.shapes());
  CHECK(tuned.params().back() != trained.params().back());
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) correct += label_from_prob(prob_fake(tuned, images[i])) == labels[i];
  CHECK(correct >= 36);
}

TEST_CASE("fit_to_input and to_tensor") {
  ImageTensor rgb(10, 12, 3, 0.25);
  const auto g = fit_to_input(rgb, {1, 8, 8});
  CHECK(g.channels == 1);
  CHECK(g.height == 8);
  CHECK(g.at(3, 3, 0) == doctest::Approx(0.25));
  const auto t = to_tensor(g, {1, 8, 8});
  CHECK(t.data.size() == 64);
  CHECK_THROWS_AS(to_tensor(g, {1, 9, 8}), ShapeError);
  CHECK(fit_to_input(ImageTensor(4, 4, 1, 0.5), {3, 4, 4}).channels == 3);
}

TEST_CASE("AlexNet feature vectors by forward pass") {
  ConvNet net(ConvNetSpec::alexnet(), 1);
  const auto img = random_batch({3, 227, 227}, 1, 2)[0];
  CHECK(extract_features(net, img, FeatureLayer::C5_pooled).size() == 9216);
  CHECK(extract_features(net, img, FeatureLayer::FC6).size() == 4096);
  CHECK(extract_features(net, img, FeatureLayer::FC7).size() == 4096);
}

TEST_CASE("logistic regression reaches the Newton optimum") {
  const auto t = toy_problem(80, 4, 5);
  auto cfg = logreg_defaults();
  cfg.weight_decay = 0.05;
  const auto fit = fit_weighted_logreg(t.X, t.y, t.w, cfg);
  const auto want = newton_logreg(t.X, t.y, t.w, 0.05, std::vector<double>(4, 0.0));
  for (std::size_t j = 0; j < 4; ++j) CHECK(fit.model.weights[j] == doctest::Approx(want[j]).epsilon(1e-6));
  CHECK(fit.model.bias == doctest::Approx(want[4]).epsilon(1e-6));
  double gn = 0;
  for (double g : logreg_gradient(fit.model, t.X, t.y, t.w, 0.05)) gn += g * g;
  CHECK(std::sqrt(gn) < 1e-7);

  LogRegModel anchor{{1.0, -1.0, 0.5, 0.0}, 0.0};
  const auto tuned = fit_weighted_logreg(t.X, t.y, t.w, cfg, &anchor);
  const auto want_a = newton_logreg(t.X, t.y, t.w, 0.05, anchor.weights);
  for (std::size_t j = 0; j < 4; ++j) CHECK(tuned.model.weights[j] == doctest::Approx(want_a[j]).epsilon(1e-6));

  // Zero-weight rows have no influence.
  auto padded = t;
  padded.X.push_back({100, 100, 100, 100});
  padded.y.push_back(0);
  padded.w.push_back(0.0);
  const auto pf = fit_weighted_logreg(padded.X, padded.y, padded.w, cfg);
  // The 1/N scale changes with the extra row, so compare against its own oracle.
  const double scale = 81.0 / 80.0;
  const auto want_p = newton_logreg(t.X, t.y, t.w, 0.05 * scale, std::vector<double>(4, 0.0));
  for (std::size_t j = 0; j < 4; ++j) CHECK(pf.model.weights[j] == doctest::Approx(want_p[j]).epsilon(1e-6));

  const std::vector<int> bad_labels(t.y.size(), 2);
  CHECK_THROWS(fit_weighted_logreg(t.X, bad_labels, t.w, cfg));
}

TEST_CASE("models serialise and load back identically") {
  const auto dir = std::filesystem::temp_directory_path() / "imgcred_model_test";
  std::filesystem::create_directories(dir);
  ConvNet net(tiny_spec(0.3), 6);
  randomize(net, 2, 0.3);
  save_model(net, dir / "net.json");
  const auto back = std::get<ConvNet>(load_model(dir / "net.json"));
  CHECK(back.params() == net.params());
  CHECK(back.shapes() == net.shapes());
  const auto img = random_batch(net.spec().input, 1, 3)[0];
  CHECK(prob_fake(back, img) == prob_fake(net, img));

  LogRegModel lr{{0.1, -2.5e-7, 3.0}, -0.75};
  save_model(lr, dir / "lr.json");
  CHECK(std::get<LogRegModel>(load_model(dir / "lr.json")) == lr);

  auto doc = model_to_json(lr);
  doc["format_version"] = 99;
  CHECK_THROWS_AS(model_from_json(doc), DataError);
  auto broken = model_to_json(net);
  broken["parameters"][0][0] = nlohmann::json::array({1.0});
  CHECK_THROWS_AS(model_from_json(broken), DataError);
  CHECK_THROWS_AS(load_model(dir / "missing.json"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("train config JSON") {
  TrainConfig cfg;
  cfg.schedule = {{0.01, 3}, {0.001, 2}};
  cfg.seed = 42;
  const auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.schedule == cfg.schedule);
  CHECK(back.seed == 42);
  CHECK(back.total_epochs() == 5);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}
