#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "imgcred/data_model.hpp"
#include "imgcred/train_config.hpp"

namespace imgcred {

enum class Activation { none, relu, softmax };
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct ConvLayer {
  int out_channels = 8;
  int kernel = 5;
  int stride = 1;
  int padding = 0;
  Activation activation = Activation::relu;
};

struct MaxPoolLayer {
  int kernel = 2;
  int stride = 2;
};

// Cross-channel local response normalisation:
//   b_c = a_c / (k + alpha/(2r+1) * sum_{|c'-c|<=r} a_{c'}^2)^beta
struct ResponseNormLayer {
  int radius = 2;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

struct DenseLayer {
  int out_dim = 2;
  Activation activation = Activation::softmax;
  double dropout_rate = 0.0;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, ResponseNormLayer, DenseLayer>;

struct Shape3 {
  int channels = 1;
  int height = 1;
  int width = 1;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool operator==(const Shape3&) const = default;
};

struct ConvNetSpec {
  Shape3 input{1, 32, 32};
  std::vector<LayerSpec> layers;

  // Output shape of every layer; throws ShapeError if the chain is inconsistent
  // or the last layer is not a 2-way softmax.
  std::vector<Shape3> output_shapes() const;

  // conv(8,5x5) > pool > conv(16,5x5) > pool > fc(64, relu, dropout 0.5) > fc(2, softmax)
  static ConvNetSpec desk_default(int size = 32, int channels = 1);
  // Five conv layers and FC6-FC8 on a 227x227x3 input; FC8 is 2-way.
  static ConvNetSpec alexnet();
};

// Channel-major activation tensor.
struct Tensor {
  Shape3 shape;
  std::vector<double> data;
};

struct LayerParams {
  std::vector<double> weights;  // conv: [out][in][k][k]; dense: [out][in]
  std::vector<double> bias;
  bool operator==(const LayerParams&) const = default;
};

using ParamGrads = std::vector<LayerParams>;

class ConvNet {
 public:
  ConvNet() = default;
  // Gaussian(0, 0.01) weights and zero biases.
  ConvNet(ConvNetSpec spec, std::uint64_t seed);
  ConvNet(ConvNetSpec spec, std::vector<LayerParams> params);

  const ConvNetSpec& spec() const { return spec_; }
  const std::vector<Shape3>& shapes() const { return shapes_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }
  std::size_t parameter_count() const;

  // Index of the last parameterised layer (the output layer).
  std::size_t output_layer() const { return spec_.layers.size() - 1; }
  void reinitialize_layer(std::size_t layer, std::uint64_t seed, double stddev = 0.01);

 private:
  ConvNetSpec spec_;
  std::vector<Shape3> shapes_;
  std::vector<LayerParams> params_;
};

struct ForwardResult {
  std::array<double, 2> probs{};  // (p(real), p(fake))
  Tensor input;
  std::vector<Tensor> activations;            // output of each layer
  std::vector<std::vector<double>> dropout;   // per-layer keep mask scaled by 1/keep; empty if inactive
};

// HWC image -> CHW tensor; requires an exact shape match with the spec input.
Tensor to_tensor(const ImageTensor& img, const Shape3& expected);

// Grayscale/replicate channels and resize so `img` fits the network input.
ImageTensor fit_to_input(const ImageTensor& img, const Shape3& input);

ForwardResult forward(const ConvNet& net, const ImageTensor& img, bool train_mode = false,
                      std::uint64_t seed = 0);

struct GradientResult {
  double loss = 0.0;
  ParamGrads grads;
};

// Exact gradients of weighted_loss over the batch by reverse-mode accumulation.
// In train mode sample i draws its dropout mask from seeds[i].
GradientResult gradients(const ConvNet& net, std::span<const ImageTensor> batch,
                         std::span<const int> labels, std::span<const double> weights,
                         bool train_mode = false, std::span<const std::uint64_t> seeds = {});

// Mini-batch SGD with momentum on the weighted loss. Records per-epoch mean
// weighted loss in `epoch_losses` when given.
ConvNet sgd_train(const ConvNet& net, std::span<const ImageTensor> images,
                  std::span<const int> labels, std::span<const double> weights,
                  const TrainConfig& cfg, std::vector<double>* epoch_losses = nullptr);

// Replace the output layer with a fresh 2-way layer and retrain with the
// output layer's learning rate raised tenfold.
ConvNet fine_tune(const ConvNet& net, std::span<const ImageTensor> images,
                  std::span<const int> labels, std::span<const double> weights,
                  const TrainConfig& cfg);

enum class FeatureLayer { C5_pooled, FC6, FC7 };
std::string_view to_string(FeatureLayer l);
FeatureLayer parse_feature_layer(std::string_view s);

// Layer index the named feature is read from; throws ShapeError when absent.
std::size_t feature_layer_index(const ConvNetSpec& spec, FeatureLayer layer);
std::vector<double> extract_features(const ConvNet& net, const ImageTensor& img, FeatureLayer layer);

double prob_fake(const ConvNet& net, const ImageTensor& img);

}  // namespace imgcred
