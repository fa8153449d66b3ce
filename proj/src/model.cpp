#include "imgcred/model.hpp"

#include <fstream>
#include <sstream>

#include "imgcred/error.hpp"

namespace imgcred {

using nlohmann::json;

double prob_fake(const Model& model, const Sample& x) {
  if (const auto* lr = std::get_if<LogRegModel>(&model)) return lr->prob_fake(x.features);
  if (!x.image) throw ShapeError("convolutional model needs an image");
  return prob_fake(std::get<ConvNet>(model), *x.image);
}

Prediction predict(const Model& model, const Sample& x) {
  const double p = prob_fake(model, x);
  return {label_from_prob(p), p};
}

namespace {

constexpr int kFormatVersion = 1;

json layer_to_json(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvLayer>) {
          return {{"type", "convolution"}, {"out_channels", l.out_channels}, {"kernel", l.kernel},
                  {"stride", l.stride},    {"padding", l.padding},           {"activation", to_string(l.activation)}};
        } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
          return {{"type", "max_pool"}, {"kernel", l.kernel}, {"stride", l.stride}};
        } else if constexpr (std::is_same_v<T, ResponseNormLayer>) {
          return {{"type", "response_norm"}, {"radius", l.radius}, {"alpha", l.alpha}, {"beta", l.beta}, {"k", l.k}};
        } else {
          return {{"type", "fully_connected"},
                  {"out_dim", l.out_dim},
                  {"activation", to_string(l.activation)},
                  {"dropout_rate", l.dropout_rate}};
        }
      },
      layer);
}

LayerSpec layer_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "convolution") {
    return ConvLayer{j.at("out_channels").get<int>(), j.at("kernel").get<int>(), j.value("stride", 1),
                     j.value("padding", 0), parse_activation(j.value("activation", std::string("relu")))};
  }
  if (type == "max_pool") return MaxPoolLayer{j.at("kernel").get<int>(), j.value("stride", j.at("kernel").get<int>())};
  if (type == "response_norm") {
    return ResponseNormLayer{j.value("radius", 2), j.value("alpha", 1e-4), j.value("beta", 0.75), j.value("k", 2.0)};
  }
  if (type == "fully_connected") {
    return DenseLayer{j.at("out_dim").get<int>(), parse_activation(j.value("activation", std::string("relu"))),
                      j.value("dropout_rate", 0.0)};
  }
  throw DataError("unknown layer type '" + type + "'");
}

}  // namespace

json spec_to_json(const ConvNetSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  return {{"input", {{"channels", spec.input.channels}, {"height", spec.input.height}, {"width", spec.input.width}}},
          {"layers", layers}};
}

ConvNetSpec spec_from_json(const json& j) {
  try {
    ConvNetSpec spec;
    const auto& in = j.at("input");
    spec.input = {in.at("channels").get<int>(), in.at("height").get<int>(), in.at("width").get<int>()};
    for (const auto& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
    spec.output_shapes();
    return spec;
  } catch (const json::exception& e) {
    throw DataError(std::string("network spec: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("network spec: ") + e.what());
  }
}

json model_to_json(const Model& model) {
  json j;
  j["format_version"] = kFormatVersion;
  if (const auto* lr = std::get_if<LogRegModel>(&model)) {
    j["kind"] = "logreg";
    j["spec"] = {{"dim", lr->dim()}};
    j["parameters"] = {{"weights", lr->weights}, {"bias", lr->bias}};
    return j;
  }
  const auto& net = std::get<ConvNet>(model);
  j["kind"] = "convnet";
  j["spec"] = spec_to_json(net.spec());
  json params = json::array();
  for (const auto& p : net.params()) params.push_back(json::array({p.weights, p.bias}));
  j["parameters"] = std::move(params);
  return j;
}

Model model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) throw DataError("unsupported model format_version");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "logreg") {
      LogRegModel m;
      m.weights = j.at("parameters").at("weights").get<std::vector<double>>();
      m.bias = j.at("parameters").at("bias").get<double>();
      if (m.weights.size() != j.at("spec").at("dim").get<std::size_t>()) throw DataError("logreg dim mismatch");
      return m;
    }
    if (kind == "convnet") {
      auto spec = spec_from_json(j.at("spec"));
      std::vector<LayerParams> params;
      for (const auto& p : j.at("parameters")) {
        params.push_back({p.at(0).get<std::vector<double>>(), p.at(1).get<std::vector<double>>()});
      }
      try {
        return ConvNet(std::move(spec), std::move(params));
      } catch (const ShapeError& e) {
        throw DataError(std::string("model parameters: ") + e.what());
      }
    }
    throw DataError("unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("model document: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << model_to_json(model).dump() << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model '" + path.string() + "'");
  try {
    return model_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json train_config_to_json(const TrainConfig& cfg) {
  json schedule = json::array();
  for (const auto& [rate, epochs] : cfg.schedule) schedule.push_back({{"rate", rate}, {"epochs", epochs}});
  return {{"learning_rate_schedule", schedule},
          {"batch_size", cfg.batch_size},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"dropout", cfg.dropout},
          {"seed", cfg.seed},
          {"last_layer_lr_multiplier", cfg.last_layer_lr_multiplier},
          {"grad_tol", cfg.grad_tol}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  try {
    if (j.contains("learning_rate_schedule")) {
      cfg.schedule.clear();
      for (const auto& phase : j["learning_rate_schedule"]) {
        cfg.schedule.emplace_back(phase.at("rate").get<double>(), phase.at("epochs").get<int>());
      }
    }
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.dropout = j.value("dropout", cfg.dropout);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.last_layer_lr_multiplier = j.value("last_layer_lr_multiplier", cfg.last_layer_lr_multiplier);
    cfg.grad_tol = j.value("grad_tol", cfg.grad_tol);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
}

}  // namespace imgcred
