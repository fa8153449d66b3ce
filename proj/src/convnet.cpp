#include "imgcred/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "imgcred/error.hpp"
#include "imgcred/loss.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::none:
      return "none";
    case Activation::relu:
      return "relu";
    case Activation::softmax:
      return "softmax";
  }
  return "none";
}

Activation parse_activation(std::string_view s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "softmax") return Activation::softmax;
  throw DataError("unknown activation '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  for (const auto& [rate, epochs] : schedule) {
    if (!(rate > 0.0)) throw ShapeError("learning rates must be positive");
    if (epochs < 1) throw ShapeError("schedule phases need at least one epoch");
  }
  if (batch_size < 1) throw ShapeError("batch size must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ShapeError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ShapeError("weight decay must be non-negative");
}

// ---------------------------------------------------------------------------
// Spec

namespace {

struct ShapeVisitor {
  Shape3 in;
  bool is_last;

  Shape3 operator()(const ConvLayer& l) const {
    if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) {
      throw ShapeError("invalid convolution parameters");
    }
    if (l.activation == Activation::softmax) throw ShapeError("softmax is only valid on the output layer");
    const int h = (in.height + 2 * l.padding - l.kernel) / l.stride + 1;
    const int w = (in.width + 2 * l.padding - l.kernel) / l.stride + 1;
    if (in.height + 2 * l.padding < l.kernel || in.width + 2 * l.padding < l.kernel || h < 1 || w < 1) {
      throw ShapeError("convolution kernel larger than its input");
    }
    return {l.out_channels, h, w};
  }
  Shape3 operator()(const MaxPoolLayer& l) const {
    if (l.kernel < 1 || l.stride < 1) throw ShapeError("invalid pooling parameters");
    if (in.height < l.kernel || in.width < l.kernel) throw ShapeError("pooling window larger than its input");
    return {in.channels, (in.height - l.kernel) / l.stride + 1, (in.width - l.kernel) / l.stride + 1};
  }
  Shape3 operator()(const ResponseNormLayer& l) const {
    if (l.radius < 0 || l.k <= 0.0 || l.alpha < 0.0 || l.beta < 0.0) {
      throw ShapeError("invalid response normalisation parameters");
    }
    return in;
  }
  Shape3 operator()(const DenseLayer& l) const {
    if (l.out_dim < 1) throw ShapeError("dense layer needs a positive width");
    if (l.dropout_rate < 0.0 || l.dropout_rate >= 1.0) throw ShapeError("dropout rate must lie in [0, 1)");
    if ((l.activation == Activation::softmax) != is_last) {
      throw ShapeError("softmax must appear exactly on the output layer");
    }
    return {l.out_dim, 1, 1};
  }
};

}  // namespace

std::vector<Shape3> ConvNetSpec::output_shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1) throw ShapeError("invalid input shape");
  if (layers.empty()) throw ShapeError("network has no layers");
  const auto* last = std::get_if<DenseLayer>(&layers.back());
  if (!last || last->out_dim != 2 || last->activation != Activation::softmax) {
    throw ShapeError("output layer must be a 2-way softmax dense layer");
  }
  std::vector<Shape3> shapes;
  Shape3 cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = std::visit(ShapeVisitor{cur, i + 1 == layers.size()}, layers[i]);
    shapes.push_back(cur);
  }
  return shapes;
}

ConvNetSpec ConvNetSpec::desk_default(int size, int channels) {
  ConvNetSpec s;
  s.input = {channels, size, size};
  s.layers = {ConvLayer{8, 5, 1, 0, Activation::relu},
              MaxPoolLayer{2, 2},
              ConvLayer{16, 5, 1, 0, Activation::relu},
              MaxPoolLayer{2, 2},
              DenseLayer{64, Activation::relu, 0.5},
              DenseLayer{2, Activation::softmax, 0.0}};
  return s;
}

ConvNetSpec ConvNetSpec::alexnet() {
  ConvNetSpec s;
  s.input = {3, 227, 227};
  const ResponseNormLayer lrn{2, 1e-4, 0.75, 2.0};
  s.layers = {ConvLayer{96, 11, 4, 0, Activation::relu},   // C1
              MaxPoolLayer{3, 2},
              lrn,
              ConvLayer{256, 5, 1, 2, Activation::relu},   // C2
              MaxPoolLayer{3, 2},
              lrn,
              ConvLayer{384, 3, 1, 1, Activation::relu},   // C3
              ConvLayer{384, 3, 1, 1, Activation::relu},   // C4
              ConvLayer{256, 3, 1, 1, Activation::relu},   // C5
              MaxPoolLayer{3, 2},
              DenseLayer{4096, Activation::relu, 0.5},     // FC6
              DenseLayer{4096, Activation::relu, 0.5},     // FC7
              DenseLayer{2, Activation::softmax, 0.0}};    // FC8
  return s;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

std::pair<std::size_t, std::size_t> param_sizes(const LayerSpec& layer, const Shape3& in) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    return {static_cast<std::size_t>(c->out_channels) * in.channels * c->kernel * c->kernel,
            static_cast<std::size_t>(c->out_channels)};
  }
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    return {static_cast<std::size_t>(d->out_dim) * in.size(), static_cast<std::size_t>(d->out_dim)};
  }
  return {0, 0};
}

Shape3 layer_input(const ConvNetSpec& spec, const std::vector<Shape3>& shapes, std::size_t l) {
  return l == 0 ? spec.input : shapes[l - 1];
}

}  // namespace

ConvNet::ConvNet(ConvNetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  shapes_ = spec_.output_shapes();
  params_.resize(spec_.layers.size());
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto [nw, nb] = param_sizes(spec_.layers[l], layer_input(spec_, shapes_, l));
    params_[l].weights.assign(nw, 0.0);
    params_[l].bias.assign(nb, 0.0);
    if (nw > 0) reinitialize_layer(l, mix_seed(seed, l));
  }
}

ConvNet::ConvNet(ConvNetSpec spec, std::vector<LayerParams> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  shapes_ = spec_.output_shapes();
  if (params_.size() != spec_.layers.size()) throw ShapeError("parameter list does not match layers");
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto [nw, nb] = param_sizes(spec_.layers[l], layer_input(spec_, shapes_, l));
    if (params_[l].weights.size() != nw || params_[l].bias.size() != nb) {
      throw ShapeError("parameter shape mismatch at layer " + std::to_string(l));
    }
    for (double v : params_[l].weights) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter at layer " + std::to_string(l));
    }
    for (double v : params_[l].bias) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter at layer " + std::to_string(l));
    }
  }
}

std::size_t ConvNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weights.size() + p.bias.size();
  return n;
}

void ConvNet::reinitialize_layer(std::size_t layer, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (double& w : params_.at(layer).weights) w = stddev * rng.normal();
  std::fill(params_[layer].bias.begin(), params_[layer].bias.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Forward

Tensor to_tensor(const ImageTensor& img, const Shape3& expected) {
  if (img.height != expected.height || img.width != expected.width || img.channels != expected.channels) {
    throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                     std::to_string(img.channels) + " does not match network input " +
                     std::to_string(expected.height) + "x" + std::to_string(expected.width) + "x" +
                     std::to_string(expected.channels));
  }
  Tensor t{expected, std::vector<double>(expected.size())};
  const auto plane = static_cast<std::size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        t.data[c * plane + static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
      }
    }
  }
  return t;
}

ImageTensor fit_to_input(const ImageTensor& img, const Shape3& input) {
  ImageTensor out = img;
  if (input.channels == 1 && out.channels != 1) {
    out = to_grayscale(out);
  } else if (input.channels == 3 && out.channels == 1) {
    ImageTensor rgb(out.height, out.width, 3);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = out.at(y, x, 0);
    out = std::move(rgb);
  } else if (input.channels != out.channels) {
    throw ShapeError("cannot adapt image channels to network input");
  }
  if (out.height != input.height || out.width != input.width) {
    out = resize_bilinear(out, input.height, input.width);
  }
  return out;
}

namespace {

void conv_forward(const ConvLayer& l, const LayerParams& p, const Tensor& in, Tensor& out) {
  const int C = in.shape.channels, H = in.shape.height, W = in.shape.width;
  const int OC = out.shape.channels, OH = out.shape.height, OW = out.shape.width;
  const int K = l.kernel, S = l.stride, P = l.padding;
  for (int oc = 0; oc < OC; ++oc) {
    double* oplane = &out.data[static_cast<std::size_t>(oc) * OH * OW];
    std::fill(oplane, oplane + OH * OW, p.bias[oc]);
    for (int ic = 0; ic < C; ++ic) {
      const double* iplane = &in.data[static_cast<std::size_t>(ic) * H * W];
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double w = p.weights[((static_cast<std::size_t>(oc) * C + ic) * K + ky) * K + kx];
          const int ox_lo = std::max(0, (P - kx + S - 1) / S);
          const int hi_num = W - 1 + P - kx;
          if (hi_num < 0) continue;
          const int ox_hi = std::min(OW - 1, hi_num / S);
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * S - P + ky;
            if (iy < 0 || iy >= H) continue;
            const double* irow = iplane + static_cast<std::size_t>(iy) * W;
            double* orow = oplane + static_cast<std::size_t>(oy) * OW;
            for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += w * irow[ox * S - P + kx];
          }
        }
      }
    }
  }
  if (l.activation == Activation::relu) {
    for (double& v : out.data) v = std::max(v, 0.0);
  }
}

void conv_backward(const ConvLayer& l, const LayerParams& p, const Tensor& in, const Tensor& out,
                   std::vector<double>& g_out, LayerParams& grad, std::vector<double>* g_in) {
  const int C = in.shape.channels, H = in.shape.height, W = in.shape.width;
  const int OC = out.shape.channels, OH = out.shape.height, OW = out.shape.width;
  const int K = l.kernel, S = l.stride, P = l.padding;
  if (l.activation == Activation::relu) {
    for (std::size_t i = 0; i < g_out.size(); ++i) {
      if (out.data[i] <= 0.0) g_out[i] = 0.0;
    }
  }
  for (int oc = 0; oc < OC; ++oc) {
    const double* gplane = &g_out[static_cast<std::size_t>(oc) * OH * OW];
    grad.bias[oc] += std::accumulate(gplane, gplane + OH * OW, 0.0);
    for (int ic = 0; ic < C; ++ic) {
      const double* iplane = &in.data[static_cast<std::size_t>(ic) * H * W];
      double* giplane = g_in ? &(*g_in)[static_cast<std::size_t>(ic) * H * W] : nullptr;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const auto widx = ((static_cast<std::size_t>(oc) * C + ic) * K + ky) * K + kx;
          const double w = p.weights[widx];
          const int ox_lo = std::max(0, (P - kx + S - 1) / S);
          const int hi_num = W - 1 + P - kx;
          if (hi_num < 0) continue;
          const int ox_hi = std::min(OW - 1, hi_num / S);
          double gw = 0.0;
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * S - P + ky;
            if (iy < 0 || iy >= H) continue;
            const double* irow = iplane + static_cast<std::size_t>(iy) * W;
            const double* grow = gplane + static_cast<std::size_t>(oy) * OW;
            for (int ox = ox_lo; ox <= ox_hi; ++ox) gw += grow[ox] * irow[ox * S - P + kx];
            if (giplane) {
              double* girow = giplane + static_cast<std::size_t>(iy) * W;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) girow[ox * S - P + kx] += w * grow[ox];
            }
          }
          grad.weights[widx] += gw;
        }
      }
    }
  }
}

// First maximal index in scan order wins.
std::size_t pool_argmax(const MaxPoolLayer& l, const Tensor& in, int c, int oy, int ox) {
  const int H = in.shape.height, W = in.shape.width;
  std::size_t best = static_cast<std::size_t>(c) * H * W + static_cast<std::size_t>(oy * l.stride) * W + ox * l.stride;
  double bv = in.data[best];
  for (int ky = 0; ky < l.kernel; ++ky) {
    for (int kx = 0; kx < l.kernel; ++kx) {
      const auto idx = static_cast<std::size_t>(c) * H * W + static_cast<std::size_t>(oy * l.stride + ky) * W +
                       (ox * l.stride + kx);
      if (in.data[idx] > bv) {
        bv = in.data[idx];
        best = idx;
      }
    }
  }
  return best;
}

void pool_forward(const MaxPoolLayer& l, const Tensor& in, Tensor& out) {
  const int OH = out.shape.height, OW = out.shape.width;
  for (int c = 0; c < out.shape.channels; ++c)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        out.data[(static_cast<std::size_t>(c) * OH + oy) * OW + ox] = in.data[pool_argmax(l, in, c, oy, ox)];
}

void pool_backward(const MaxPoolLayer& l, const Tensor& in, const Tensor& out,
                   const std::vector<double>& g_out, std::vector<double>& g_in) {
  const int OH = out.shape.height, OW = out.shape.width;
  for (int c = 0; c < out.shape.channels; ++c)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        g_in[pool_argmax(l, in, c, oy, ox)] += g_out[(static_cast<std::size_t>(c) * OH + oy) * OW + ox];
}

// scale[c, pos] = k + alpha/n * sum of squares over the channel window
std::vector<double> lrn_scale(const ResponseNormLayer& l, const Tensor& in) {
  const int C = in.shape.channels;
  const std::size_t plane = static_cast<std::size_t>(in.shape.height) * in.shape.width;
  const double coeff = l.alpha / (2 * l.radius + 1);
  std::vector<double> scale(in.data.size());
  for (std::size_t pos = 0; pos < plane; ++pos) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int j = std::max(0, c - l.radius); j <= std::min(C - 1, c + l.radius); ++j) {
        const double a = in.data[j * plane + pos];
        s += a * a;
      }
      scale[c * plane + pos] = l.k + coeff * s;
    }
  }
  return scale;
}

void lrn_forward(const ResponseNormLayer& l, const Tensor& in, Tensor& out) {
  const auto scale = lrn_scale(l, in);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] * std::pow(scale[i], -l.beta);
}

void lrn_backward(const ResponseNormLayer& l, const Tensor& in, const std::vector<double>& g_out,
                  std::vector<double>& g_in) {
  const int C = in.shape.channels;
  const std::size_t plane = static_cast<std::size_t>(in.shape.height) * in.shape.width;
  const auto scale = lrn_scale(l, in);
  const double coeff = 2.0 * l.alpha * l.beta / (2 * l.radius + 1);
  std::vector<double> t(in.data.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g_out[i] * in.data[i] * std::pow(scale[i], -l.beta - 1.0);
  for (std::size_t pos = 0; pos < plane; ++pos) {
    for (int c = 0; c < C; ++c) {
      const auto idx = c * plane + pos;
      double acc = 0.0;
      for (int j = std::max(0, c - l.radius); j <= std::min(C - 1, c + l.radius); ++j) acc += t[j * plane + pos];
      g_in[idx] += g_out[idx] * std::pow(scale[idx], -l.beta) - coeff * in.data[idx] * acc;
    }
  }
}

void dense_forward(const DenseLayer& l, const LayerParams& p, const Tensor& in, Tensor& out) {
  const std::size_t n_in = in.data.size();
  for (int o = 0; o < l.out_dim; ++o) {
    const double* row = &p.weights[static_cast<std::size_t>(o) * n_in];
    double z = p.bias[o];
    for (std::size_t i = 0; i < n_in; ++i) z += row[i] * in.data[i];
    out.data[o] = z;
  }
  if (l.activation == Activation::relu) {
    for (double& v : out.data) v = std::max(v, 0.0);
  } else if (l.activation == Activation::softmax) {
    out.data = softmax(out.data);
  }
}

void dense_backward(const LayerParams& p, const Tensor& in, const std::vector<double>& g_z,
                    LayerParams& grad, std::vector<double>* g_in) {
  const std::size_t n_in = in.data.size();
  for (std::size_t o = 0; o < g_z.size(); ++o) {
    const double g = g_z[o];
    grad.bias[o] += g;
    if (g == 0.0) continue;
    double* grow = &grad.weights[o * n_in];
    for (std::size_t i = 0; i < n_in; ++i) grow[i] += g * in.data[i];
    if (g_in) {
      const double* row = &p.weights[o * n_in];
      for (std::size_t i = 0; i < n_in; ++i) (*g_in)[i] += g * row[i];
    }
  }
}

}  // namespace

ForwardResult forward(const ConvNet& net, const ImageTensor& img, bool train_mode, std::uint64_t seed) {
  const auto& spec = net.spec();
  ForwardResult r;
  r.input = to_tensor(img, spec.input);
  r.activations.resize(spec.layers.size());
  r.dropout.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const Tensor& in = l == 0 ? r.input : r.activations[l - 1];
    Tensor& out = r.activations[l];
    out.shape = net.shapes()[l];
    out.data.assign(out.shape.size(), 0.0);
    const auto& layer = spec.layers[l];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      conv_forward(*c, net.params()[l], in, out);
    } else if (const auto* mp = std::get_if<MaxPoolLayer>(&layer)) {
      pool_forward(*mp, in, out);
    } else if (const auto* n = std::get_if<ResponseNormLayer>(&layer)) {
      lrn_forward(*n, in, out);
    } else {
      const auto& d = std::get<DenseLayer>(layer);
      dense_forward(d, net.params()[l], in, out);
      if (train_mode && d.dropout_rate > 0.0) {
        Rng rng(mix_seed(seed, l));
        const double keep = 1.0 - d.dropout_rate;
        auto& mask = r.dropout[l];
        mask.resize(out.data.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
          mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
          out.data[i] *= mask[i];
        }
      }
    }
  }
  const auto& last = r.activations.back().data;
  r.probs = {last[0], last[1]};
  return r;
}

GradientResult gradients(const ConvNet& net, std::span<const ImageTensor> batch, std::span<const int> labels,
                         std::span<const double> weights, bool train_mode,
                         std::span<const std::uint64_t> seeds) {
  if (batch.size() != labels.size() || batch.size() != weights.size()) {
    throw ShapeError("batch, labels and weights differ in length");
  }
  if (train_mode && seeds.size() != batch.size()) throw ShapeError("train mode needs one seed per sample");
  const auto& spec = net.spec();
  GradientResult res;
  res.grads.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    res.grads[l].weights.assign(net.params()[l].weights.size(), 0.0);
    res.grads[l].bias.assign(net.params()[l].bias.size(), 0.0);
  }
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (weights[s] < 0.0) throw ShapeError("instance weights must be non-negative");
    const int y = labels[s];
    if (y != 0 && y != 1) throw ShapeError("labels must be binary");
    if (weights[s] == 0.0) continue;
    const auto fr = forward(net, batch[s], train_mode, train_mode ? seeds[s] : 0);
    const std::array<double, 2> probs = fr.probs;
    const double w = weights[s];
    res.loss += weighted_loss(std::span(&probs, 1), std::span(&y, 1), std::span(&w, 1));

    // dL/dz at the softmax logits: w * (p - onehot(y))
    std::vector<double> g = {w * (fr.probs[0] - (y == 0 ? 1.0 : 0.0)), w * (fr.probs[1] - (y == 1 ? 1.0 : 0.0))};
    for (std::size_t l = spec.layers.size(); l-- > 0;) {
      const Tensor& in = l == 0 ? fr.input : fr.activations[l - 1];
      const Tensor& out = fr.activations[l];
      const bool need_in = l > 0;
      std::vector<double> g_in(need_in ? in.data.size() : 0, 0.0);
      const auto& layer = spec.layers[l];
      if (const auto* c = std::get_if<ConvLayer>(&layer)) {
        conv_backward(*c, net.params()[l], in, out, g, res.grads[l], need_in ? &g_in : nullptr);
      } else if (const auto* mp = std::get_if<MaxPoolLayer>(&layer)) {
        if (need_in) pool_backward(*mp, in, out, g, g_in);
      } else if (const auto* n = std::get_if<ResponseNormLayer>(&layer)) {
        if (need_in) lrn_backward(*n, in, g, g_in);
      } else {
        const auto& d = std::get<DenseLayer>(layer);
        if (d.activation != Activation::softmax) {
          const auto& mask = fr.dropout[l];
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (!mask.empty()) g[i] *= mask[i];
            if (d.activation == Activation::relu && out.data[i] <= 0.0) g[i] = 0.0;
          }
        }
        dense_backward(net.params()[l], in, g, res.grads[l], need_in ? &g_in : nullptr);
      }
      g = std::move(g_in);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Training

namespace {

ConvNet sgd_impl(ConvNet net, std::span<const ImageTensor> images, std::span<const int> labels,
                 std::span<const double> weights, const TrainConfig& cfg, std::vector<double>* epoch_losses) {
  cfg.validate();
  if (images.size() != labels.size() || images.size() != weights.size()) {
    throw ShapeError("images, labels and weights differ in length");
  }
  const std::size_t n = images.size();
  auto& params = net.params();
  std::vector<LayerParams> velocity(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    velocity[l].weights.assign(params[l].weights.size(), 0.0);
    velocity[l].bias.assign(params[l].bias.size(), 0.0);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffler(mix_seed(cfg.seed, 0x5eed));
  std::uint64_t step = 0;
  int epoch = 0;
  const double total_weight = std::accumulate(weights.begin(), weights.end(), 0.0);

  for (const auto& [rate, epochs] : cfg.schedule) {
    for (int e = 0; e < epochs; ++e, ++epoch) {
      shuffler.shuffle(std::span(order));
      double epoch_loss = 0.0;
      for (std::size_t start = 0, b = 0; start < n; start += cfg.batch_size, ++b, ++step) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<ImageTensor> bx;
        std::vector<int> by;
        std::vector<double> bw;
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = start; i < end; ++i) {
          bx.push_back(images[order[i]]);
          by.push_back(labels[order[i]]);
          bw.push_back(weights[order[i]]);
          seeds.push_back(mix_seed(mix_seed(cfg.seed, step), i - start));
        }
        const auto gr = gradients(net, bx, by, bw, cfg.dropout, seeds);
        if (!std::isfinite(gr.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
        }
        epoch_loss += gr.loss;
        const double scale = 1.0 / static_cast<double>(end - start);
        for (std::size_t l = 0; l < params.size(); ++l) {
          const double lr = rate * (l == net.output_layer() ? cfg.last_layer_lr_multiplier : 1.0);
          auto& p = params[l];
          auto& v = velocity[l];
          for (std::size_t i = 0; i < p.weights.size(); ++i) {
            const double g = gr.grads[l].weights[i] * scale + cfg.weight_decay * p.weights[i];
            v.weights[i] = cfg.momentum * v.weights[i] - lr * g;
            p.weights[i] += v.weights[i];
          }
          for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = cfg.momentum * v.bias[i] - lr * gr.grads[l].bias[i] * scale;
            p.bias[i] += v.bias[i];
          }
        }
      }
      if (epoch_losses) epoch_losses->push_back(total_weight > 0.0 ? epoch_loss / total_weight : 0.0);
    }
  }
  return net;
}

}  // namespace

ConvNet sgd_train(const ConvNet& net, std::span<const ImageTensor> images, std::span<const int> labels,
                  std::span<const double> weights, const TrainConfig& cfg, std::vector<double>* epoch_losses) {
  return sgd_impl(net, images, labels, weights, cfg, epoch_losses);
}

ConvNet fine_tune(const ConvNet& net, std::span<const ImageTensor> images, std::span<const int> labels,
                  std::span<const double> weights, const TrainConfig& cfg) {
  ConvNet tuned = net;
  tuned.reinitialize_layer(tuned.output_layer(), mix_seed(cfg.seed, 0xf8));
  TrainConfig ft = cfg;
  ft.last_layer_lr_multiplier = 10.0;
  return sgd_impl(std::move(tuned), images, labels, weights, ft, nullptr);
}

// ---------------------------------------------------------------------------
// Features

std::string_view to_string(FeatureLayer l) {
  switch (l) {
    case FeatureLayer::C5_pooled:
      return "C5_pooled";
    case FeatureLayer::FC6:
      return "FC6";
    case FeatureLayer::FC7:
      return "FC7";
  }
  return "";
}

FeatureLayer parse_feature_layer(std::string_view s) {
  if (s == "C5_pooled") return FeatureLayer::C5_pooled;
  if (s == "FC6") return FeatureLayer::FC6;
  if (s == "FC7") return FeatureLayer::FC7;
  throw DataError("unknown feature layer '" + std::string(s) + "'");
}

std::size_t feature_layer_index(const ConvNetSpec& spec, FeatureLayer layer) {
  const auto& layers = spec.layers;
  if (layer == FeatureLayer::C5_pooled) {
    std::size_t last_conv = layers.size();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (std::holds_alternative<ConvLayer>(layers[i])) last_conv = i;
    }
    if (last_conv == layers.size()) throw ShapeError("network has no convolution layer");
    for (std::size_t i = last_conv + 1; i < layers.size(); ++i) {
      if (std::holds_alternative<MaxPoolLayer>(layers[i])) return i;
      if (std::holds_alternative<ConvLayer>(layers[i]) || std::holds_alternative<DenseLayer>(layers[i])) break;
    }
    throw ShapeError("last convolution layer is not followed by max pooling");
  }
  const int wanted = layer == FeatureLayer::FC6 ? 0 : 1;
  int seen = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (std::holds_alternative<DenseLayer>(layers[i]) && seen++ == wanted) return i;
  }
  throw ShapeError("network has no " + std::string(to_string(layer)) + " layer");
}

std::vector<double> extract_features(const ConvNet& net, const ImageTensor& img, FeatureLayer layer) {
  const auto idx = feature_layer_index(net.spec(), layer);
  auto fr = forward(net, img, false);
  return std::move(fr.activations[idx].data);
}

double prob_fake(const ConvNet& net, const ImageTensor& img) { return forward(net, img, false).probs[1]; }

}  // namespace imgcred
