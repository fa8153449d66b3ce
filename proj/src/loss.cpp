#include "imgcred/loss.hpp"

#include <algorithm>
#include <cmath>

#include "imgcred/error.hpp"

namespace imgcred {

std::vector<double> relu(std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return std::max(v, 0.0); });
  return out;
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) return {};
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double weighted_loss(std::span<const std::array<double, 2>> probs, std::span<const int> labels,
                     std::span<const double> weights) {
  if (probs.size() != labels.size() || probs.size() != weights.size()) {
    throw ShapeError("probs, labels and weights differ in length");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (weights[i] < 0.0) throw ShapeError("instance weights must be non-negative");
    if (weights[i] == 0.0) continue;
    const double p = std::clamp(probs[i][labels[i] == 1 ? 1 : 0], kProbClamp, 1.0 - kProbClamp);
    loss -= weights[i] * std::log(p);
  }
  return loss;
}

}  // namespace imgcred
