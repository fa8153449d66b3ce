#pragma once

#include <array>
#include <span>
#include <vector>

namespace imgcred {

std::vector<double> relu(std::span<const double> x);

// Max-subtracted exponential normalisation.
std::vector<double> softmax(std::span<const double> x);

inline constexpr double kProbClamp = 1e-12;

// Negated weighted conditional log likelihood:
//   L = -sum_i w_i [y_i ln p_i(1) + (1 - y_i) ln p_i(0)],
// each probability clamped to [1e-12, 1 - 1e-12] before the log.
double weighted_loss(std::span<const std::array<double, 2>> probs, std::span<const int> labels,
                     std::span<const double> weights);

}  // namespace imgcred
