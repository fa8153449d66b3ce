#pragma once

#include <span>
#include <vector>

#include "imgcred/train_config.hpp"

namespace imgcred {

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;

  double logit(std::span<const double> x) const;
  double prob_fake(std::span<const double> x) const;
  std::size_t dim() const { return weights.size(); }
  bool operator==(const LogRegModel&) const = default;
};

using FeatureMatrix = std::vector<std::vector<double>>;

struct LogRegFit {
  LogRegModel model;
  int iterations = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

// Weighted logistic regression by full-batch gradient descent on
//   (1/N) sum_i w_i l_i(theta) + weight_decay/2 * ||weights - anchor||^2
// with Barzilai-Borwein steps and an Armijo safeguard. The first schedule
// rate is the initial step; total schedule epochs cap the iteration count.
// With an anchor the fit starts from it and shrinks towards it (fine-tuning).
LogRegFit fit_weighted_logreg(const FeatureMatrix& X, std::span<const int> y, std::span<const double> w,
                              const TrainConfig& cfg, const LogRegModel* anchor = nullptr);

LogRegModel train_weighted_logreg(const FeatureMatrix& X, std::span<const int> y, std::span<const double> w,
                                  const TrainConfig& cfg);

// Objective gradient (weights then bias) at `model`, for optimality checks.
std::vector<double> logreg_gradient(const LogRegModel& model, const FeatureMatrix& X, std::span<const int> y,
                                    std::span<const double> w, double weight_decay,
                                    const LogRegModel* anchor = nullptr);

// Full-batch defaults: initial step 1, up to 5000 iterations, decay 0.02.
TrainConfig logreg_defaults();

}  // namespace imgcred
