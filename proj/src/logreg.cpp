#include "imgcred/logreg.hpp"

#include <cmath>
#include <string>

#include "imgcred/error.hpp"

namespace imgcred {

double LogRegModel::logit(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw ShapeError("feature dimension " + std::to_string(x.size()) + " != model dimension " +
                     std::to_string(weights.size()));
  }
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogRegModel::prob_fake(std::span<const double> x) const {
  const double z = logit(x);
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

TrainConfig logreg_defaults() {
  TrainConfig cfg;
  cfg.schedule = {{1.0, 5000}};
  cfg.batch_size = 1;
  cfg.momentum = 0.0;
  cfg.dropout = false;
  cfg.weight_decay = 0.02;
  return cfg;
}

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

struct Problem {
  const FeatureMatrix& X;
  std::span<const int> y;
  std::span<const double> w;
  double decay;
  const LogRegModel* anchor;
  std::size_t dim;

  // theta = weights..., bias
  double eval(const std::vector<double>& theta, std::vector<double>* grad) const {
    const double inv_n = X.empty() ? 0.0 : 1.0 / static_cast<double>(X.size());
    double f = 0.0;
    if (grad) grad->assign(dim + 1, 0.0);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (w[i] == 0.0) continue;
      double z = theta[dim];
      for (std::size_t j = 0; j < dim; ++j) z += theta[j] * X[i][j];
      f += inv_n * w[i] * (softplus(z) - y[i] * z);
      if (grad) {
        const double r = inv_n * w[i] * (sigmoid(z) - y[i]);
        for (std::size_t j = 0; j < dim; ++j) (*grad)[j] += r * X[i][j];
        (*grad)[dim] += r;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = theta[j] - (anchor ? anchor->weights[j] : 0.0);
      f += 0.5 * decay * d * d;
      if (grad) (*grad)[j] += decay * d;
    }
    return f;
  }
};

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void check_inputs(const FeatureMatrix& X, std::span<const int> y, std::span<const double> w, std::size_t dim) {
  if (X.size() != y.size() || X.size() != w.size()) throw ShapeError("X, y and w differ in length");
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != dim) throw ShapeError("row " + std::to_string(i) + " has the wrong dimension");
    if (y[i] != 0 && y[i] != 1) throw ShapeError("labels must be binary");
    if (!(w[i] >= 0.0)) throw ShapeError("instance weights must be non-negative");
  }
}

}  // namespace

std::vector<double> logreg_gradient(const LogRegModel& model, const FeatureMatrix& X, std::span<const int> y,
                                    std::span<const double> w, double weight_decay, const LogRegModel* anchor) {
  check_inputs(X, y, w, model.dim());
  Problem prob{X, y, w, weight_decay, anchor, model.dim()};
  std::vector<double> theta = model.weights;
  theta.push_back(model.bias);
  std::vector<double> g;
  prob.eval(theta, &g);
  return g;
}

LogRegFit fit_weighted_logreg(const FeatureMatrix& X, std::span<const int> y, std::span<const double> w,
                              const TrainConfig& cfg, const LogRegModel* anchor) {
  cfg.validate();
  std::size_t dim = anchor ? anchor->dim() : (X.empty() ? 0 : X[0].size());
  check_inputs(X, y, w, dim);
  Problem prob{X, y, w, cfg.weight_decay, anchor, dim};

  std::vector<double> theta(dim + 1, 0.0);
  if (anchor) {
    std::copy(anchor->weights.begin(), anchor->weights.end(), theta.begin());
    theta[dim] = anchor->bias;
  }
  std::vector<double> grad, next(dim + 1), next_grad;
  double f = prob.eval(theta, &grad);
  double step = cfg.schedule.empty() ? 1.0 : cfg.schedule.front().first;
  const int max_iters = cfg.total_epochs();
  const double tol2 = cfg.grad_tol * cfg.grad_tol;

  LogRegFit fit;
  int it = 0;
  for (; it < max_iters && norm2(grad) >= tol2; ++it) {
    const double g2 = norm2(grad);
    double fn = 0.0;
    bool accepted = false;
    for (int back = 0; back < 60; ++back) {
      for (std::size_t j = 0; j <= dim; ++j) next[j] = theta[j] - step * grad[j];
      fn = prob.eval(next, &next_grad);
      // slack of a few ulps so rounding near the optimum does not stall the search
      if (fn <= f - 1e-4 * step * g2 + 1e-14 * std::abs(f)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!std::isfinite(f) || (accepted && !std::isfinite(fn))) {
      throw NumericError("logistic regression objective became non-finite");
    }
    // no descent left at working precision
    if (!accepted) break;
    // Barzilai-Borwein step for the next iteration
    double sy = 0.0, ss = 0.0;
    for (std::size_t j = 0; j <= dim; ++j) {
      const double s = next[j] - theta[j];
      sy += s * (next_grad[j] - grad[j]);
      ss += s * s;
    }
    const bool stalled = ss == 0.0;
    theta.swap(next);
    grad.swap(next_grad);
    f = fn;
    if (stalled) break;
    step = sy > 0.0 ? ss / sy : 1.0;
  }
  fit.model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(dim));
  fit.model.bias = theta[dim];
  fit.iterations = it;
  fit.objective = f;
  fit.grad_norm = std::sqrt(norm2(grad));
  return fit;
}

LogRegModel train_weighted_logreg(const FeatureMatrix& X, std::span<const int> y, std::span<const double> w,
                                  const TrainConfig& cfg) {
  return fit_weighted_logreg(X, y, w, cfg).model;
}

}  // namespace imgcred
