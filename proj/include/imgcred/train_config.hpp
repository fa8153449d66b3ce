#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace imgcred {

struct TrainConfig {
  // (rate, epochs) phases run in order.
  std::vector<std::pair<double, int>> schedule{{0.01, 10}};
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool dropout = true;
  std::uint64_t seed = 0;
  double last_layer_lr_multiplier = 1.0;
  // Full-batch learners stop once the gradient norm falls below this.
  double grad_tol = 1e-8;

  int total_epochs() const {
    int n = 0;
    for (const auto& phase : schedule) n += phase.second;
    return n;
  }
  // Throws ShapeError on non-positive rates, epochs or batch size.
  void validate() const;
};

}  // namespace imgcred
