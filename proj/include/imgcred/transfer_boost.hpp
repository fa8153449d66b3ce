#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "imgcred/model.hpp"

namespace imgcred {

enum class InitStrategy { average, finetune_based };
enum class HalfPolicy { halt_keep_previous, clamp };
enum class VoteRange { all_iterations, last_half };

std::string_view to_string(InitStrategy s);
std::string_view to_string(HalfPolicy s);
std::string_view to_string(VoteRange s);
InitStrategy parse_init_strategy(std::string_view s);
HalfPolicy parse_half_policy(std::string_view s);
VoteRange parse_vote_range(std::string_view s);

struct BoostConfig {
  int iterations = 5;  // K
  InitStrategy init_strategy = InitStrategy::average;
  double epsilon_floor = 1e-6;
  HalfPolicy epsilon_policy_on_half = HalfPolicy::halt_keep_previous;
  double clamp_value = 0.499;
  VoteRange vote_range = VoteRange::all_iterations;

  void validate() const;
};

nlohmann::json boost_config_to_json(const BoostConfig& cfg);
BoostConfig boost_config_from_json(const nlohmann::json& j, BoostConfig base = {});

// Initial weights over the n auxiliary then m target instances, summing to 1.
// finetune_based gives auxiliary instance i raw weight aux_probs[i] (the
// predicted probability of its weak label) and each target instance 1.
std::vector<double> init_weights(std::size_t n, std::size_t m, InitStrategy strategy,
                                 std::optional<std::span<const double>> aux_probs = std::nullopt);

std::vector<double> normalize(std::span<const double> w);

// Weighted error over the target block: sum w|P - L| / sum w.
double target_error(std::span<const int> predictions, std::span<const int> labels, std::span<const double> w);

struct Betas {
  double beta_t = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;  // value after the floor/half policy
  bool halt = false;     // epsilon >= 0.5 under halt_keep_previous
};

// beta_t = eps/(1-eps), beta = 1/(1 + sqrt(2 ln n / K)).
Betas compute_betas(double epsilon, std::size_t n, int iterations, const BoostConfig& cfg);

// Auxiliary (i < n): w * beta^|P-L|; target: w * beta_t^-|P-L|.
std::vector<double> update_weights(std::span<const double> w, std::span<const int> predictions,
                                   std::span<const int> labels, double beta, double beta_t, std::size_t n);

struct EnsembleMember {
  Model model;
  double beta_t = 0.5;
};

struct BoostEnsemble {
  std::vector<EnsembleMember> members;
  VoteRange vote_range = VoteRange::all_iterations;

  // Index of the first voting member under vote_range.
  std::size_t first_voter() const;
};

// Thresholded vote: 1 iff sum log(1/beta_t) P_t >= sum 0.5 log(1/beta_t),
// over the members selected by `range`.
int weighted_vote(std::span<const int> votes, std::span<const double> betas, VoteRange range);

int ensemble_predict(const BoostEnsemble& ens, const Sample& x);

nlohmann::json ensemble_to_json(const BoostEnsemble& ens);
BoostEnsemble ensemble_from_json(const nlohmann::json& j);
void save_ensemble(const BoostEnsemble& ens, const std::filesystem::path& path);
BoostEnsemble load_ensemble(const std::filesystem::path& path);

// Trains one instance-weighted model. Weights are rescaled to mean 1.
using BaseLearner = std::function<Model(std::span<const Sample> samples, std::span<const int> labels,
                                        std::span<const double> weights, std::uint64_t seed)>;

struct IterationLog {
  int t = 0;
  double epsilon_t = 0.0;  // raw, before policy
  double beta_t = 0.0;
  double target_accuracy = 0.0;  // unweighted accuracy of P_t on the target block
  double aux_weight_mass = 0.0;  // auxiliary share of p^t
  double weighted_loss = 0.0;    // sum_i p_i l_i of P_t
  std::optional<double> eval_accuracy;  // ensemble-so-far accuracy on the evaluation set
};

nlohmann::json iteration_log_to_json(const IterationLog& log);

// Full per-iteration state, for observers and property checks.
struct IterationRecord {
  int t = 0;
  std::span<const double> distribution;  // p^t
  std::span<const double> weights_before;
  std::span<const double> weights_after;
  std::span<const int> predictions;
  Betas betas;
  double epsilon_raw = 0.0;
};

struct EvalSet {
  std::span<const Sample> samples;
  std::span<const int> labels;
};

struct BoostResult {
  BoostEnsemble ensemble;
  std::vector<IterationLog> log;
  bool halted_early = false;
};

// Iterative transfer over samples laid out as n auxiliary then m target.
BoostResult run_boost(std::span<const Sample> samples, std::span<const int> labels, std::size_t n,
                      const BaseLearner& learner, const BoostConfig& cfg, std::uint64_t seed,
                      std::optional<std::span<const double>> aux_probs = std::nullopt,
                      const EvalSet* eval = nullptr,
                      const std::function<void(const IterationRecord&)>& observer = {});

}  // namespace imgcred
