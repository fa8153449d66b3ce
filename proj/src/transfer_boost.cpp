#include "imgcred/transfer_boost.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "imgcred/error.hpp"
#include "imgcred/loss.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

using nlohmann::json;

std::string_view to_string(InitStrategy s) { return s == InitStrategy::average ? "average" : "finetune_based"; }
std::string_view to_string(HalfPolicy s) { return s == HalfPolicy::halt_keep_previous ? "halt_keep_previous" : "clamp"; }
std::string_view to_string(VoteRange s) { return s == VoteRange::all_iterations ? "all_iterations" : "last_half"; }

InitStrategy parse_init_strategy(std::string_view s) {
  if (s == "average") return InitStrategy::average;
  if (s == "finetune_based" || s == "finetune") return InitStrategy::finetune_based;
  throw DataError("unknown init strategy '" + std::string(s) + "'");
}

HalfPolicy parse_half_policy(std::string_view s) {
  if (s == "halt_keep_previous") return HalfPolicy::halt_keep_previous;
  if (s == "clamp") return HalfPolicy::clamp;
  throw DataError("unknown epsilon policy '" + std::string(s) + "'");
}

VoteRange parse_vote_range(std::string_view s) {
  if (s == "all_iterations") return VoteRange::all_iterations;
  if (s == "last_half") return VoteRange::last_half;
  throw DataError("unknown vote range '" + std::string(s) + "'");
}

void BoostConfig::validate() const {
  if (iterations < 1) throw ShapeError("boosting needs at least one iteration");
  if (!(epsilon_floor > 0.0 && epsilon_floor < 0.5)) throw ShapeError("epsilon_floor must lie in (0, 0.5)");
  if (!(clamp_value >= epsilon_floor && clamp_value < 0.5)) throw ShapeError("clamp value must lie in [floor, 0.5)");
}

json boost_config_to_json(const BoostConfig& cfg) {
  return {{"iterations", cfg.iterations},
          {"init_strategy", to_string(cfg.init_strategy)},
          {"epsilon_floor", cfg.epsilon_floor},
          {"epsilon_policy_on_half", to_string(cfg.epsilon_policy_on_half)},
          {"clamp_value", cfg.clamp_value},
          {"vote_range", to_string(cfg.vote_range)}};
}

BoostConfig boost_config_from_json(const json& j, BoostConfig cfg) {
  try {
    cfg.iterations = j.value("iterations", cfg.iterations);
    if (j.contains("init_strategy")) cfg.init_strategy = parse_init_strategy(j["init_strategy"].get<std::string>());
    cfg.epsilon_floor = j.value("epsilon_floor", cfg.epsilon_floor);
    if (j.contains("epsilon_policy_on_half")) {
      cfg.epsilon_policy_on_half = parse_half_policy(j["epsilon_policy_on_half"].get<std::string>());
    }
    cfg.clamp_value = j.value("clamp_value", cfg.clamp_value);
    if (j.contains("vote_range")) cfg.vote_range = parse_vote_range(j["vote_range"].get<std::string>());
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("boost config: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("boost config: ") + e.what());
  }
}

std::vector<double> normalize(std::span<const double> w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(sum > 0.0)) throw NumericError("cannot normalise a weight vector with zero mass");
  std::vector<double> p(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] / sum;
  return p;
}

std::vector<double> init_weights(std::size_t n, std::size_t m, InitStrategy strategy,
                                 std::optional<std::span<const double>> aux_probs) {
  if (n + m == 0) throw ShapeError("no instances to weight");
  if (strategy == InitStrategy::average) {
    return std::vector<double>(n + m, 1.0 / static_cast<double>(n + m));
  }
  if (!aux_probs) throw ShapeError("finetune_based initialisation needs auxiliary probabilities");
  if (aux_probs->size() != n) throw ShapeError("need one probability per auxiliary instance");
  std::vector<double> raw(n + m, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (*aux_probs)[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ShapeError("auxiliary probabilities must lie in [0, 1]");
    raw[i] = p;
  }
  return normalize(raw);
}

double target_error(std::span<const int> predictions, std::span<const int> labels, std::span<const double> w) {
  if (predictions.size() != labels.size() || predictions.size() != w.size()) {
    throw ShapeError("predictions, labels and weights differ in length");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += w[i] * std::abs(predictions[i] - labels[i]);
    den += w[i];
  }
  if (!(den > 0.0)) throw NumericError("target block carries zero weight");
  return num / den;
}

Betas compute_betas(double epsilon, std::size_t n, int iterations, const BoostConfig& cfg) {
  if (n < 2) throw ShapeError("auxiliary set needs at least two instances");
  if (iterations < 1) throw ShapeError("iteration count must be positive");
  Betas b;
  double eps = std::max(epsilon, cfg.epsilon_floor);
  if (eps >= 0.5) {
    if (cfg.epsilon_policy_on_half == HalfPolicy::halt_keep_previous) b.halt = true;
    eps = cfg.clamp_value;
  }
  b.epsilon = eps;
  b.beta_t = eps / (1.0 - eps);
  b.beta = 1.0 / (1.0 + std::sqrt(2.0 * std::log(static_cast<double>(n)) / iterations));
  return b;
}

std::vector<double> update_weights(std::span<const double> w, std::span<const int> predictions,
                                   std::span<const int> labels, double beta, double beta_t, std::size_t n) {
  if (w.size() != predictions.size() || w.size() != labels.size()) {
    throw ShapeError("weights, predictions and labels differ in length");
  }
  if (n > w.size()) throw ShapeError("auxiliary count exceeds weight vector");
  std::vector<double> out(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (predictions[i] == labels[i]) continue;
    out[i] = i < n ? w[i] * beta : w[i] / beta_t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble

std::size_t BoostEnsemble::first_voter() const {
  if (vote_range == VoteRange::all_iterations) return 0;
  const std::size_t k = members.size();
  return k == 0 ? 0 : (k + 1) / 2 - 1;  // t = ceil(K/2), 1-based
}

int weighted_vote(std::span<const int> votes, std::span<const double> betas, VoteRange range) {
  if (votes.empty() || votes.size() != betas.size()) throw ShapeError("vote and beta lists must match and be nonempty");
  const std::size_t k = votes.size();
  const std::size_t first = range == VoteRange::all_iterations ? 0 : (k + 1) / 2 - 1;
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t t = first; t < k; ++t) {
    const double a = std::log(1.0 / betas[t]);
    lhs += a * votes[t];
    rhs += 0.5 * a;
  }
  return lhs >= rhs ? 1 : 0;
}

int ensemble_predict(const BoostEnsemble& ens, const Sample& x) {
  if (ens.members.empty()) throw ShapeError("empty ensemble");
  std::vector<int> votes;
  std::vector<double> betas;
  for (const auto& m : ens.members) {
    votes.push_back(predict(m.model, x).label);
    betas.push_back(m.beta_t);
  }
  return weighted_vote(votes, betas, ens.vote_range);
}

json ensemble_to_json(const BoostEnsemble& ens) {
  json members = json::array();
  for (const auto& m : ens.members) members.push_back({{"beta_t", m.beta_t}, {"model", model_to_json(m.model)}});
  return {{"format_version", 1}, {"vote_range", to_string(ens.vote_range)}, {"members", members}};
}

BoostEnsemble ensemble_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw DataError("unsupported ensemble format_version");
    BoostEnsemble ens;
    ens.vote_range = parse_vote_range(j.at("vote_range").get<std::string>());
    for (const auto& m : j.at("members")) {
      const double beta_t = m.at("beta_t").get<double>();
      if (!(beta_t > 0.0 && beta_t < 1.0)) throw DataError("beta_t outside (0, 1)");
      ens.members.push_back({model_from_json(m.at("model")), beta_t});
    }
    if (ens.members.empty()) throw DataError("ensemble has no members");
    return ens;
  } catch (const json::exception& e) {
    throw DataError(std::string("ensemble document: ") + e.what());
  }
}

void save_ensemble(const BoostEnsemble& ens, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << ensemble_to_json(ens).dump() << '\n';
}

BoostEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ensemble '" + path.string() + "'");
  try {
    return ensemble_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json iteration_log_to_json(const IterationLog& log) {
  json j = {{"t", log.t},
            {"epsilon_t", log.epsilon_t},
            {"beta_t", log.beta_t},
            {"target_accuracy", log.target_accuracy},
            {"aux_weight_mass", log.aux_weight_mass},
            {"weighted_loss", log.weighted_loss}};
  if (log.eval_accuracy) j["eval_accuracy"] = *log.eval_accuracy;
  return j;
}

// ---------------------------------------------------------------------------
// Driver

BoostResult run_boost(std::span<const Sample> samples, std::span<const int> labels, std::size_t n,
                      const BaseLearner& learner, const BoostConfig& cfg, std::uint64_t seed,
                      std::optional<std::span<const double>> aux_probs, const EvalSet* eval,
                      const std::function<void(const IterationRecord&)>& observer) {
  cfg.validate();
  if (samples.size() != labels.size()) throw ShapeError("samples and labels differ in length");
  if (n < 2) throw ShapeError("auxiliary set needs at least two instances");
  if (samples.size() <= n) throw ShapeError("target training set is empty");
  const std::size_t total = samples.size();
  const std::size_t m = total - n;

  auto w = init_weights(n, m, cfg.init_strategy, aux_probs);
  BoostResult result;
  result.ensemble.vote_range = cfg.vote_range;
  std::vector<std::vector<int>> eval_votes;  // per member

  for (int t = 1; t <= cfg.iterations; ++t) {
    const auto p = normalize(w);
    std::vector<double> train_w(total);
    for (std::size_t i = 0; i < total; ++i) train_w[i] = p[i] * static_cast<double>(total);

    Model model;
    try {
      model = learner(samples, labels, train_w, mix_seed(seed, static_cast<std::uint64_t>(t)));
    } catch (const NumericError& e) {
      throw NumericError("boosting iteration " + std::to_string(t) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("boosting iteration " + std::to_string(t) + ": " + e.what());
    }

    std::vector<int> preds(total);
    double loss = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      const auto pr = predict(model, samples[i]);
      preds[i] = pr.label;
      const std::array<double, 2> probs{1.0 - pr.prob_fake, pr.prob_fake};
      loss += weighted_loss(std::span(&probs, 1), labels.subspan(i, 1), std::span(&p[i], 1));
    }
    const double eps = target_error(std::span(preds).subspan(n), labels.subspan(n), std::span(w).subspan(n));
    const auto betas = compute_betas(eps, n, cfg.iterations, cfg);

    IterationLog log;
    log.t = t;
    log.epsilon_t = eps;
    log.beta_t = betas.beta_t;
    std::size_t correct = 0;
    for (std::size_t i = n; i < total; ++i) correct += preds[i] == labels[i];
    log.target_accuracy = static_cast<double>(correct) / static_cast<double>(m);
    log.aux_weight_mass = std::accumulate(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    log.weighted_loss = loss;

    const bool halt_now = betas.halt && !result.ensemble.members.empty();
    std::vector<double> next = halt_now ? w : update_weights(w, preds, labels, betas.beta, betas.beta_t, n);
    if (observer) observer({t, p, w, next, preds, betas, eps});
    if (halt_now) {
      result.halted_early = true;
      break;
    }
    result.ensemble.members.push_back({std::move(model), betas.beta_t});

    if (eval) {
      std::vector<int> votes(eval->samples.size());
      const auto& member = result.ensemble.members.back().model;
      for (std::size_t i = 0; i < votes.size(); ++i) votes[i] = predict(member, eval->samples[i]).label;
      eval_votes.push_back(std::move(votes));
      std::vector<double> member_betas;
      for (const auto& mem : result.ensemble.members) member_betas.push_back(mem.beta_t);
      std::size_t hits = 0;
      std::vector<int> col(eval_votes.size());
      for (std::size_t i = 0; i < eval->samples.size(); ++i) {
        for (std::size_t k = 0; k < eval_votes.size(); ++k) col[k] = eval_votes[k][i];
        hits += weighted_vote(col, member_betas, cfg.vote_range) == eval->labels[i];
      }
      log.eval_accuracy = eval->samples.empty() ? 0.0 : static_cast<double>(hits) / eval->samples.size();
    }
    result.log.push_back(log);
    if (betas.halt) {
      // epsilon >= 0.5 on the first round: keep the clamped member and stop.
      result.halted_early = true;
      break;
    }
    w = std::move(next);
  }
  return result;
}

}  // namespace imgcred
