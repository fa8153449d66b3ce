// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "cli_pipeline.hpp"
#include "gradcheck.hpp"
#include "imgcred/data_model.hpp"
#include "imgcred/evaluation.hpp"
#include "imgcred/logreg.hpp"
#include "imgcred/loss.hpp"
#include "imgcred/pattern_mining.hpp"
#include "imgcred/rng.hpp"
#include "imgcred/transfer_boost.hpp"

using namespace imgcred;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

// ---- 1 -------------------------------------------------------------------

ConvNetSpec tiny_net(double dropout) {
  ConvNetSpec s;
  s.input = {1, 8, 8};
  s.layers = {ConvLayer{4, 3, 1, 1, Activation::relu}, MaxPoolLayer{2, 2},
              ConvLayer{6, 3, 1, 0, Activation::relu}, DenseLayer{8, Activation::relu, dropout},
              DenseLayer{2, Activation::softmax, 0.0}};
  return s;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  Rng rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const bool train = trial % 2 == 1;
    ConvNet net(tiny_net(train ? 0.3 : 0.0), 100 + trial);
    testing::randomize(net, 200 + trial, 0.5);
    const auto batch = testing::random_batch(net.spec().input, 4, 300 + trial);
    std::vector<int> labels(4);
    std::vector<double> weights(4);
    std::vector<std::uint64_t> seeds(4);
    for (int i = 0; i < 4; ++i) {
      labels[i] = static_cast<int>(rng.below(2));
      weights[i] = 0.1 + 2.0 * rng.uniform();
      seeds[i] = rng.next_u64();
    }
    const auto r = testing::check_gradients(net, batch, labels, weights, train, seeds, 1e-5);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          fmt("max relative error %.3e over %zu parameters in 6 nets, %.1f s (limit 30 s)", worst, checked, secs)};
}

// ---- 2 -------------------------------------------------------------------

Outcome loss_reduction() {
  Rng rng(7);
  double worst = 0.0;
  for (int b = 0; b < 1000; ++b) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<std::array<double, 2>> probs(n);
    std::vector<int> labels(n);
    const std::vector<double> unit(n, 1.0);
    double ce = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 0.001 + 0.998 * rng.uniform();
      probs[i] = {1.0 - p, p};
      labels[i] = static_cast<int>(rng.below(2));
      ce -= std::log(probs[i][static_cast<std::size_t>(labels[i])]);
    }
    const double got = weighted_loss(probs, labels, unit);
    worst = std::max(worst, std::abs(got - ce) / std::max(1.0, std::abs(ce)));
  }
  // Network loss as well, and exact zeros under zero weights.
  bool zeros = true;
  double net_worst = 0.0;
  for (int b = 0; b < 20; ++b) {
    ConvNet net(tiny_net(0.0), 50 + b);
    testing::randomize(net, 60 + b, 0.5);
    const auto batch = testing::random_batch(net.spec().input, 3, 70 + b);
    const std::vector<int> labels{0, 1, b % 2};
    const std::vector<double> unit(3, 1.0), zero(3, 0.0);
    double ce = 0.0;
    for (std::size_t i = 0; i < 3; ++i) ce -= std::log(forward(net, batch[i]).probs[labels[i]]);
    net_worst = std::max(net_worst, std::abs(gradients(net, batch, labels, unit).loss - ce));
    const auto g = gradients(net, batch, labels, zero);
    zeros = zeros && g.loss == 0.0;
    for (const auto& p : g.grads) {
      for (double v : p.weights) zeros = zeros && v == 0.0;
      for (double v : p.bias) zeros = zeros && v == 0.0;
    }
  }
  const bool ok = worst <= 1e-12 && net_worst <= 1e-12 && zeros;
  return {ok, fmt("max deviation from cross-entropy %.2e (1000 batches), network %.2e; zero weights -> zero loss "
                  "and gradients: %s",
                  worst, net_worst, zeros ? "yes" : "no")};
}

// ---- 3 -------------------------------------------------------------------

int output_formula(const std::vector<int>& h, const std::vector<double>& beta) {
  long double lhs = 1, rhs = 1;
  for (std::size_t t = 0; t < h.size(); ++t) {
    lhs *= std::pow(static_cast<long double>(beta[t]), -static_cast<long double>(h[t]));
    rhs *= std::pow(static_cast<long double>(beta[t]), -0.5L);
  }
  return lhs >= rhs ? 1 : 0;
}

Outcome boost_mechanics() {
  Rng rng(31);
  std::size_t iterations = 0, violations = 0;
  std::string first_violation;
  const auto violate = [&](const std::string& what) {
    if (violations++ == 0) first_violation = what;
  };
  const BaseLearner learner = [](std::span<const Sample> s, std::span<const int> y, std::span<const double> w,
                                 std::uint64_t) -> Model {
    FeatureMatrix X;
    for (const auto& x : s) X.push_back(x.features);
    return train_weighted_logreg(X, y, w, logreg_defaults());
  };
  for (int run = 0; run < 100; ++run) {
    const std::size_t n = 5 + rng.below(60), m = 3 + rng.below(30);
    const double noise = 0.4 * rng.uniform();
    std::vector<Sample> samples;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n + m; ++i) {
      const double x0 = rng.normal(), x1 = rng.normal();
      int y = x0 - 0.5 * x1 > 0 ? 1 : 0;
      if (rng.uniform() < (i < n ? noise : 0.1)) y = 1 - y;
      samples.push_back({{x0, x1}, std::nullopt});
      labels.push_back(y);
    }
    BoostConfig cfg;
    cfg.iterations = 1 + static_cast<int>(rng.below(6));
    cfg.init_strategy = run % 2 ? InitStrategy::average : InitStrategy::finetune_based;
    std::vector<double> probs(n);
    for (double& p : probs) p = rng.uniform();
    const auto observer = [&](const IterationRecord& r) {
      ++iterations;
      const double sum = std::accumulate(r.distribution.begin(), r.distribution.end(), 0.0);
      if (std::abs(sum - 1.0) > 1e-12) violate(fmt("run %d t=%d: p sums to %.17g", run, r.t, sum));
      if (r.epsilon_raw >= 0.5) return;
      for (std::size_t i = 0; i < n + m; ++i) {
        const double b = r.weights_before[i], a = r.weights_after[i];
        if (r.predictions[i] == labels[i] && a != b) violate(fmt("run %d t=%d: correct weight %zu changed", run, r.t, i));
        if (i < n && a > b) violate(fmt("run %d t=%d: auxiliary weight %zu grew", run, r.t, i));
        if (i >= n && a < b) violate(fmt("run %d t=%d: target weight %zu shrank", run, r.t, i));
      }
    };
    run_boost(samples, labels, n, learner, cfg, static_cast<std::uint64_t>(run),
              cfg.init_strategy == InitStrategy::finetune_based ? std::optional<std::span<const double>>(probs)
                                                                : std::nullopt,
              nullptr, observer);
  }
  // Exhaustive vote patterns through ensemble_predict, K <= 6.
  std::size_t patterns = 0, mismatches = 0;
  const Sample x{{0.0}, std::nullopt};
  for (int k = 1; k <= 6; ++k) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> beta(k);
      for (double& b : beta) b = 0.001 + 0.997 * rng.uniform();
      for (int mask = 0; mask < (1 << k); ++mask) {
        BoostEnsemble ens;
        std::vector<int> h(k);
        for (int t = 0; t < k; ++t) {
          h[t] = (mask >> t) & 1;
          ens.members.push_back({LogRegModel{{0.0}, h[t] ? 5.0 : -5.0}, beta[t]});
        }
        ++patterns;
        mismatches += ensemble_predict(ens, x) != output_formula(h, beta);
      }
    }
  }
  const bool ok = violations == 0 && mismatches == 0;
  std::string detail = fmt("100 runs, %zu iterations checked, %zu violations; %zu vote patterns, %zu mismatches",
                           iterations, violations, patterns, mismatches);
  if (violations) detail += "; first: " + first_violation;
  return {ok, detail};
}

// ---- 4 and 5 -------------------------------------------------------------

struct BenchSeed {
  double target_only = 0, data_transfer = 0, combined = 0, iterative_ft = 0, iterative_avg = 0;
  std::vector<double> curve_ft, curve_avg;  // K=10 ensemble accuracy per iteration
};

std::vector<double> padded_curve(const BoostResult& r, int k) {
  std::vector<double> c;
  double last = 0.0;
  for (int t = 0; t < k; ++t) {
    if (t < static_cast<int>(r.log.size())) last = r.log[t].eval_accuracy.value_or(last);
    c.push_back(last);
  }
  return c;
}

double accuracy_of(const BoostResult& r, const PreparedData& data) {
  const auto idx = data.indices(Domain::target_test);
  std::vector<int> pred;
  for (auto i : idx) pred.push_back(ensemble_predict(r.ensemble, data.samples[i]));
  return compute_metrics(pred, data.gather_labels(idx)).accuracy;
}

std::vector<BenchSeed> bench_runs;
double bench_seconds = 0.0;

// Criterion 4's runs; criterion 5 reuses them and adds the initialisation sweeps.
void run_benchmark() {
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = ShiftSpec::benchmark(100, 3.0, seed);
    const auto data = prepare(synth_shift(spec).data, PrepareOptions{false, std::nullopt, nullptr});
    ComparisonConfig cfg;
    cfg.arms = {Arm::target_only, Arm::data_transfer, Arm::combined, Arm::iterative_transfer};
    cfg.boost.iterations = 5;
    cfg.boost.init_strategy = InitStrategy::finetune_based;
    cfg.seed = seed;
    const auto res = run_comparison(data, cfg);
    BenchSeed b;
    b.target_only = res.reports[0].accuracy;
    b.data_transfer = res.reports[1].accuracy;
    b.combined = res.reports[2].accuracy;
    b.iterative_ft = res.reports[3].accuracy;
    bench_runs.push_back(b);
  }
  bench_seconds = seconds_since(t0);
}

double mean(const std::vector<BenchSeed>& v, double BenchSeed::*f) {
  double s = 0;
  for (const auto& b : v) s += b.*f;
  return s / static_cast<double>(v.size());
}

Outcome relative_ordering() {
  run_benchmark();
  const double it = mean(bench_runs, &BenchSeed::iterative_ft);
  const double to = mean(bench_runs, &BenchSeed::target_only);
  const double dt = mean(bench_runs, &BenchSeed::data_transfer);
  const double cb = mean(bench_runs, &BenchSeed::combined);
  const bool ok = it >= to + 0.02 && it >= dt + 0.02 && bench_seconds < 120.0;
  return {ok, fmt("10-seed mean accuracy: iterative %.4f, target-only %.4f (gap %+.4f), data transfer %.4f (gap "
                  "%+.4f); pooled combination %.4f (gap %+.4f, reported only); benchmark %.1f s (limit 120 s)",
                  it, to, it - to, dt, it - dt, cb, it - cb, bench_seconds)};
}

Outcome init_comparison() {
  const int long_k = 10;
  std::vector<double> ft_curve(long_k, 0.0), avg_curve(long_k, 0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = ShiftSpec::benchmark(100, 3.0, seed);
    const auto data = prepare(synth_shift(spec).data, PrepareOptions{false, std::nullopt, nullptr});
    ComparisonConfig cfg;
    cfg.seed = seed;
    cfg.boost.iterations = 5;
    cfg.boost.init_strategy = InitStrategy::average;
    bench_runs[seed].iterative_avg = accuracy_of(iterative_transfer(data, cfg), data);
    cfg.boost.iterations = long_k;
    const auto avg = padded_curve(iterative_transfer(data, cfg), long_k);
    cfg.boost.init_strategy = InitStrategy::finetune_based;
    const auto ft = padded_curve(iterative_transfer(data, cfg), long_k);
    for (int t = 0; t < long_k; ++t) {
      ft_curve[t] += ft[t] / 10.0;
      avg_curve[t] += avg[t] / 10.0;
    }
  }
  const double ft = mean(bench_runs, &BenchSeed::iterative_ft);
  const double avg = mean(bench_runs, &BenchSeed::iterative_avg);
  const auto best = static_cast<int>(std::max_element(ft_curve.begin(), ft_curve.end()) - ft_curve.begin()) + 1;
  std::string curve_ft, curve_avg;
  for (int t = 0; t < long_k; ++t) {
    curve_ft += fmt(" %.4f", ft_curve[t]);
    curve_avg += fmt(" %.4f", avg_curve[t]);
  }
  const bool ok = ft >= avg && best <= 5;
  return {ok, fmt("K=5 mean accuracy finetune_based %.4f vs average %.4f; K=10 mean curve peaks at t=%d "
                  "(finetune:%s | average:%s)",
                  ft, avg, best, curve_ft.c_str(), curve_avg.c_str())};
}

// ---- 6 -------------------------------------------------------------------

double chi2_exact(const Contingency& t) {
  using i128 = __int128;
  const i128 n = t.a + t.b + t.c + t.d;
  const i128 det = static_cast<i128>(t.a) * t.d - static_cast<i128>(t.b) * t.c;
  const i128 num = n * det * det;
  const i128 den = static_cast<i128>(t.a + t.b) * (t.c + t.d) * (t.a + t.c) * (t.b + t.d);
  if (den == 0) return 0.0;
  return static_cast<double>(num / den) + static_cast<double>(num % den) / static_cast<double>(den);
}

Outcome pattern_mining() {
  Rng rng(66);
  // "is", "it" and "real" are also noise words, so the sub-grams of the
  // planted trigram are spread over both classes.
  const std::vector<std::string> vocab{"the", "a", "photo", "news", "city", "today", "look", "is",
                                       "it", "real", "wow", "people", "storm", "video", "share", "now"};
  std::vector<TokenizedDoc> corpus;
  std::vector<int> fake_idx, real_idx;
  for (int i = 0; i < 200; ++i) (i < 100 ? fake_idx : real_idx).push_back(i);
  rng.shuffle(std::span<int>(fake_idx));
  rng.shuffle(std::span<int>(real_idx));
  const std::set<int> planted_fake(fake_idx.begin(), fake_idx.begin() + 95);
  const std::set<int> planted_real(real_idx.begin(), real_idx.begin() + 2);
  const Tokens trigram{"is", "it", "real"};
  for (int i = 0; i < 200; ++i) {
    Tokens t;
    for (int k = 0; k < 20; ++k) t.push_back(vocab[rng.below(vocab.size())]);
    // Strip accidental trigrams from unplanted documents.
    for (std::size_t k = 0; k + 3 <= t.size(); ++k) {
      if (std::equal(trigram.begin(), trigram.end(), t.begin() + k)) t[k + 2] = "now";
    }
    if (planted_fake.count(i) || planted_real.count(i)) {
      const auto at = static_cast<std::ptrdiff_t>(rng.below(t.size() - 2));
      std::copy(trigram.begin(), trigram.end(), t.begin() + at);
    }
    corpus.push_back({std::to_string(i), t, i < 100 ? 1 : 0});
  }
  const auto chi = rank_patterns(corpus, 3, RankMethod::chi2, 5);
  const auto gr = rank_patterns(corpus, 3, RankMethod::gain_ratio, 5);
  const bool chi_first = !chi.patterns.empty() && chi.patterns[0] == trigram;
  const bool gr_first = !gr.patterns.empty() && gr.patterns[0] == trigram;
  double worst_chi = 0.0, gr_lo = 1.0, gr_hi = 0.0;
  const auto all = score_candidates(corpus, 3, 1);
  for (const auto& s : all) {
    const double want = chi2_exact(s.counts);
    worst_chi = std::max(worst_chi, std::abs(s.chi2 - want) / std::max(1.0, std::abs(want)));
    gr_lo = std::min(gr_lo, s.gain_ratio);
    gr_hi = std::max(gr_hi, s.gain_ratio);
  }
  const bool ok = chi_first && gr_first && worst_chi <= 1e-9 && gr_lo >= 0.0 && gr_hi <= 1.0;
  return {ok, fmt("top chi2 '%s', top gain ratio '%s'; %zu candidates, chi2 max relative deviation %.2e; gain "
                  "ratio range [%.4f, %.4f]",
                  chi.patterns.empty() ? "" : join_ngram(chi.patterns[0]).c_str(),
                  gr.patterns.empty() ? "" : join_ngram(gr.patterns[0]).c_str(), all.size(), worst_chi, gr_lo, gr_hi)};
}

// ---- 7 -------------------------------------------------------------------

Outcome metrics_and_split() {
  std::vector<int> pred, label;
  const auto add = [&](int p, int y, int count) {
    for (int i = 0; i < count; ++i) {
      pred.push_back(p);
      label.push_back(y);
    }
  };
  add(1, 1, 75);
  add(0, 1, 25);
  add(1, 0, 20);
  add(0, 0, 80);
  const auto r = compute_metrics(pred, label);
  // Hand arithmetic: P = 75/95, R = 75/100, F1 = 2PR/(P+R) = 150/195.
  const double f1 = 150.0 / 195.0;
  Dataset d;
  for (int i = 0; i < 14616; ++i) {
    d.instances.push_back({"i" + std::to_string(i), std::nullopt, "x", i % 2, Domain::target_train});
  }
  const auto [train, test] = split(d, {9, 1}, 1);
  const bool ok = std::abs(r.fake.f1 - f1) <= 1e-12 && std::abs(r.fake.f1 - 0.7692) <= 1e-4 &&
                  std::abs(r.fake.precision - 75.0 / 95.0) <= 1e-12 && train.instances.size() == 13154 &&
                  test.instances.size() == 1462;
  return {ok, fmt("fake precision %.4f recall %.4f F1 %.4f (oracle %.4f); 14616 at 9:1 -> %zu train / %zu test",
                  r.fake.precision, r.fake.recall, r.fake.f1, f1, train.instances.size(), test.instances.size())};
}

// ---- 8 -------------------------------------------------------------------

ImageTensor blob_image(Rng& rng) {
  const int h = 32 + static_cast<int>(rng.below(49)), w = 32 + static_cast<int>(rng.below(49));
  ImageTensor img(h, w, 3);
  const int blobs = 2 + static_cast<int>(rng.below(4));
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform() * h, cx = rng.uniform() * w, r = 3.0 + rng.uniform() * 12.0;
    const double col[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double g = std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2 * r * r));
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::min(1.0, img.at(y, x, c) + g * col[c]);
      }
  }
  for (double& v : img.values) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
  return img;
}

Outcome dedup_check() {
  Rng rng(88);
  std::vector<ImageTensor> uniques;
  for (int i = 0; i < 900; ++i) uniques.push_back(blob_image(rng));
  // 100 planted copies, each placed after its original.
  std::vector<int> source(900);
  std::iota(source.begin(), source.end(), 0);
  std::vector<std::pair<int, bool>> order;  // (unique id, is copy)
  for (int i = 0; i < 900; ++i) order.push_back({i, false});
  for (int c = 0; c < 100; ++c) {
    const int orig = static_cast<int>(rng.below(900));
    std::size_t pos = 0;
    while (order[pos] != std::pair<int, bool>{orig, false}) ++pos;
    const std::size_t at = pos + 1 + rng.below(order.size() - pos);
    order.insert(order.begin() + static_cast<std::ptrdiff_t>(at), {orig, true});
  }
  std::vector<ImageTensor> images;
  for (const auto& [id, copy] : order) images.push_back(uniques[static_cast<std::size_t>(id)]);
  const auto kept = dedup(images, 64, 0, 3);
  std::size_t copies_kept = 0;
  std::set<int> originals_kept;
  for (auto k : kept) {
    if (order[k].second) ++copies_kept;
    else originals_kept.insert(order[k].first);
  }
  const std::size_t false_merges = 900 - originals_kept.size();
  const double rate = static_cast<double>(false_merges) / 900.0;
  const bool ok = images.size() == 1000 && copies_kept == 0 && rate <= 0.01;
  return {ok, fmt("%zu images, %zu kept; planted copies surviving %zu of 100; false merges %zu (%.2f%%, limit 1%%)",
                  images.size(), kept.size(), copies_kept, false_merges, 100.0 * rate)};
}

// ---- 9 -------------------------------------------------------------------

Outcome cli_determinism() {
  const auto root = std::filesystem::temp_directory_path() / "imgcred_acceptance_cli";
  std::filesystem::remove_all(root);
  std::ostringstream sink;
  auto* old = std::cerr.rdbuf(sink.rdbuf());
  const auto a_steps = testing::run_pipeline(root / "a");
  const auto b_steps = testing::run_pipeline(root / "b");
  std::cerr.rdbuf(old);
  std::set<std::string> commands;
  std::string failed;
  for (const auto& s : a_steps) {
    commands.insert(s.command);
    if (s.code != 0) failed += " " + s.command;
  }
  for (const auto& s : b_steps) {
    if (s.code != 0) failed += " " + s.command;
  }
  const auto a = testing::snapshot(root / "a");
  const auto b = testing::snapshot(root / "b");
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [path, bytes] : a) {
    const auto it = b.find(path);
    if (it == b.end() || it->second != bytes) {
      if (differing++ == 0) first_diff = path;
    }
  }
  if (a.size() != b.size()) ++differing;
  std::filesystem::remove_all(root);
  const bool ok = failed.empty() && differing == 0 && commands.size() == 11;
  std::string detail = fmt("%zu subcommands, %zu output files compared, %zu differ", commands.size(), a.size(), differing);
  if (!failed.empty()) detail += "; nonzero exit:" + failed;
  if (differing) detail += "; first difference " + first_diff;
  return {ok, detail};
}

}  // namespace

int main() {
  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "weighted loss reduction", loss_reduction);
  report(3, "boosting mechanics", boost_mechanics);
  report(4, "relative ordering on the shift benchmark", relative_ordering);
  report(5, "initialisation comparison", init_comparison);
  report(6, "pattern mining", pattern_mining);
  report(7, "metrics and split", metrics_and_split);
  report(8, "dedup", dedup_check);
  report(9, "CLI determinism", cli_determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
