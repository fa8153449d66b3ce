#include "imgcred/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "imgcred/error.hpp"
#include "imgcred/evaluation.hpp"
#include "imgcred/features.hpp"
#include "imgcred/model.hpp"
#include "imgcred/pattern_mining.hpp"
#include "imgcred/pipeline.hpp"
#include "imgcred/run_config.hpp"
#include "imgcred/transfer_boost.hpp"

namespace imgcred::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void info(const std::string& msg) { std::cerr << "imgcred: " << msg << '\n'; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

// Holds <dir>/.imgcred.lock for the duration of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_((dir.empty() ? fs::path(".") : dir) / ".imgcred.lock") {
    fs::create_directories(path_.parent_path());
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f) {
      throw DataError("output directory is in use by another run (remove '" + path_.string() +
                      "' if it is stale)");
    }
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> manifest;
  std::optional<std::string> features;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_help, bool data_inputs) {
  sub->add_option("--config", c.config, "JSON run config")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Global seed (overrides the config)");
  sub->add_option("--out", c.out, out_help)->required();
  if (data_inputs) {
    sub->add_option("--manifest", c.manifest, "Instance manifest (JSON lines)");
    sub->add_option("--features", c.features, "Feature CSV joined to instances by id");
  }
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config ? load_run_config(*c.config) : RunConfig{};
  if (c.seed) cfg.seed = *c.seed;
  if (c.manifest) cfg.paths.manifest = *c.manifest;
  if (c.features) cfg.paths.features = *c.features;
  return cfg;
}

void echo_config(const fs::path& dir, const std::string& command, const RunConfig& cfg, json options) {
  json j;
  j["command"] = command;
  j["config"] = run_config_to_json(cfg);
  j["options"] = std::move(options);
  write_file(dir / (command + ".effective_config.json"), j.dump(2) + "\n");
}

Dataset load_dataset(const RunConfig& cfg) {
  if (!cfg.paths.manifest) throw DataError("no manifest given (--manifest or paths.manifest)");
  return load_manifest(*cfg.paths.manifest);
}

PreparedData load_prepared(const RunConfig& cfg, std::optional<Shape3> input, bool images) {
  Dataset data = load_dataset(cfg);
  std::optional<FeatureTable> table;
  if (cfg.paths.features) table = load_feature_csv(*cfg.paths.features);
  PrepareOptions opts;
  opts.load_images = images;
  opts.network_input = input;
  opts.features = table ? &*table : nullptr;
  return prepare(std::move(data), opts);
}

bool has_image_paths(const Dataset& d) {
  for (const auto& inst : d.instances) {
    if (inst.image_path) return true;
  }
  return false;
}

// Rewrites image paths so a manifest saved in `dir` still resolves them.
Dataset rebase(Dataset data, const fs::path& dir) {
  const fs::path target = fs::absolute(dir).lexically_normal();
  for (auto& inst : data.instances) {
    if (!inst.image_path) continue;
    const fs::path src = fs::absolute(data.base_dir / *inst.image_path).lexically_normal();
    inst.image_path = src.lexically_relative(target).generic_string();
  }
  data.base_dir = dir;
  return data;
}

std::optional<Shape3> model_input(const Model& m) {
  if (const auto* net = std::get_if<ConvNet>(&m)) return net->spec().input;
  return std::nullopt;
}

std::string render_json_lines(const std::vector<IterationLog>& log) {
  std::string out;
  for (const auto& l : log) out += iteration_log_to_json(l).dump() + "\n";
  return out;
}

ComparisonConfig comparison_config(const RunConfig& cfg) {
  ComparisonConfig c;
  c.arms = cfg.arms;
  c.learner = cfg.learner;
  c.settings = cfg.learner_settings();
  c.boost = cfg.boost;
  c.bovw = cfg.bovw;
  c.lexicons = Lexicons::load(cfg.paths.lexicons);
  c.transfer_layer = cfg.transfer_layer;
  if (cfg.paths.external_model) {
    auto m = load_model(*cfg.paths.external_model);
    auto* net = std::get_if<ConvNet>(&m);
    if (!net) throw DataError("external model must be a convolutional network");
    c.external_source = std::move(*net);
  }
  c.seed = cfg.seed;
  return c;
}

std::vector<std::size_t> indices_of(const PreparedData& data, const std::vector<std::string>& domains) {
  std::set<Domain> wanted;
  for (const auto& d : domains) {
    if (d == "all") {
      wanted = {Domain::auxiliary, Domain::target_train, Domain::target_test};
    } else if (d == "target") {
      wanted.insert(Domain::target_train);
    } else {
      wanted.insert(parse_domain(d));
    }
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.data.instances.size(); ++i) {
    if (wanted.count(data.data.instances[i].domain)) idx.push_back(i);
  }
  if (idx.empty()) throw DataError("no instances in the requested domains");
  return idx;
}

// ---- subcommands ----

struct SynthArgs {
  Common c;
  std::optional<std::string> spec;
  bool render = false;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = base_config(a.c);
  ShiftSpec spec = cfg.shift;
  spec.seed = cfg.seed;
  if (a.spec) {
    const json j = read_json(*a.spec);
    spec = shift_spec_from_json(j, spec);
    if (a.c.seed) spec.seed = *a.c.seed;
  }
  if (a.render) spec.render_images = true;
  spec.validate();
  cfg.shift = spec;
  const fs::path out = a.c.out;
  OutputLock lock(out);
  auto result = synth_shift(spec);
  write_synth(result, out);
  echo_config(out, "synth", cfg, {{"spec", a.spec ? json(*a.spec) : json(nullptr)}, {"render_images", spec.render_images}});
  info("synth: " + std::to_string(result.data.instances.size()) + " instances, " + std::to_string(result.flipped) +
       " auxiliary labels flipped");
  return kExitOk;
}

struct DedupArgs {
  Common c;
  std::optional<int> planes, threshold;
  std::optional<int> min_side;
  std::optional<double> max_aspect;
};

int cmd_dedup(const DedupArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.planes) cfg.dedup.planes = *a.planes;
  if (a.threshold) cfg.dedup.threshold = *a.threshold;
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const Dataset data = load_dataset(cfg);
  std::optional<SizeFilter> filter;
  if (a.min_side || a.max_aspect) {
    filter.emplace();
    if (a.min_side) filter->min_side = *a.min_side;
    if (a.max_aspect) filter->max_aspect = *a.max_aspect;
  }
  std::vector<ImageTensor> images;
  std::vector<std::size_t> owner;
  std::size_t filtered = 0;
  std::vector<char> keep(data.instances.size(), 1);
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const auto& inst = data.instances[i];
    if (!inst.image_path) continue;
    auto img = load_image(data.base_dir / *inst.image_path);
    if (filter && !filter->accepts(img.height, img.width)) {
      keep[i] = 0;
      ++filtered;
      continue;
    }
    keep[i] = 0;
    images.push_back(std::move(img));
    owner.push_back(i);
  }
  const auto kept = dedup(images, cfg.dedup.planes, cfg.dedup.threshold, cfg.seed);
  for (auto k : kept) keep[owner[k]] = 1;
  Dataset result;
  result.base_dir = data.base_dir;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    if (keep[i]) result.instances.push_back(data.instances[i]);
  }
  save_manifest(rebase(std::move(result), dir_of(out)), out);
  echo_config(dir_of(out), "dedup", cfg,
              {{"min_side", a.min_side ? json(*a.min_side) : json(nullptr)},
               {"max_aspect", a.max_aspect ? json(*a.max_aspect) : json(nullptr)}});
  info("dedup: " + std::to_string(images.size() - kept.size()) + " duplicates removed, " + std::to_string(filtered) +
       " removed by size, " + std::to_string(kept.size()) + " images kept");
  return kExitOk;
}

struct MineArgs {
  Common c;
  std::string corpus;
  std::string method = "chi2";
  int top_k = 50;
  int max_n = 3;
  int min_df = 1;
};

int cmd_mine(const MineArgs& a) {
  RunConfig cfg = base_config(a.c);
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const auto records = load_corpus(a.corpus);
  const auto docs = tokenize_corpus(records);
  const auto list = rank_patterns(docs, a.max_n, parse_rank_method(a.method), a.top_k, a.min_df);
  write_file(out, render_pattern_file(list));
  echo_config(dir_of(out), "mine-patterns", cfg,
              {{"corpus", a.corpus}, {"method", a.method}, {"top_k", a.top_k}, {"max_n", a.max_n}, {"min_df", a.min_df}});
  info("mine-patterns: " + std::to_string(list.patterns.size()) + " patterns from " + std::to_string(docs.size()) +
       " documents");
  for (std::size_t i = 0; i < list.patterns.size() && i < 5; ++i) info("  " + join_ngram(list.patterns[i]));
  return kExitOk;
}

struct WeakArgs {
  Common c;
  std::optional<std::string> patterns;
};

int cmd_weak_label(const WeakArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.patterns) cfg.paths.patterns = *a.patterns;
  if (!cfg.paths.patterns) throw DataError("no pattern file given (--patterns or paths.patterns)");
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  Dataset data = load_dataset(cfg);
  const auto patterns = load_pattern_file(*cfg.paths.patterns);
  std::vector<std::pair<std::string, Tokens>> texts;
  for (const auto& inst : data.instances) {
    if (inst.domain == Domain::auxiliary && inst.text) texts.emplace_back(inst.id, tokenize(*inst.text));
  }
  std::set<std::string> matched;
  for (const auto& w : weak_label(texts, patterns)) matched.insert(w.id);
  Dataset result;
  result.base_dir = data.base_dir;
  std::size_t dropped = 0;
  for (auto& inst : data.instances) {
    if (inst.domain == Domain::auxiliary && inst.text) {
      if (matched.count(inst.id)) {
        inst.label = 1;
      } else if (!inst.label) {
        ++dropped;
        continue;
      }
    }
    result.instances.push_back(std::move(inst));
  }
  save_manifest(rebase(std::move(result), dir_of(out)), out);
  echo_config(dir_of(out), "weak-label", cfg, json::object());
  info("weak-label: " + std::to_string(matched.size()) + " auxiliary posts matched, " + std::to_string(dropped) +
       " unlabelled posts dropped");
  return kExitOk;
}

struct FeaturizeArgs {
  Common c;
  std::string kind;
  std::vector<std::string> lexicons;
  std::optional<int> k, grid_step, patch, max_iters;
  std::optional<std::string> vocab_in;
  std::optional<std::string> vocab_out;
};

int cmd_featurize(const FeaturizeArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.k) cfg.bovw.k = *a.k;
  if (a.grid_step) cfg.bovw.grid_step = *a.grid_step;
  if (a.patch) cfg.bovw.patch = *a.patch;
  if (a.max_iters) cfg.bovw.max_iters = *a.max_iters;
  for (const auto& entry : a.lexicons) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw DataError("--lexicon expects category=path, got '" + entry + "'");
    cfg.paths.lexicons[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const Dataset data = load_dataset(cfg);
  FeatureTable table;
  if (a.kind == "text") {
    const auto lex = Lexicons::load(cfg.paths.lexicons);
    table.columns.assign(TextFeatureVector::names.begin(), TextFeatureVector::names.end());
    for (const auto& inst : data.instances) {
      if (!inst.text) continue;
      table.ids.push_back(inst.id);
      table.rows.push_back(text_features(*inst.text, lex).to_vector());
    }
  } else {
    std::vector<std::pair<std::size_t, std::vector<Descriptor>>> per_image;
    std::vector<Descriptor> pool;
    for (std::size_t i = 0; i < data.instances.size(); ++i) {
      const auto& inst = data.instances[i];
      if (!inst.image_path) continue;
      auto descs = extract_descriptors(to_grayscale(load_image(data.base_dir / *inst.image_path)), cfg.bovw.grid_step,
                                       cfg.bovw.patch);
      if (inst.domain != Domain::target_test) pool.insert(pool.end(), descs.begin(), descs.end());
      per_image.emplace_back(i, std::move(descs));
    }
    Vocabulary vocab;
    if (a.vocab_in) {
      vocab = parse_vocabulary(read_file(*a.vocab_in));
    } else {
      if (pool.empty()) throw DataError("no descriptors to build a vocabulary from");
      const int k = std::min<int>(cfg.bovw.k, static_cast<int>(pool.size()));
      vocab = build_vocabulary(pool, k, cfg.seed, cfg.bovw.max_iters).vocab;
    }
    for (int w = 0; w < vocab.k; ++w) table.columns.push_back("w" + std::to_string(w));
    for (const auto& [i, descs] : per_image) {
      table.ids.push_back(data.instances[i].id);
      table.rows.push_back(bovw_histogram(descs, vocab));
    }
    if (a.vocab_out) write_file(*a.vocab_out, render_vocabulary(vocab));
  }
  write_file(out, render_feature_csv(table));
  echo_config(dir_of(out), "featurize", cfg, {{"kind", a.kind}});
  info("featurize " + a.kind + ": " + std::to_string(table.rows.size()) + " rows x " +
       std::to_string(table.columns.size()) + " columns");
  return kExitOk;
}

struct TrainArgs {
  Common c;
  std::string kind;
  std::vector<std::string> domains{"target_train"};
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = base_config(a.c);
  cfg.learner = parse_learner_kind(a.kind);
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const bool conv = cfg.learner == LearnerKind::convnet;
  const auto data = load_prepared(cfg, conv ? std::optional<Shape3>(cfg.convnet_spec.input) : std::nullopt, conv);
  const auto idx = indices_of(data, a.domains);
  const auto model = train_model(cfg.learner, cfg.learner_settings(), data, idx, cfg.seed);
  save_model(model, out);
  echo_config(dir_of(out), "train", cfg, {{"kind", a.kind}, {"domains", a.domains}});
  const auto pred = predict_labels(model, data, idx);
  const auto r = compute_metrics(pred, data.gather_labels(idx));
  info("train " + a.kind + ": " + std::to_string(idx.size()) + " instances, training accuracy " +
       std::to_string(r.accuracy));
  return kExitOk;
}

struct FineTuneArgs {
  Common c;
  std::optional<std::string> model;
};

int cmd_fine_tune(const FineTuneArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.model) cfg.paths.model = *a.model;
  if (!cfg.paths.model) throw DataError("no source model given (--model or paths.model)");
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const Model source = load_model(*cfg.paths.model);
  const auto input = model_input(source);
  const auto data = load_prepared(cfg, input, input.has_value());
  const auto idx = data.indices(Domain::target_train);
  if (idx.empty()) throw DataError("no target_train instances to fine-tune on");
  const auto model = fine_tune_model(source, cfg.learner_settings(), data, idx, cfg.seed);
  save_model(model, out);
  echo_config(dir_of(out), "fine-tune", cfg, json::object());
  info("fine-tune: " + std::to_string(idx.size()) + " target instances");
  return kExitOk;
}

struct ExtractArgs {
  Common c;
  std::optional<std::string> model;
  std::optional<std::string> layer;
};

int cmd_extract(const ExtractArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.model) cfg.paths.model = *a.model;
  if (a.layer) cfg.transfer_layer = parse_feature_layer(*a.layer);
  if (!cfg.paths.model) throw DataError("no network given (--model or paths.model)");
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const Model m = load_model(*cfg.paths.model);
  const auto* net = std::get_if<ConvNet>(&m);
  if (!net) throw DataError("extract-features needs a convolutional network model");
  const auto data = load_prepared(cfg, net->spec().input, true);
  FeatureTable table;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    if (!data.samples[i].image) continue;
    table.ids.push_back(data.data.instances[i].id);
    table.rows.push_back(extract_features(*net, *data.samples[i].image, cfg.transfer_layer));
  }
  if (table.rows.empty()) throw DataError("no instances with images");
  for (std::size_t j = 0; j < table.rows[0].size(); ++j) table.columns.push_back("f" + std::to_string(j));
  write_file(out, render_feature_csv(table));
  echo_config(dir_of(out), "extract-features", cfg, json::object());
  info("extract-features " + std::string(to_string(cfg.transfer_layer)) + ": " + std::to_string(table.rows.size()) +
       " rows x " + std::to_string(table.columns.size()));
  return kExitOk;
}

struct BoostArgs {
  Common c;
  std::optional<int> iterations;
  std::optional<std::string> init, learner, vote_range, log;
};

void apply_boost_flags(RunConfig& cfg, const std::optional<int>& iterations, const std::optional<std::string>& init,
                       const std::optional<std::string>& learner, const std::optional<std::string>& vote_range) {
  if (iterations) cfg.boost.iterations = *iterations;
  if (init) cfg.boost.init_strategy = parse_init_strategy(*init);
  if (learner) cfg.learner = parse_learner_kind(*learner);
  if (vote_range) cfg.boost.vote_range = parse_vote_range(*vote_range);
  cfg.boost.validate();
}

int cmd_boost(const BoostArgs& a) {
  RunConfig cfg = base_config(a.c);
  apply_boost_flags(cfg, a.iterations, a.init, a.learner, a.vote_range);
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const bool conv = cfg.learner == LearnerKind::convnet;
  const auto data = load_prepared(cfg, conv ? std::optional<Shape3>(cfg.convnet_spec.input) : std::nullopt, conv);
  auto ccfg = comparison_config(cfg);
  const auto result = iterative_transfer(data, ccfg);
  save_ensemble(result.ensemble, out);
  if (a.log) write_file(*a.log, render_json_lines(result.log));
  echo_config(dir_of(out), "transfer-boost", cfg, {{"log", a.log ? json(*a.log) : json(nullptr)}});
  for (const auto& l : result.log) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  t=%d eps=%.4f beta_t=%.4g target_acc=%.4f aux_mass=%.4f", l.t, l.epsilon_t,
                  l.beta_t, l.target_accuracy, l.aux_weight_mass);
    std::string line = buf;
    if (l.eval_accuracy) {
      std::snprintf(buf, sizeof buf, " eval_acc=%.4f", *l.eval_accuracy);
      line += buf;
    }
    info(line);
  }
  if (result.halted_early) info("transfer-boost: halted early, target error reached 0.5");
  return kExitOk;
}

struct EvaluateArgs {
  Common c;
  std::optional<std::string> model;
  std::optional<std::string> table;
};

int cmd_evaluate(const EvaluateArgs& a) {
  RunConfig cfg = base_config(a.c);
  if (a.model) cfg.paths.model = *a.model;
  if (!cfg.paths.model) throw DataError("no model given (--model or paths.model)");
  const fs::path out = a.c.out;
  OutputLock lock(dir_of(out));
  const json mj = read_json(*cfg.paths.model);
  std::optional<BoostEnsemble> ensemble;
  std::optional<Model> model;
  std::optional<Shape3> input;
  if (mj.is_object() && mj.contains("members")) {
    ensemble = ensemble_from_json(mj);
    for (const auto& m : ensemble->members) {
      if (!input) input = model_input(m.model);
    }
  } else {
    model = model_from_json(mj);
    input = model_input(*model);
  }
  const auto data = load_prepared(cfg, input, input.has_value());
  const auto idx = data.indices(Domain::target_test);
  if (idx.empty()) throw DataError("no target_test instances to evaluate on");
  std::vector<int> pred;
  for (auto i : idx) {
    pred.push_back(ensemble ? ensemble_predict(*ensemble, data.samples[i]) : predict(*model, data.samples[i]).label);
  }
  std::vector<MetricsReport> reports{
      compute_metrics(pred, data.gather_labels(idx), fs::path(*cfg.paths.model).stem().string())};
  write_file(out, metrics_to_json(std::span<const MetricsReport>(reports)).dump(2) + "\n");
  const auto table = render_table(reports);
  if (a.table) write_file(*a.table, table);
  echo_config(dir_of(out), "evaluate", cfg, {{"table", a.table ? json(*a.table) : json(nullptr)}});
  std::cerr << table;
  return kExitOk;
}

struct CompareArgs {
  Common c;
  std::optional<std::vector<std::string>> arms;
  std::optional<int> iterations;
  std::optional<std::string> init, learner, vote_range;
  std::optional<std::string> external_model;
  std::optional<std::string> network;
  std::vector<std::string> layers;
};

int cmd_compare(const CompareArgs& a) {
  RunConfig cfg = base_config(a.c);
  apply_boost_flags(cfg, a.iterations, a.init, a.learner, a.vote_range);
  if (a.arms) {
    cfg.arms.clear();
    for (const auto& s : *a.arms) cfg.arms.push_back(parse_arm(s));
  }
  if (a.external_model) cfg.paths.external_model = *a.external_model;
  const fs::path out = a.c.out;
  OutputLock lock(out);
  auto ccfg = comparison_config(cfg);
  if (ccfg.external_source && !(ccfg.external_source->spec().input == cfg.convnet_spec.input)) {
    throw DataError("external model input shape differs from convnet_spec.input");
  }
  const bool images = has_image_paths(load_dataset(cfg));
  const auto data = load_prepared(cfg, images ? std::optional<Shape3>(cfg.convnet_spec.input) : std::nullopt, images);
  const auto result = run_comparison(data, ccfg);
  write_file(out / "metrics.json", metrics_to_json(std::span<const MetricsReport>(result.reports)).dump(2) + "\n");
  const auto table = render_table(result.reports);
  write_file(out / "table.txt", table);
  if (!result.boost_log.empty()) write_file(out / "boost_log.jsonl", render_json_lines(result.boost_log));
  if (!a.layers.empty()) {
    if (!a.network) throw DataError("--layers needs --network");
    const Model m = load_model(*a.network);
    const auto* net = std::get_if<ConvNet>(&m);
    if (!net) throw DataError("--network must be a convolutional network");
    const auto ldata = load_prepared(cfg, net->spec().input, true);
    std::vector<FeatureLayer> layers;
    for (const auto& l : a.layers) layers.push_back(parse_feature_layer(l));
    const auto reports = layer_comparison(*net, ldata, layers, cfg.logreg);
    write_file(out / "layers.json", metrics_to_json(std::span<const MetricsReport>(reports)).dump(2) + "\n");
    write_file(out / "layers_table.txt", render_table(reports));
  }
  echo_config(out, "compare", cfg,
              {{"network", a.network ? json(*a.network) : json(nullptr)}, {"layers", a.layers}});
  std::cerr << table;
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Image credibility classification with domain-transferred learners"};
  app.name("imgcred");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::function<int()> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the synthetic domain-shift benchmark");
  add_common(s, synth.c, "Output directory", false);
  s->add_option("--spec", synth.spec, "Shift spec JSON")->check(CLI::ExistingFile);
  s->add_flag("--render-images", synth.render, "Also render 16x16 image encodings");
  s->callback([&] { action = [&] { return cmd_synth(synth); }; });

  DedupArgs dd;
  s = app.add_subcommand("dedup", "Remove near-duplicate images by LSH");
  add_common(s, dd.c, "Deduplicated manifest", true);
  s->add_option("--planes", dd.planes, "Hyperplanes per signature");
  s->add_option("--threshold", dd.threshold, "Maximum Hamming distance of a duplicate");
  s->add_option("--min-side", dd.min_side, "Drop images with a shorter side");
  s->add_option("--max-aspect", dd.max_aspect, "Drop images with a larger aspect ratio");
  s->callback([&] { action = [&] { return cmd_dedup(dd); }; });

  MineArgs mine;
  s = app.add_subcommand("mine-patterns", "Rank fake-indicative n-grams");
  add_common(s, mine.c, "Pattern file", false);
  s->add_option("--corpus", mine.corpus, "Labelled corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  s->add_option("--method", mine.method, "chi2 or gain_ratio")->check(CLI::IsMember({"chi2", "gain_ratio"}))->capture_default_str();
  s->add_option("--top-k", mine.top_k, "Patterns to keep")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--max-n", mine.max_n, "Longest n-gram")->check(CLI::Range(1, 3))->capture_default_str();
  s->add_option("--min-df", mine.min_df, "Minimum document frequency")->check(CLI::PositiveNumber)->capture_default_str();
  s->callback([&] { action = [&] { return cmd_mine(mine); }; });

  WeakArgs weak;
  s = app.add_subcommand("weak-label", "Label auxiliary posts that match mined patterns as fake");
  add_common(s, weak.c, "Labelled manifest", true);
  s->add_option("--patterns", weak.patterns, "Pattern file");
  s->callback([&] { action = [&] { return cmd_weak_label(weak); }; });

  FeaturizeArgs feat;
  s = app.add_subcommand("featurize", "Compute text or bag-of-visual-words features");
  add_common(s, feat.c, "Feature CSV", true);
  s->add_option("kind", feat.kind, "text or bovw")->required()->check(CLI::IsMember({"text", "bovw"}));
  s->add_option("--lexicon", feat.lexicons, "category=path word list (repeatable)");
  s->add_option("--k", feat.k, "Vocabulary size");
  s->add_option("--grid-step", feat.grid_step, "Descriptor grid step");
  s->add_option("--patch", feat.patch, "Descriptor patch size");
  s->add_option("--max-iters", feat.max_iters, "k-means iteration cap");
  s->add_option("--vocab", feat.vocab_in, "Reuse a saved vocabulary")->check(CLI::ExistingFile);
  s->add_option("--vocab-out", feat.vocab_out, "Save the vocabulary");
  s->callback([&] { action = [&] { return cmd_featurize(feat); }; });

  TrainArgs train;
  s = app.add_subcommand("train", "Train a weighted base learner");
  add_common(s, train.c, "Model file", true);
  s->add_option("kind", train.kind, "logreg or convnet")->required()->check(CLI::IsMember({"logreg", "convnet"}));
  s->add_option("--domains", train.domains, "Domains to train on (auxiliary, target_train, target_test, target, all)")
      ->delimiter(',')
      ->capture_default_str();
  s->callback([&] { action = [&] { return cmd_train(train); }; });

  FineTuneArgs ft;
  s = app.add_subcommand("fine-tune", "Fine-tune a model on target_train");
  add_common(s, ft.c, "Model file", true);
  s->add_option("--model", ft.model, "Source model")->check(CLI::ExistingFile);
  s->callback([&] { action = [&] { return cmd_fine_tune(ft); }; });

  ExtractArgs ex;
  s = app.add_subcommand("extract-features", "Layer activations of a network as a feature CSV");
  add_common(s, ex.c, "Feature CSV", true);
  s->add_option("--model", ex.model, "Network model")->check(CLI::ExistingFile);
  s->add_option("--layer", ex.layer, "C5_pooled, FC6 or FC7");
  s->callback([&] { action = [&] { return cmd_extract(ex); }; });

  BoostArgs boost;
  s = app.add_subcommand("transfer-boost", "Iterative transfer learning over auxiliary and target data");
  add_common(s, boost.c, "Ensemble file", true);
  s->add_option("--iterations", boost.iterations, "Boosting rounds K");
  s->add_option("--init", boost.init, "average or finetune");
  s->add_option("--learner", boost.learner, "logreg or convnet");
  s->add_option("--vote-range", boost.vote_range, "all_iterations or last_half");
  s->add_option("--log", boost.log, "Per-iteration log (JSON lines)");
  s->callback([&] { action = [&] { return cmd_boost(boost); }; });

  EvaluateArgs ev;
  s = app.add_subcommand("evaluate", "Score a model or ensemble on target_test");
  add_common(s, ev.c, "Metrics JSON", true);
  s->add_option("--model", ev.model, "Model or ensemble file")->check(CLI::ExistingFile);
  s->add_option("--table", ev.table, "Also write the plain-text table here");
  s->callback([&] { action = [&] { return cmd_evaluate(ev); }; });

  CompareArgs cmp;
  s = app.add_subcommand("compare", "Run the baseline comparison");
  add_common(s, cmp.c, "Output directory", true);
  s->add_option("--arms", cmp.arms, "Comma-separated arms")->delimiter(',');
  s->add_option("--iterations", cmp.iterations, "Boosting rounds K");
  s->add_option("--init", cmp.init, "average or finetune");
  s->add_option("--learner", cmp.learner, "logreg or convnet");
  s->add_option("--vote-range", cmp.vote_range, "all_iterations or last_half");
  s->add_option("--external-model", cmp.external_model, "Externally trained source network")->check(CLI::ExistingFile);
  s->add_option("--network", cmp.network, "Network for the layer comparison")->check(CLI::ExistingFile);
  s->add_option("--layers", cmp.layers, "Layers to compare (C5_pooled,FC6,FC7)")->delimiter(',');
  s->callback([&] { action = [&] { return cmd_compare(cmp); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const NumericError& e) {
    info(std::string("numeric failure: ") + e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    info(std::string("error: ") + e.what());
    return kExitData;
  } catch (const ShapeError& e) {
    info(std::string("error: ") + e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    info(std::string("error: ") + e.what());
    return kExitData;
  } catch (const json::exception& e) {
    info(std::string("error: ") + e.what());
    return kExitData;
  } catch (const std::exception& e) {
    info(std::string("error: ") + e.what());
    return kExitData;
  }
}

}  // namespace imgcred::cli
