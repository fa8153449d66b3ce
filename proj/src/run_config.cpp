#include "imgcred/run_config.hpp"

#include <fstream>
#include <sstream>

#include "imgcred/error.hpp"
#include "imgcred/model.hpp"

namespace imgcred {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const json& v, const std::filesystem::path& base) {
  std::filesystem::path p = v.get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

void read_paths(const json& j, const std::filesystem::path& base, RunPaths& p) {
  if (!j.is_object()) throw DataError("'paths' must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "manifest") p.manifest = resolve(v, base);
    else if (key == "features") p.features = resolve(v, base);
    else if (key == "patterns") p.patterns = resolve(v, base);
    else if (key == "model") p.model = resolve(v, base);
    else if (key == "external_model") p.external_model = resolve(v, base);
    else if (key == "out_dir") p.out_dir = resolve(v, base);
    else if (key == "lexicons") {
      for (const auto& [cat, path] : v.items()) p.lexicons[cat] = resolve(path, base);
    } else {
      throw DataError("unknown paths entry '" + key + "'");
    }
  }
}

json opt_path(const std::optional<std::filesystem::path>& p) {
  return p ? json(p->generic_string()) : json(nullptr);
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir, RunConfig cfg) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "paths") read_paths(v, base_dir, cfg.paths);
      else if (key == "learner") cfg.learner = parse_learner_kind(v.get<std::string>());
      else if (key == "logreg") cfg.logreg = train_config_from_json(v, cfg.logreg);
      else if (key == "train" || key == "convnet") cfg.convnet = train_config_from_json(v, cfg.convnet);
      else if (key == "convnet_spec") cfg.convnet_spec = spec_from_json(v);
      else if (key == "boost") cfg.boost = boost_config_from_json(v, cfg.boost);
      else if (key == "shift") cfg.shift = shift_spec_from_json(v, cfg.shift);
      else if (key == "bovw") {
        cfg.bovw.k = v.value("k", cfg.bovw.k);
        cfg.bovw.grid_step = v.value("grid_step", cfg.bovw.grid_step);
        cfg.bovw.patch = v.value("patch", cfg.bovw.patch);
        cfg.bovw.max_iters = v.value("max_iters", cfg.bovw.max_iters);
      } else if (key == "dedup") {
        cfg.dedup.planes = v.value("planes", cfg.dedup.planes);
        cfg.dedup.threshold = v.value("threshold", cfg.dedup.threshold);
      } else if (key == "arms") {
        cfg.arms.clear();
        for (const auto& a : v) cfg.arms.push_back(parse_arm(a.get<std::string>()));
      } else if (key == "transfer_layer") {
        cfg.transfer_layer = parse_feature_layer(v.get<std::string>());
      } else {
        throw DataError("unknown config section '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad config: ") + e.what());
  }
  if (cfg.bovw.k < 1 || cfg.bovw.grid_step < 1 || cfg.bovw.patch < 4 || cfg.bovw.max_iters < 1) {
    throw DataError("bovw parameters out of range");
  }
  if (cfg.dedup.planes < 1 || cfg.dedup.threshold < 0) throw DataError("dedup parameters out of range");
  cfg.logreg.validate();
  cfg.convnet.validate();
  cfg.boost.validate();
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json paths{{"manifest", opt_path(cfg.paths.manifest)},
             {"features", opt_path(cfg.paths.features)},
             {"patterns", opt_path(cfg.paths.patterns)},
             {"model", opt_path(cfg.paths.model)},
             {"external_model", opt_path(cfg.paths.external_model)},
             {"out_dir", opt_path(cfg.paths.out_dir)}};
  json lex = json::object();
  for (const auto& [cat, p] : cfg.paths.lexicons) lex[cat] = p.generic_string();
  paths["lexicons"] = lex;
  json arms = json::array();
  for (Arm a : cfg.arms) arms.push_back(std::string(to_string(a)));
  return {{"seed", cfg.seed},
          {"paths", paths},
          {"learner", std::string(to_string(cfg.learner))},
          {"logreg", train_config_to_json(cfg.logreg)},
          {"convnet", train_config_to_json(cfg.convnet)},
          {"convnet_spec", spec_to_json(cfg.convnet_spec)},
          {"boost", boost_config_to_json(cfg.boost)},
          {"shift", shift_spec_to_json(cfg.shift)},
          {"bovw", {{"k", cfg.bovw.k}, {"grid_step", cfg.bovw.grid_step}, {"patch", cfg.bovw.patch},
                    {"max_iters", cfg.bovw.max_iters}}},
          {"dedup", {{"planes", cfg.dedup.planes}, {"threshold", cfg.dedup.threshold}}},
          {"arms", arms},
          {"transfer_layer", std::string(to_string(cfg.transfer_layer))}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw DataError("config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

}  // namespace imgcred
