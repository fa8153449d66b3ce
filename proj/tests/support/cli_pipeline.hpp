#pragma once

// Runs every CLI subcommand once inside a working directory, with small
// inputs written there first. Paths are relative so two directories can be
// compared file by file.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imgcred/cli.hpp"

namespace imgcred::testing {

namespace fs = std::filesystem;

inline int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "imgcred");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// Scoped working-directory change.
class InDir {
 public:
  explicit InDir(const fs::path& dir) : old_(fs::current_path()) { fs::current_path(dir); }
  ~InDir() { fs::current_path(old_); }
  InDir(const InDir&) = delete;
  InDir& operator=(const InDir&) = delete;

 private:
  fs::path old_;
};

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> bytes for every regular file under `root`.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
  }
  return out;
}

inline void write_inputs() {
  write_text("cfg.json", R"({"seed": 5,
 "convnet": {"learning_rate_schedule": [{"rate": 0.01, "epochs": 1}], "batch_size": 16},
 "bovw": {"k": 8, "grid_step": 8, "patch": 16, "max_iters": 10},
 "boost": {"iterations": 3}})");
  write_text("spec.json",
             R"({"dim": 10, "separation": 3.0, "aux_size": 200, "target_train_size": 40, "test_size": 60})");
  std::string corpus, posts;
  const char* fillers[] = {"news", "today", "photo", "city", "people", "look", "wow", "storm"};
  for (int i = 0; i < 40; ++i) {
    const bool fake = i % 2 == 0;
    std::string text = std::string(fillers[i % 8]) + " " + fillers[(i * 3) % 8];
    if (fake && i % 4 == 0) text += " is it real";
    if (fake) text += " fake?";
    corpus += R"({"id":"c)" + std::to_string(i) + R"(","text":")" + text + R"(","label":)" + (fake ? "1" : "0") + "}\n";
    const std::string domain = i < 20 ? "auxiliary" : (i < 32 ? "target_train" : "target_test");
    const std::string label = i < 20 ? "null" : (fake ? "1" : "0");
    posts += R"({"id":"p)" + std::to_string(i) + R"(","text":")" + text + R"(!","label":)" + label +
             R"(,"domain":")" + domain + "\"}\n";
  }
  write_text("corpus.jsonl", corpus);
  write_text("posts.jsonl", posts);
}

struct StepResult {
  std::string command;
  int code = 0;
};

// The full pipeline; every step must exit 0.
inline std::vector<StepResult> run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  InDir here(dir);
  write_inputs();
  std::vector<StepResult> out;
  const auto step = [&](const std::string& name, std::vector<std::string> args) {
    args.insert(args.begin(), name);
    out.push_back({name, run_cli(args)});
  };
  const std::vector<std::string> cfg{"--config", "cfg.json"};
  const auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), cfg.begin(), cfg.end());
    return a;
  };
  step("synth", with({"--spec", "spec.json", "--render-images", "--out", "data"}));
  fs::create_directories("dd");
  step("dedup", with({"--manifest", "data/manifest.jsonl", "--out", "dd/manifest.jsonl"}));
  fs::create_directories("pat");
  step("mine-patterns", with({"--corpus", "corpus.jsonl", "--top-k", "10", "--out", "pat/patterns.json"}));
  fs::create_directories("wl");
  step("weak-label", with({"--manifest", "posts.jsonl", "--patterns", "pat/patterns.json", "--out", "wl/posts.jsonl"}));
  fs::create_directories("feat");
  step("featurize", with({"text", "--manifest", "wl/posts.jsonl", "--out", "feat/text.csv"}));
  fs::create_directories("bovw");
  step("featurize", with({"bovw", "--manifest", "data/manifest.jsonl", "--vocab-out", "bovw/vocab.json", "--out",
                          "bovw/bovw.csv"}));
  fs::create_directories("models");
  step("train", with({"logreg", "--manifest", "data/manifest.jsonl", "--out", "models/lr.json"}));
  fs::create_directories("cnn");
  step("train", with({"convnet", "--manifest", "data/manifest.jsonl", "--domains", "auxiliary", "--out", "cnn/net.json"}));
  fs::create_directories("ft");
  step("fine-tune", with({"--manifest", "data/manifest.jsonl", "--model", "cnn/net.json", "--out", "ft/net.json"}));
  fs::create_directories("fx");
  step("extract-features",
       with({"--manifest", "data/manifest.jsonl", "--model", "cnn/net.json", "--layer", "FC6", "--out", "fx/fc6.csv"}));
  fs::create_directories("boost");
  step("transfer-boost", with({"--manifest", "data/manifest.jsonl", "--iterations", "3", "--init", "finetune", "--log",
                               "boost/log.jsonl", "--out", "boost/ensemble.json"}));
  fs::create_directories("eval");
  step("evaluate", with({"--manifest", "data/manifest.jsonl", "--model", "boost/ensemble.json", "--table",
                         "eval/table.txt", "--out", "eval/metrics.json"}));
  step("compare", with({"--manifest", "data/manifest.jsonl", "--network", "cnn/net.json", "--layers",
                        "C5_pooled,FC6", "--out", "cmp"}));
  return out;
}

}  // namespace imgcred::testing
