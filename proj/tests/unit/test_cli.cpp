#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <iostream>

#include "cli_pipeline.hpp"
#include "imgcred/cli.hpp"

using namespace imgcred;
using namespace imgcred::testing;

namespace {

// Captures std::cerr for the lifetime of the object.
class CaptureErr {
 public:
  CaptureErr() : old_(std::cerr.rdbuf(buf_.rdbuf())) {}
  ~CaptureErr() { std::cerr.rdbuf(old_); }
  std::string text() const { return buf_.str(); }

 private:
  std::ostringstream buf_;
  std::streambuf* old_;
};

const std::vector<std::string> kCommands{"synth",    "dedup", "mine-patterns",    "weak-label",
                                         "featurize", "train", "fine-tune",        "extract-features",
                                         "transfer-boost", "evaluate", "compare"};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("imgcred_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CaptureErr err;
  CHECK(run_cli({}) == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}) == cli::kExitUsage);
  CHECK(run_cli({"synth", "--bogus", "--out", "x"}) == cli::kExitUsage);
  CHECK(run_cli({"synth"}) == cli::kExitUsage);
  CHECK(run_cli({"mine-patterns", "--corpus", "/nonexistent", "--out", "p.json"}) == cli::kExitUsage);
  CHECK(err.text().find("--out") != std::string::npos);
}

TEST_CASE("--help on every subcommand exits 0 and lists its flags") {
  for (const auto& c : kCommands) {
    CaptureErr err;
    CHECK_MESSAGE(run_cli({c, "--help"}) == cli::kExitOk, c);
    const auto text = err.text();
    CHECK_MESSAGE(text.find("--out") != std::string::npos, c);
    CHECK_MESSAGE(text.find("--seed") != std::string::npos, c);
    CHECK_MESSAGE(text.find("--config") != std::string::npos, c);
  }
  CaptureErr err;
  CHECK(run_cli({"--help"}) == cli::kExitOk);
  for (const auto& c : kCommands) CHECK(err.text().find(c) != std::string::npos);
}

TEST_CASE("data errors exit 2 and name the bad line") {
  const auto dir = scratch("errors");
  InDir here(dir);
  write_text("bad.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"domain\":\"auxiliary\"}\n{oops\n");
  CaptureErr err;
  CHECK(run_cli({"transfer-boost", "--manifest", "bad.jsonl", "--iterations", "5", "--init", "finetune", "--out",
                 "ens.json"}) == cli::kExitData);
  CHECK(err.text().find("line 2") != std::string::npos);
  CHECK(run_cli({"train", "logreg", "--out", "m.json"}) == cli::kExitData);
  write_text("cfg.json", R"({"unknown_section": 1})");
  CHECK(run_cli({"synth", "--config", "cfg.json", "--out", "d"}) == cli::kExitData);
  write_text("spec.json", R"({"aux_label_noise_rate": 0.7})");
  CHECK(run_cli({"synth", "--spec", "spec.json", "--out", "d2"}) == cli::kExitData);
}

TEST_CASE("an existing lockfile blocks a second run on the same directory") {
  const auto dir = scratch("lock");
  InDir here(dir);
  fs::create_directories("out");
  write_text("out/.imgcred.lock", "");
  CaptureErr err;
  CHECK(run_cli({"synth", "--out", "out"}) == cli::kExitData);
  CHECK(err.text().find("in use") != std::string::npos);
  fs::remove("out/.imgcred.lock");
  write_text("spec.json", R"({"dim": 4, "aux_size": 20, "target_train_size": 10, "test_size": 10})");
  CHECK(run_cli({"synth", "--spec", "spec.json", "--out", "out"}) == cli::kExitOk);
  CHECK(!fs::exists("out/.imgcred.lock"));
  CHECK(fs::exists("out/manifest.jsonl"));
  CHECK(fs::exists("out/synth.effective_config.json"));
}

TEST_CASE("flags override the config file") {
  const auto dir = scratch("precedence");
  InDir here(dir);
  write_text("cfg.json", R"({"seed": 1, "shift": {"dim": 4, "aux_size": 20, "target_train_size": 10, "test_size": 10}})");
  CHECK(run_cli({"synth", "--config", "cfg.json", "--out", "a"}) == cli::kExitOk);
  CHECK(run_cli({"synth", "--config", "cfg.json", "--seed", "2", "--out", "b"}) == cli::kExitOk);
  CHECK(read_text("a/manifest.jsonl") != read_text("b/manifest.jsonl"));
  const auto echo = read_text("b/synth.effective_config.json");
  CHECK(echo.find("\"seed\": 2") != std::string::npos);
}

TEST_CASE("full pipeline succeeds and is byte-for-byte reproducible") {
  const auto root = scratch("pipeline");
  CaptureErr err;
  const auto first = run_pipeline(root / "run1");
  const auto second = run_pipeline(root / "run2");
  for (const auto& s : first) CHECK_MESSAGE(s.code == cli::kExitOk, s.command);
  const auto a = snapshot(root / "run1");
  const auto b = snapshot(root / "run2");
  CHECK(a.size() == b.size());
  for (const auto& [path, bytes] : a) {
    const auto it = b.find(path);
    REQUIRE_MESSAGE(it != b.end(), path);
    CHECK_MESSAGE(it->second == bytes, path);
  }
  CHECK(a.count("cmp/metrics.json") == 1);
  CHECK(a.count("cmp/layers.json") == 1);
  CHECK(a.count("boost/log.jsonl") == 1);
  CHECK(a.at("wl/posts.jsonl").find("\"label\":1") != std::string::npos);
  fs::remove_all(root);
}
