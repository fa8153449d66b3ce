#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "imgcred/data_model.hpp"
#include "imgcred/error.hpp"
#include "imgcred/evaluation.hpp"
#include "imgcred/logreg.hpp"
#include "imgcred/model.hpp"
#include "imgcred/pattern_mining.hpp"
#include "imgcred/pipeline.hpp"
#include "imgcred/run_config.hpp"
#include "imgcred/transfer_boost.hpp"

namespace py = pybind11;
using namespace imgcred;
using json = nlohmann::json;

namespace {

using ImageArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// H x W or H x W x C array in [0, 1].
ImageTensor to_image(const ImageArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("image must be H x W or H x W x C");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  ImageTensor img(h, w, c);
  std::copy(a.data(), a.data() + a.size(), img.values.begin());
  return img;
}

RunConfig config_from(const std::string& cfg_json) {
  return run_config_from_json(cfg_json.empty() ? json::object() : json::parse(cfg_json));
}

std::string synth(const std::string& spec_json) {
  const auto spec = shift_spec_from_json(spec_json.empty() ? json::object() : json::parse(spec_json));
  auto res = synth_shift(spec);
  json out;
  out["manifest"] = render_manifest(res.data);
  out["flipped"] = res.flipped;
  return out.dump();
}

py::list rank(const std::vector<std::pair<std::vector<std::string>, int>>& docs, int max_n, const std::string& method,
              int top_k, int min_df) {
  std::vector<TokenizedDoc> corpus;
  for (std::size_t i = 0; i < docs.size(); ++i) corpus.push_back({std::to_string(i), docs[i].first, docs[i].second});
  const auto list = rank_patterns(corpus, max_n, parse_rank_method(method), top_k, min_df);
  py::list out;
  for (const auto& s : list.scores) {
    py::dict d;
    d["ngram"] = join_ngram(s.ngram);
    d["tf"] = s.tf;
    d["chi2"] = s.chi2;
    d["gain_ratio"] = s.gain_ratio;
    d["counts"] = py::make_tuple(s.counts.a, s.counts.b, s.counts.c, s.counts.d);
    out.append(d);
  }
  return out;
}

std::vector<std::string> weak(const std::vector<std::pair<std::string, std::string>>& texts,
                              const std::vector<std::string>& patterns) {
  PatternList list;
  for (const auto& p : patterns) list.patterns.push_back(tokenize(p));
  std::vector<std::pair<std::string, Tokens>> tok;
  for (const auto& [id, text] : texts) tok.emplace_back(id, tokenize(text));
  std::vector<std::string> ids;
  for (const auto& w : weak_label(tok, list)) ids.push_back(w.id);
  return ids;
}

std::vector<std::size_t> dedup_images(const std::vector<ImageArray>& arrays, int planes, int threshold,
                                      std::uint64_t seed) {
  std::vector<ImageTensor> images;
  for (const auto& a : arrays) images.push_back(to_image(a));
  return dedup(images, planes, threshold, seed);
}

std::vector<int> signature(const ImageArray& a, int planes, std::uint64_t seed) {
  const auto sig = lsh_signature(to_image(a), planes, seed);
  std::vector<int> bits;
  for (std::size_t i = 0; i < sig.size(); ++i) bits.push_back(sig.test(i) ? 1 : 0);
  return bits;
}

std::string metrics(const std::vector<int>& pred, const std::vector<int>& labels) {
  return metrics_to_json(compute_metrics(pred, labels)).dump();
}

std::pair<std::string, std::string> split_manifest(const std::string& manifest, int train, int test,
                                                   std::uint64_t seed) {
  const auto [a, b] = split(parse_manifest(manifest), {train, test}, seed);
  return {render_manifest(a), render_manifest(b)};
}

std::pair<std::vector<double>, double> train_logreg(const FeatureMatrix& X, const std::vector<int>& y,
                                                    const std::vector<double>& w, const std::string& cfg_json) {
  const auto cfg = cfg_json.empty() ? logreg_defaults()
                                    : train_config_from_json(json::parse(cfg_json), logreg_defaults());
  const auto m = train_weighted_logreg(X, y, w, cfg);
  return {m.weights, m.bias};
}

ComparisonConfig comparison_from(const RunConfig& cfg) {
  ComparisonConfig c;
  c.arms = cfg.arms;
  c.learner = cfg.learner;
  c.settings = cfg.learner_settings();
  c.boost = cfg.boost;
  c.bovw = cfg.bovw;
  c.transfer_layer = cfg.transfer_layer;
  c.seed = cfg.seed;
  return c;
}

std::string compare(const std::string& manifest, const std::string& cfg_json) {
  const auto cfg = config_from(cfg_json);
  const auto data = prepare(parse_manifest(manifest), PrepareOptions{false, std::nullopt, nullptr});
  const auto res = run_comparison(data, comparison_from(cfg));
  json out;
  out["reports"] = metrics_to_json(res.reports);
  out["boost_log"] = json::array();
  for (const auto& l : res.boost_log) out["boost_log"].push_back(iteration_log_to_json(l));
  return out.dump();
}

std::string iterative(const std::string& manifest, const std::string& cfg_json) {
  const auto cfg = config_from(cfg_json);
  const auto data = prepare(parse_manifest(manifest), PrepareOptions{false, std::nullopt, nullptr});
  const auto res = iterative_transfer(data, comparison_from(cfg));
  json out;
  out["ensemble"] = ensemble_to_json(res.ensemble);
  out["halted_early"] = res.halted_early;
  out["log"] = json::array();
  for (const auto& l : res.log) out["log"].push_back(iteration_log_to_json(l));
  return out.dump();
}

py::dict betas(double epsilon, std::size_t n, int iterations) {
  BoostConfig cfg;
  cfg.iterations = iterations;
  const auto b = compute_betas(epsilon, n, iterations, cfg);
  py::dict d;
  d["beta_t"] = b.beta_t;
  d["beta"] = b.beta;
  d["epsilon"] = b.epsilon;
  d["halt"] = b.halt;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "imgcred native core";
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("tokenize", [](const std::string& s) { return tokenize(s); }, py::arg("text"));
  m.def("synth", &synth, py::arg("spec_json") = "");
  m.def("rank_patterns", &rank, py::arg("docs"), py::arg("max_n") = 3, py::arg("method") = "chi2",
        py::arg("top_k") = 10, py::arg("min_df") = 1);
  m.def("weak_label", &weak, py::arg("texts"), py::arg("patterns"));
  m.def("lsh_signature", &signature, py::arg("image"), py::arg("planes") = kDefaultLshPlanes, py::arg("seed") = 0);
  m.def("dedup", &dedup_images, py::arg("images"), py::arg("planes") = kDefaultLshPlanes, py::arg("threshold") = 0,
        py::arg("seed") = 0);
  m.def("compute_metrics", &metrics, py::arg("predictions"), py::arg("labels"));
  m.def("split_manifest", &split_manifest, py::arg("manifest"), py::arg("train") = 9, py::arg("test") = 1,
        py::arg("seed") = 0);
  m.def("train_logreg", &train_logreg, py::arg("X"), py::arg("y"), py::arg("w"), py::arg("config_json") = "");
  m.def("run_comparison", &compare, py::arg("manifest"), py::arg("config_json") = "");
  m.def("iterative_transfer", &iterative, py::arg("manifest"), py::arg("config_json") = "");
  m.def("compute_betas", &betas, py::arg("epsilon"), py::arg("n"), py::arg("iterations"));
}
