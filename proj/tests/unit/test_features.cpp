#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "imgcred/error.hpp"
#include "imgcred/features.hpp"
#include "imgcred/rng.hpp"

using namespace imgcred;

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

ImageTensor ramp(int size, bool horizontal) {
  ImageTensor img(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img.at(y, x, 0) = (horizontal ? x : y) / (size - 1.0);
  return img;
}

}  // namespace

TEST_CASE("text features counted by hand") {
  const auto f = text_features("I love this!! Is it FAKE? @bob #news http://t.co/x", Lexicons::defaults());
  CHECK(f.get("exclamation_count") == 2);
  CHECK(f.get("question_count") == 1);
  CHECK(f.get("positive_word_count") == 1);
  CHECK(f.get("negative_word_count") == 1);
  CHECK(f.get("sentiment_score") == 0);
  // i love this is it fake @bob #news <url>
  CHECK(f.get("word_count") == 9);
  CHECK(f.get("char_count") == 42);
  CHECK(f.get("first_person_count") == 1);
  CHECK(f.get("second_person_count") == 0);
  CHECK(f.get("third_person_count") == 1);
  CHECK(f.get("url_count") == 1);
  CHECK(f.get("mention_count") == 1);
  CHECK(f.get("hashtag_count") == 1);
  CHECK(f.to_vector().size() == kTextFeatureCount);
  CHECK_THROWS_AS(f.get("nope"), ShapeError);

  const auto g = text_features("good good bad", Lexicons::defaults());
  CHECK(g.get("sentiment_score") == doctest::Approx(1.0 / 3.0));
  CHECK(text_features("", Lexicons::defaults()).get("word_count") == 0);
}

TEST_CASE("multi-word gazetteer entries match contiguous runs") {
  Lexicons lex = Lexicons::defaults();
  lex.locations = {"new york"};
  lex.organizations = {"red cross"};
  const auto f = text_features("New York, new york! the Red  Cross; york new", lex);
  CHECK(f.get("location_count") == 2);
  CHECK(f.get("organization_count") == 1);
}

TEST_CASE("lexicon files override one category") {
  const auto dir = std::filesystem::temp_directory_path() / "imgcred_lex_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "people.txt") << "Alice\n\n  bob smith \r\n";
  }
  const auto lex = Lexicons::load({{"people", dir / "people.txt"}});
  CHECK(lex.people == std::vector<std::string>{"alice", "bob smith"});
  CHECK(lex.positive == Lexicons::defaults().positive);
  CHECK_THROWS_AS(Lexicons::load({{"colours", dir / "people.txt"}}), DataError);
  CHECK_THROWS_AS(Lexicons::load({{"people", dir / "missing.txt"}}), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("descriptors: grid count, unit norm, orientation bins") {
  const auto h = ramp(32, true);
  const auto d = extract_descriptors(h, 8, 16);
  CHECK(d.size() == 9);
  for (const auto& v : d) {
    REQUIRE(v.size() == static_cast<std::size_t>(kDescriptorDim));
    CHECK(norm2(v) == doctest::Approx(1.0));
    for (int i = 0; i < kDescriptorDim; ++i) {
      if (i % kDescriptorBins != 0) CHECK(v[i] == 0.0);
    }
  }
  // Gradient pointing down the rows: angle pi/2, bin 2 of 8.
  for (const auto& v : extract_descriptors(ramp(32, false), 8, 16)) {
    for (int i = 0; i < kDescriptorDim; ++i) {
      if (i % kDescriptorBins != 2) CHECK(v[i] == 0.0);
    }
  }
  // Flat image has no gradient.
  for (const auto& v : extract_descriptors(ImageTensor(20, 20, 1, 0.5), 4, 8)) CHECK(norm2(v) == 0.0);
  CHECK(extract_descriptors(ImageTensor(8, 8, 1), 4, 16).empty());
  CHECK_THROWS_AS(extract_descriptors(h, 0, 16), ShapeError);
}

TEST_CASE("k-means recovers separated clusters and never increases its objective") {
  Rng rng(4);
  const std::vector<std::array<double, 2>> centres{{0, 0}, {10, 0}, {0, 10}};
  std::vector<Descriptor> pts;
  for (int i = 0; i < 300; ++i) {
    const auto& c = centres[i % 3];
    pts.push_back({c[0] + 0.3 * rng.normal(), c[1] + 0.3 * rng.normal()});
  }
  const auto r = build_vocabulary(pts, 3, 11, 50);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
    CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] + 1e-9);
  }
  for (const auto& c : centres) {
    const std::vector<double> cv{c[0], c[1]};
    const auto& got = r.vocab.centroids[nearest_centroid(cv, r.vocab)];
    CHECK(std::hypot(got[0] - c[0], got[1] - c[1]) < 0.2);
  }
  const auto again = build_vocabulary(pts, 3, 11, 50);
  CHECK(again.vocab.centroids == r.vocab.centroids);

  CHECK_THROWS_AS(build_vocabulary(std::span<const Descriptor>(pts.data(), 2), 3, 1, 10), DataError);
  const std::vector<Descriptor> same(5, Descriptor{1.0, 1.0});
  CHECK_THROWS_AS(build_vocabulary(same, 2, 1, 10), DataError);
  CHECK_THROWS_AS(build_vocabulary(pts, 0, 1, 10), ShapeError);
}

TEST_CASE("nearest centroid ties go to the lowest index") {
  Vocabulary v{2, 1, {{-1.0}, {1.0}}};
  const std::vector<double> zero{0.0};
  CHECK(nearest_centroid(zero, v) == 0);
  const std::vector<double> wrong{0.0, 0.0};
  CHECK_THROWS_AS(nearest_centroid(wrong, v), ShapeError);
}

TEST_CASE("BoVW histogram is L1-normalised") {
  Vocabulary v{3, 1, {{0.0}, {5.0}, {10.0}}};
  const std::vector<Descriptor> d{{0.1}, {4.0}, {6.0}, {9.0}};
  const auto h = bovw_histogram(d, v);
  CHECK(h == std::vector<double>{0.25, 0.5, 0.25});
  CHECK(bovw_histogram(std::span<const Descriptor>{}, v) == std::vector<double>(3, 0.0));
}

TEST_CASE("vocabulary and feature CSV round-trip exactly") {
  Rng rng(8);
  Vocabulary v{2, 3, {}};
  for (int c = 0; c < 2; ++c) v.centroids.push_back({rng.normal(), rng.normal(), rng.normal()});
  const auto vb = parse_vocabulary(render_vocabulary(v));
  CHECK(vb.centroids == v.centroids);
  CHECK_THROWS_AS(parse_vocabulary(R"({"k":2,"descriptor_dim":1,"centroids":[[1]]})"), DataError);

  FeatureTable t;
  t.columns = {"f0", "f1"};
  t.ids = {"a", "b"};
  t.rows = {{rng.normal(), 1e-300}, {-0.1, 12345.678}};
  const auto tb = parse_feature_csv(render_feature_csv(t));
  CHECK(tb.columns == t.columns);
  CHECK(tb.ids == t.ids);
  CHECK(tb.rows == t.rows);
  CHECK_THROWS_AS(parse_feature_csv("x,f0\na,1\n"), DataError);
  CHECK_THROWS_AS(parse_feature_csv("id,f0\na,1,2\n"), DataError);
  CHECK_THROWS_AS(parse_feature_csv("id,f0\na,zz\n"), DataError);
}
