#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imgcred/data_model.hpp"

namespace imgcred {

// Word lists for the text features. Multi-word entries are matched as
// contiguous token runs.
struct Lexicons {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::string> first_person;
  std::vector<std::string> second_person;
  std::vector<std::string> third_person;
  std::vector<std::string> people;
  std::vector<std::string> locations;
  std::vector<std::string> organizations;

  // Small English sentiment and pronoun lists; gazetteers empty.
  static Lexicons defaults();
  // category -> file path, one entry per line; unnamed categories keep defaults.
  static Lexicons load(const std::map<std::string, std::filesystem::path>& files);
};

inline constexpr std::size_t kTextFeatureCount = 16;

struct TextFeatureVector {
  static constexpr std::array<std::string_view, kTextFeatureCount> names = {
      "exclamation_count",   "question_count",     "positive_word_count", "negative_word_count",
      "sentiment_score",     "word_count",         "char_count",          "first_person_count",
      "second_person_count", "third_person_count", "people_count",        "location_count",
      "organization_count",  "url_count",          "mention_count",       "hashtag_count"};

  std::array<double, kTextFeatureCount> values{};

  double get(std::string_view name) const;
  std::vector<double> to_vector() const { return {values.begin(), values.end()}; }
};

TextFeatureVector text_features(std::string_view text, const Lexicons& lexicons);

inline constexpr int kDescriptorCells = 4;
inline constexpr int kDescriptorBins = 8;
inline constexpr int kDescriptorDim = kDescriptorCells * kDescriptorCells * kDescriptorBins;

using Descriptor = std::vector<double>;

// Dense SIFT-like descriptors: 4x4 cells x 8 orientation bins per patch,
// L2-normalised, clipped at 0.2, renormalised.
std::vector<Descriptor> extract_descriptors(const ImageTensor& img, int grid_step, int patch);

struct Vocabulary {
  int k = 0;
  int descriptor_dim = 0;
  std::vector<std::vector<double>> centroids;
};

struct KMeansResult {
  Vocabulary vocab;
  std::vector<double> objective_trace;  // sum of squared distances after each Lloyd step
  int iterations = 0;
};

// Seeded k-means++ followed by Lloyd iterations.
KMeansResult build_vocabulary(std::span<const Descriptor> descriptors, int k, std::uint64_t seed,
                              int max_iters);

// Nearest centroid by Euclidean distance, ties to the lowest index.
std::size_t nearest_centroid(std::span<const double> x, const Vocabulary& vocab);

// L1-normalised word histogram; zero vector for empty input.
std::vector<double> bovw_histogram(std::span<const Descriptor> descriptors, const Vocabulary& vocab);

std::string render_vocabulary(const Vocabulary& vocab);
Vocabulary parse_vocabulary(std::string_view content);

// CSV with header "id,<name>,..."; rows keyed by instance id.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
};
std::string render_feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(std::string_view content);
FeatureTable load_feature_csv(const std::filesystem::path& path);

}  // namespace imgcred
