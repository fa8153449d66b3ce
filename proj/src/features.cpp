#include "imgcred/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "imgcred/error.hpp"
#include "imgcred/pattern_mining.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

using nlohmann::json;

Lexicons Lexicons::defaults() {
  Lexicons lex;
  lex.positive = {"good", "great", "happy", "love", "nice", "excellent", "wonderful", "best",
                  "beautiful", "safe", "thanks", "glad", "amazing", "hope", "win"};
  lex.negative = {"bad", "terrible", "sad", "hate", "awful", "worst", "horrible", "fear",
                  "angry", "dead", "death", "killed", "injured", "fake", "rumor", "false",
                  "shocking", "disaster", "accident", "scary"};
  lex.first_person = {"i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves"};
  lex.second_person = {"you", "your", "yours", "yourself", "yourselves"};
  lex.third_person = {"he", "him", "his", "himself", "she", "her", "hers", "herself", "it",
                      "its", "itself", "they", "them", "their", "theirs", "themselves"};
  return lex;
}

namespace {

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    std::string entry = line.substr(first, last - first + 1);
    for (auto& ch : entry) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(std::move(entry));
  }
  return out;
}

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && std::ispunct(static_cast<unsigned char>(t[0]));
}

// Non-overlapping-agnostic count: every start position matching the entry.
std::size_t count_entries(const Tokens& words, const std::vector<std::string>& entries) {
  std::size_t total = 0;
  for (const auto& entry : entries) {
    const auto pat = tokenize(entry);
    if (pat.empty() || pat.size() > words.size()) continue;
    for (std::size_t i = 0; i + pat.size() <= words.size(); ++i) {
      if (std::equal(pat.begin(), pat.end(), words.begin() + i)) ++total;
    }
  }
  return total;
}

std::size_t count_substr(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

Lexicons Lexicons::load(const std::map<std::string, std::filesystem::path>& files) {
  Lexicons lex = defaults();
  for (const auto& [category, path] : files) {
    auto words = read_word_list(path);
    if (category == "positive") lex.positive = std::move(words);
    else if (category == "negative") lex.negative = std::move(words);
    else if (category == "first_person") lex.first_person = std::move(words);
    else if (category == "second_person") lex.second_person = std::move(words);
    else if (category == "third_person") lex.third_person = std::move(words);
    else if (category == "people") lex.people = std::move(words);
    else if (category == "locations") lex.locations = std::move(words);
    else if (category == "organizations") lex.organizations = std::move(words);
    else throw DataError("unknown lexicon category '" + category + "'");
  }
  return lex;
}

double TextFeatureVector::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw ShapeError("unknown text feature '" + std::string(name) + "'");
}

TextFeatureVector text_features(std::string_view text, const Lexicons& lex) {
  TextFeatureVector f;
  auto& v = f.values;
  v[0] = static_cast<double>(count_substr(text, "!") + count_substr(text, "\xEF\xBC\x81"));
  v[1] = static_cast<double>(count_substr(text, "?") + count_substr(text, "\xEF\xBC\x9F"));

  Tokens words;
  for (auto& t : tokenize(text)) {
    if (!is_punct_token(t)) words.push_back(std::move(t));
  }
  const auto pos = static_cast<double>(count_entries(words, lex.positive));
  const auto neg = static_cast<double>(count_entries(words, lex.negative));
  v[2] = pos;
  v[3] = neg;
  v[4] = pos + neg > 0 ? (pos - neg) / (pos + neg) : 0.0;
  v[5] = static_cast<double>(words.size());

  std::size_t chars = 0;
  for (unsigned char ch : text) {
    if ((ch & 0xC0) != 0x80 && !std::isspace(ch)) ++chars;
  }
  v[6] = static_cast<double>(chars);
  v[7] = static_cast<double>(count_entries(words, lex.first_person));
  v[8] = static_cast<double>(count_entries(words, lex.second_person));
  v[9] = static_cast<double>(count_entries(words, lex.third_person));
  v[10] = static_cast<double>(count_entries(words, lex.people));
  v[11] = static_cast<double>(count_entries(words, lex.locations));
  v[12] = static_cast<double>(count_entries(words, lex.organizations));

  std::istringstream raw{std::string(text)};
  std::string chunk;
  while (raw >> chunk) {
    if (chunk.starts_with("http")) v[13] += 1;
    if (chunk.starts_with("@")) v[14] += 1;
    if (chunk.starts_with("#")) v[15] += 1;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Descriptors

std::vector<Descriptor> extract_descriptors(const ImageTensor& img, int grid_step, int patch) {
  if (grid_step < 1 || patch < kDescriptorCells) throw ShapeError("invalid descriptor grid");
  const auto gray = to_grayscale(img);
  const int h = gray.height, w = gray.width;
  std::vector<Descriptor> out;
  if (patch > h || patch > w) return out;

  std::vector<double> mag(static_cast<std::size_t>(h) * w), ori(mag.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (gray.at(y, std::min(x + 1, w - 1), 0) - gray.at(y, std::max(x - 1, 0), 0));
      const double gy = 0.5 * (gray.at(std::min(y + 1, h - 1), x, 0) - gray.at(std::max(y - 1, 0), x, 0));
      const auto idx = static_cast<std::size_t>(y) * w + x;
      mag[idx] = std::hypot(gx, gy);
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      ori[idx] = theta;
    }
  }

  const double bin_width = 2.0 * std::numbers::pi / kDescriptorBins;
  for (int y0 = 0; y0 + patch <= h; y0 += grid_step) {
    for (int x0 = 0; x0 + patch <= w; x0 += grid_step) {
      Descriptor d(kDescriptorDim, 0.0);
      for (int py = 0; py < patch; ++py) {
        const int cy = py * kDescriptorCells / patch;
        for (int px = 0; px < patch; ++px) {
          const int cx = px * kDescriptorCells / patch;
          const auto idx = static_cast<std::size_t>(y0 + py) * w + (x0 + px);
          if (mag[idx] == 0.0) continue;
          const int bin = static_cast<int>(std::floor(ori[idx] / bin_width)) % kDescriptorBins;
          d[(cy * kDescriptorCells + cx) * kDescriptorBins + bin] += mag[idx];
        }
      }
      const auto normalize = [&d] {
        double n2 = 0.0;
        for (double x : d) n2 += x * x;
        if (n2 <= 0.0) return;
        const double inv = 1.0 / std::sqrt(n2);
        for (double& x : d) x *= inv;
      };
      normalize();
      for (double& x : d) x = std::min(x, 0.2);
      normalize();
      out.push_back(std::move(d));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(std::span<const double> x, const std::vector<std::vector<double>>& centroids,
                    double* best_dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

}  // namespace

std::size_t nearest_centroid(std::span<const double> x, const Vocabulary& vocab) {
  if (x.size() != static_cast<std::size_t>(vocab.descriptor_dim)) {
    throw ShapeError("descriptor dimension does not match vocabulary");
  }
  return nearest(x, vocab.centroids);
}

KMeansResult build_vocabulary(std::span<const Descriptor> descriptors, int k, std::uint64_t seed,
                              int max_iters) {
  if (k < 1) throw ShapeError("vocabulary size must be positive");
  if (descriptors.size() < static_cast<std::size_t>(k)) {
    throw DataError("fewer descriptors (" + std::to_string(descriptors.size()) +
                    ") than vocabulary size " + std::to_string(k));
  }
  const std::size_t dim = descriptors[0].size();
  for (const auto& d : descriptors) {
    if (d.size() != dim) throw ShapeError("descriptors have inconsistent dimension");
  }
  const std::size_t n = descriptors.size();
  Rng rng(seed);

  // k-means++ seeding
  std::vector<std::vector<double>> centroids;
  centroids.push_back(descriptors[rng.below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(descriptors[i], centroids[0]);
  while (centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 0.0) throw DataError("fewer distinct descriptors than vocabulary size");
    const double target = rng.uniform() * total;
    double run = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      run += d2[i];
      pick = i;
      if (run > target) break;
    }
    centroids.push_back(descriptors[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(descriptors[i], centroids.back()));
  }

  KMeansResult result;
  std::vector<std::size_t> assign(n, static_cast<std::size_t>(-1));
  std::vector<double> dist(n);
  for (int iter = 0;; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = nearest(descriptors[i], centroids, &dist[i]);
      objective += dist[i];
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    result.objective_trace.push_back(objective);
    result.iterations = iter;
    if (!changed || iter >= max_iters) break;

    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += descriptors[i][j];
    }
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point worst served by its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!used[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      used[far] = true;
      centroids[c] = descriptors[far];
    }
  }
  result.vocab.k = k;
  result.vocab.descriptor_dim = static_cast<int>(dim);
  result.vocab.centroids = std::move(centroids);
  return result;
}

std::vector<double> bovw_histogram(std::span<const Descriptor> descriptors, const Vocabulary& vocab) {
  std::vector<double> hist(static_cast<std::size_t>(vocab.k), 0.0);
  for (const auto& d : descriptors) hist[nearest_centroid(d, vocab)] += 1.0;
  if (!descriptors.empty()) {
    const double inv = 1.0 / static_cast<double>(descriptors.size());
    for (double& h : hist) h *= inv;
  }
  return hist;
}

std::string render_vocabulary(const Vocabulary& vocab) {
  json j;
  j["k"] = vocab.k;
  j["descriptor_dim"] = vocab.descriptor_dim;
  j["centroids"] = vocab.centroids;
  return j.dump() + "\n";
}

Vocabulary parse_vocabulary(std::string_view content) {
  try {
    const auto j = json::parse(content);
    Vocabulary v;
    v.k = j.at("k").get<int>();
    v.descriptor_dim = j.at("descriptor_dim").get<int>();
    v.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    if (v.centroids.size() != static_cast<std::size_t>(v.k)) throw DataError("centroid count != k");
    for (const auto& c : v.centroids) {
      if (c.size() != static_cast<std::size_t>(v.descriptor_dim)) throw DataError("centroid dimension mismatch");
    }
    return v;
  } catch (const json::exception& e) {
    throw DataError(std::string("vocabulary: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string render_feature_csv(const FeatureTable& table) {
  std::string out = "id";
  for (const auto& c : table.columns) out += "," + c;
  out += '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out += table.ids[r];
    for (double v : table.rows[r]) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

FeatureTable parse_feature_csv(std::string_view content) {
  FeatureTable table;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (line_no == 1) {
      if (cells.empty() || cells[0] != "id") throw DataError("feature CSV must start with an 'id' column");
      for (std::size_t i = 1; i < cells.size(); ++i) table.columns.emplace_back(cells[i]);
      continue;
    }
    if (cells.size() != table.columns.size() + 1) {
      throw DataError("feature CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    table.ids.emplace_back(cells[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      double v = 0.0;
      const auto res = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
      if (res.ec != std::errc{} || res.ptr != cells[i].data() + cells[i].size()) {
        throw DataError("feature CSV line " + std::to_string(line_no) + ": bad number");
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

FeatureTable load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_feature_csv(ss.str());
}

}  // namespace imgcred
