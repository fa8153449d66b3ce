#include "imgcred/pattern_mining.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "imgcred/error.hpp"

namespace imgcred {

using nlohmann::json;

namespace {

bool is_split_punct(unsigned char ch) {
  return std::ispunct(ch) && ch != '@' && ch != '#' && ch != '_' && ch != '\'';
}

double entropy2(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) break;
    std::string chunk(text.substr(start, i - start));
    for (auto& ch : chunk) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (chunk.starts_with("http")) {
      out.push_back(std::move(chunk));
      continue;
    }
    std::string word;
    for (char ch : chunk) {
      if (is_split_punct(static_cast<unsigned char>(ch))) {
        if (!word.empty()) out.push_back(std::exchange(word, {}));
        out.emplace_back(1, ch);
      } else {
        word += ch;
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  }
  return out;
}

std::string_view to_string(RankMethod m) { return m == RankMethod::chi2 ? "chi2" : "gain_ratio"; }

RankMethod parse_rank_method(std::string_view s) {
  if (s == "chi2") return RankMethod::chi2;
  if (s == "gain_ratio") return RankMethod::gain_ratio;
  throw DataError("unknown ranking method '" + std::string(s) + "'");
}

std::string join_ngram(const NGram& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) out += ' ';
    out += g[i];
  }
  return out;
}

std::map<NGram, std::int64_t> extract_ngrams(std::span<const std::string> tokens, int max_n) {
  if (max_n < 1 || max_n > 3) throw ShapeError("max_n must lie in [1, 3]");
  std::map<NGram, std::int64_t> counts;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (int n = 1; n <= max_n && i + n <= tokens.size(); ++n) {
      ++counts[NGram(tokens.begin() + i, tokens.begin() + i + n)];
    }
  }
  return counts;
}

double chi_squared(const Contingency& t) {
  const double a = t.a, b = t.b, c = t.c, d = t.d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  if (denom <= 0.0) return 0.0;
  const double diff = a * d - b * c;
  return (a + b + c + d) * diff * diff / denom;
}

double info_gain_ratio(const Contingency& t) {
  const double n = static_cast<double>(t.a + t.b + t.c + t.d);
  if (n <= 0.0) return 0.0;
  const double present = static_cast<double>(t.a + t.b);
  const double absent = static_cast<double>(t.c + t.d);
  const double split_entropy = entropy2(present / n);
  if (split_entropy <= 0.0) return 0.0;
  const double h_class = entropy2((t.a + t.c) / n);
  const double h_present = present > 0 ? entropy2(t.a / present) : 0.0;
  const double h_absent = absent > 0 ? entropy2(t.c / absent) : 0.0;
  const double gain = h_class - (present / n) * h_present - (absent / n) * h_absent;
  return std::clamp(gain / split_entropy, 0.0, 1.0);
}

std::vector<PatternScore> score_candidates(std::span<const TokenizedDoc> corpus, int max_n,
                                           int min_df) {
  struct Acc {
    std::int64_t tf = 0, fake_docs = 0, real_docs = 0;
  };
  std::map<NGram, Acc> acc;
  std::int64_t total_fake = 0, total_real = 0;
  for (const auto& doc : corpus) {
    if (doc.label != 0 && doc.label != 1) throw DataError("doc '" + doc.id + "' label not binary");
    (doc.label == 1 ? total_fake : total_real) += 1;
    for (const auto& [gram, count] : extract_ngrams(doc.tokens, max_n)) {
      auto& a = acc[gram];
      a.tf += count;
      (doc.label == 1 ? a.fake_docs : a.real_docs) += 1;
    }
  }
  std::vector<PatternScore> out;
  for (auto& [gram, a] : acc) {
    if (a.fake_docs + a.real_docs < min_df) continue;
    PatternScore s;
    s.ngram = gram;
    s.tf = a.tf;
    s.counts = {a.fake_docs, a.real_docs, total_fake - a.fake_docs, total_real - a.real_docs};
    s.chi2 = chi_squared(s.counts);
    s.gain_ratio = info_gain_ratio(s.counts);
    out.push_back(std::move(s));
  }
  return out;
}

PatternList rank_patterns(std::span<const TokenizedDoc> corpus, int max_n, RankMethod method,
                          int top_k, int min_df) {
  if (top_k < 1) throw ShapeError("top_k must be positive");
  const bool has_fake = std::any_of(corpus.begin(), corpus.end(), [](auto& d) { return d.label == 1; });
  const bool has_real = std::any_of(corpus.begin(), corpus.end(), [](auto& d) { return d.label == 0; });
  if (!has_fake || !has_real) throw DataError("pattern ranking needs both fake and real documents");

  auto candidates = score_candidates(corpus, max_n, min_df);
  std::erase_if(candidates, [](const PatternScore& s) {
    const auto& t = s.counts;
    // a/(a+c) > b/(b+d), cross-multiplied
    return !(t.a * (t.b + t.d) > t.b * (t.a + t.c));
  });

  const auto score = [method](const PatternScore& s) {
    return method == RankMethod::chi2 ? s.chi2 : s.gain_ratio;
  };
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) keys.emplace_back(join_ngram(candidates[i].ngram), i);
  std::sort(keys.begin(), keys.end(), [&](const auto& l, const auto& r) {
    const double sl = score(candidates[l.second]);
    const double sr = score(candidates[r.second]);
    if (sl != sr) return sl > sr;
    return l.first < r.first;
  });

  PatternList list;
  list.method = method;
  for (std::size_t i = 0; i < keys.size() && i < static_cast<std::size_t>(top_k); ++i) {
    list.patterns.push_back(candidates[keys[i].second].ngram);
    list.scores.push_back(candidates[keys[i].second]);
  }
  return list;
}

bool contains_sequence(std::span<const std::string> tokens, std::span<const std::string> pattern) {
  if (pattern.empty() || pattern.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), pattern.begin(), pattern.end()) != tokens.end();
}

std::vector<WeakLabel> weak_label(std::span<const std::pair<std::string, Tokens>> texts,
                                  const PatternList& patterns) {
  if (patterns.patterns.empty()) throw ShapeError("weak labeling needs at least one pattern");
  std::vector<WeakLabel> out;
  for (const auto& [id, tokens] : texts) {
    const bool hit = std::any_of(patterns.patterns.begin(), patterns.patterns.end(),
                                 [&](const NGram& p) { return contains_sequence(tokens, p); });
    if (hit) out.push_back({id, 1});
  }
  return out;
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path.string() + "'");
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      CorpusRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      if (j.contains("label") && !j["label"].is_null()) {
        r.label = j["label"].get<int>();
        if (*r.label != 0 && *r.label != 1) throw DataError("label must be 0 or 1");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TokenizedDoc> tokenize_corpus(std::span<const CorpusRecord> records,
                                          const Tokenizer& tok) {
  std::vector<TokenizedDoc> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label) throw DataError("corpus record '" + r.id + "' has no label");
    out.push_back({r.id, tok(r.text), *r.label});
  }
  return out;
}

std::string render_pattern_file(const PatternList& list) {
  json j;
  j["method"] = std::string(to_string(list.method));
  j["patterns"] = json::array();
  for (const auto& p : list.patterns) j["patterns"].push_back(p);
  return j.dump(2) + "\n";
}

PatternList parse_pattern_file(std::string_view content) {
  try {
    const auto j = json::parse(content);
    PatternList list;
    list.method = parse_rank_method(j.at("method").get<std::string>());
    for (const auto& p : j.at("patterns")) {
      auto gram = p.get<NGram>();
      if (gram.empty()) throw DataError("empty pattern");
      list.patterns.push_back(std::move(gram));
    }
    return list;
  } catch (const json::exception& e) {
    throw DataError(std::string("pattern file: ") + e.what());
  }
}

PatternList load_pattern_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pattern file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pattern_file(ss.str());
}

}  // namespace imgcred
