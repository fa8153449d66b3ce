#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imgcred {

using Tokens = std::vector<std::string>;
using NGram = std::vector<std::string>;

// Whitespace split, ASCII lowercasing, punctuation split into its own tokens.
// Tokens beginning with "http" are kept whole so URLs survive.
Tokens tokenize(std::string_view text);

using Tokenizer = std::function<Tokens(std::string_view)>;

struct TokenizedDoc {
  std::string id;
  Tokens tokens;
  int label = 0;  // 0 = real, 1 = fake
};

// 2x2 document contingency for one n-gram.
struct Contingency {
  std::int64_t a = 0;  // fake docs containing
  std::int64_t b = 0;  // real docs containing
  std::int64_t c = 0;  // fake docs lacking
  std::int64_t d = 0;  // real docs lacking
};

struct PatternScore {
  NGram ngram;
  std::int64_t tf = 0;
  Contingency counts;
  double chi2 = 0.0;
  double gain_ratio = 0.0;
};

enum class RankMethod { chi2, gain_ratio };
std::string_view to_string(RankMethod m);
RankMethod parse_rank_method(std::string_view s);

struct PatternList {
  std::vector<NGram> patterns;
  RankMethod method = RankMethod::chi2;
  std::vector<PatternScore> scores;  // parallel to patterns when produced by ranking
};

std::string join_ngram(const NGram& g);

// Every contiguous window of length 1..max_n with its occurrence count.
std::map<NGram, std::int64_t> extract_ngrams(std::span<const std::string> tokens, int max_n);

// Degenerate margins give 0.
double chi_squared(const Contingency& t);

// Information gain over the class divided by the entropy of the
// present/absent split, in bits; 0 when that split is constant.
double info_gain_ratio(const Contingency& t);

// Every candidate n-gram with document frequency >= min_df, scored both ways,
// in no particular order.
std::vector<PatternScore> score_candidates(std::span<const TokenizedDoc> corpus, int max_n,
                                           int min_df);

// Top-k fake-indicative n-grams, descending score, ties lexicographic.
PatternList rank_patterns(std::span<const TokenizedDoc> corpus, int max_n, RankMethod method,
                          int top_k, int min_df = 1);

bool contains_sequence(std::span<const std::string> tokens, std::span<const std::string> pattern);

struct WeakLabel {
  std::string id;
  int label = 1;
};

// Texts matching any pattern get label 1; the rest are omitted.
std::vector<WeakLabel> weak_label(std::span<const std::pair<std::string, Tokens>> texts,
                                  const PatternList& patterns);

// JSON-lines corpus {"id","text","label"}; label may be missing for weak labeling input.
struct CorpusRecord {
  std::string id;
  std::string text;
  std::optional<int> label;
};
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);
std::vector<TokenizedDoc> tokenize_corpus(std::span<const CorpusRecord> records,
                                          const Tokenizer& tok = tokenize);

std::string render_pattern_file(const PatternList& list);
PatternList parse_pattern_file(std::string_view content);
PatternList load_pattern_file(const std::filesystem::path& path);

}  // namespace imgcred
