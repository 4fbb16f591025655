// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include "evomerge/errors.hpp"
#include "evomerge/subprocess.hpp"

// Corpus-level BLEU-1..4, ROUGE-L and METEOR over tokenized
// (hypothesis, reference) pairs, one reference per hypothesis.

namespace evomerge {

using TokenSeq = std::vector<std::string>;

struct CorpusPair {
  TokenSeq hyp;
  TokenSeq ref;
};
using Corpus = std::vector<CorpusPair>;

struct MetricReport {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0;
  double meteor = 0;

  nlohmann::json to_json() const {
    return {{"bleu1", bleu1}, {"bleu2", bleu2}, {"bleu3", bleu3},
            {"bleu4", bleu4}, {"rouge_l", rouge_l}, {"meteor", meteor}};
  }
};

// ---------------------------------------------------------------------------
// Tokenization

/// Canonical composition (NFC) via ICU. Japanese source text arrives in mixed
/// normal forms; normalizing first keeps token identity stable.
inline std::string normalize_nfc(const std::string& text) {
  UErrorCode status = U_ZERO_ERROR;
  const UNormalizer2* norm = unorm2_getNFCInstance(&status);
  if (U_FAILURE(status)) return text;

  std::vector<UChar> u16(text.size() + 1);
  std::int32_t u16_len = 0;
  u_strFromUTF8(u16.data(), static_cast<std::int32_t>(u16.size()), &u16_len,
                text.data(), static_cast<std::int32_t>(text.size()), &status);
  if (U_FAILURE(status)) return text;

  std::vector<UChar> out(static_cast<std::size_t>(u16_len) * 2 + 16);
  std::int32_t out_len = unorm2_normalize(norm, u16.data(), u16_len, out.data(),
                                          static_cast<std::int32_t>(out.size()),
                                          &status);
  if (U_FAILURE(status)) return text;

  std::string result(static_cast<std::size_t>(out_len) * 4 + 4, '\0');
  std::int32_t u8_len = 0;
  u_strToUTF8(result.data(), static_cast<std::int32_t>(result.size()), &u8_len,
              out.data(), out_len, &status);
  if (U_FAILURE(status)) return text;
  result.resize(static_cast<std::size_t>(u8_len));
  return result;
}

inline bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U'\t': case U'\n': case U'\v': case U'\f': case U'\r': case U' ':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

/// Decodes the next UTF-8 scalar starting at `i`, advancing `i`.
/// Invalid bytes decode as U+FFFD, one byte at a time.
inline char32_t next_codepoint(const std::string& s, std::size_t& i) {
  unsigned char b = static_cast<unsigned char>(s[i]);
  int extra = b < 0x80 ? 0 : b < 0xC0 ? -1 : b < 0xE0 ? 1 : b < 0xF0 ? 2 : 3;
  if (extra < 0 || i + static_cast<std::size_t>(extra) >= s.size()) {
    ++i;
    return 0xFFFD;
  }
  char32_t cp = extra == 0 ? b : b & (0x3F >> extra);
  for (int j = 1; j <= extra; ++j) {
    unsigned char cont = static_cast<unsigned char>(s[i + static_cast<std::size_t>(j)]);
    if ((cont & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

inline TokenSeq tokenize_whitespace(const std::string& text) {
  TokenSeq tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    char32_t cp = next_codepoint(text, i);
    if (is_unicode_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.append(text, start, i - start);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// One token per Unicode scalar, whitespace skipped.
inline TokenSeq tokenize_characters(const std::string& text) {
  TokenSeq tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    char32_t cp = next_codepoint(text, i);
    if (!is_unicode_space(cp)) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

struct TokenizerSpec {
  enum class Kind { kWhitespace, kCharacter, kExternal };
  Kind kind = Kind::kWhitespace;
  std::vector<std::string> argv;  // external command, e.g. a MeCab wrapper
  double timeout_sec = 60.0;

  /// Parses "ws", "char", or "cmd:<argv>" (argv split on spaces).
  static TokenizerSpec parse(const std::string& s) {
    TokenizerSpec spec;
    if (s == "ws") {
      spec.kind = Kind::kWhitespace;
    } else if (s == "char") {
      spec.kind = Kind::kCharacter;
    } else if (s.rfind("cmd:", 0) == 0) {
      spec.kind = Kind::kExternal;
      std::string rest = s.substr(4);
      std::string word;
      for (char ch : rest) {
        if (ch == ' ') {
          if (!word.empty()) spec.argv.push_back(std::move(word));
          word.clear();
        } else {
          word.push_back(ch);
        }
      }
      if (!word.empty()) spec.argv.push_back(std::move(word));
      if (spec.argv.empty()) throw ConfigError("tokenizer: empty command");
    } else {
      throw ConfigError("tokenizer: expected ws|char|cmd:<argv>, got '" + s + "'");
    }
    return spec;
  }
};

inline TokenSeq tokenize(const std::string& text, const TokenizerSpec& spec) {
  std::string norm = normalize_nfc(text);
  switch (spec.kind) {
    case TokenizerSpec::Kind::kWhitespace:
      return tokenize_whitespace(norm);
    case TokenizerSpec::Kind::kCharacter:
      return tokenize_characters(norm);
    case TokenizerSpec::Kind::kExternal: {
      ProcessResult r = run_process(spec.argv, norm, spec.timeout_sec);
      if (r.timed_out) throw ProcessError("tokenizer command timed out");
      if (r.exit_code != 0) {
        throw ProcessError("tokenizer command exited with " +
                           std::to_string(r.exit_code) + ": " + r.err);
      }
      return tokenize_whitespace(r.out);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// BLEU

namespace detail {

// n-grams keyed by tokens joined with an unlikely separator byte.
inline std::unordered_map<std::string, int> ngram_counts(const TokenSeq& seq,
                                                         std::size_t n) {
  std::unordered_map<std::string, int> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += seq[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

/// Corpus-level BLEU with modified n-gram precision pooled over all pairs and
/// the standard brevity penalty. Any pooled p_n of zero gives a zero score.
inline double bleu(const Corpus& corpus, int max_n = 4) {
  if (corpus.empty()) throw ConfigError("bleu: empty corpus");
  if (max_n < 1 || max_n > 4) throw ConfigError("bleu: max_n must be 1..4");

  std::int64_t total_hyp = 0, total_ref = 0;
  std::vector<std::int64_t> num(static_cast<std::size_t>(max_n), 0);
  std::vector<std::int64_t> den(static_cast<std::size_t>(max_n), 0);
  for (const auto& pair : corpus) {
    total_hyp += static_cast<std::int64_t>(pair.hyp.size());
    total_ref += static_cast<std::int64_t>(pair.ref.size());
    for (int n = 1; n <= max_n; ++n) {
      auto hyp_counts = detail::ngram_counts(pair.hyp, static_cast<std::size_t>(n));
      auto ref_counts = detail::ngram_counts(pair.ref, static_cast<std::size_t>(n));
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        int clip = it == ref_counts.end() ? 0 : std::min(count, it->second);
        num[static_cast<std::size_t>(n - 1)] += clip;
      }
      if (pair.hyp.size() >= static_cast<std::size_t>(n)) {
        den[static_cast<std::size_t>(n - 1)] +=
            static_cast<std::int64_t>(pair.hyp.size()) - n + 1;
      }
    }
  }
  if (total_hyp == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    std::int64_t a = num[static_cast<std::size_t>(n - 1)];
    std::int64_t b = den[static_cast<std::size_t>(n - 1)];
    if (a == 0 || b == 0) return 0.0;
    log_sum += std::log(static_cast<double>(a) / static_cast<double>(b)) / max_n;
  }
  double bp = total_hyp >= total_ref
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(total_ref) /
                                       static_cast<double>(total_hyp));
  return bp * std::exp(log_sum);
}

/// Diagnostic per-sentence BLEU: mean of sentence scores, add-one smoothing
/// on the n >= 2 precisions.
inline double bleu_per_sentence(const Corpus& corpus, int max_n = 4) {
  if (corpus.empty()) throw ConfigError("bleu: empty corpus");
  double sum = 0.0;
  for (const auto& pair : corpus) {
    if (pair.hyp.empty()) continue;
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= max_n; ++n) {
      auto hyp_counts = detail::ngram_counts(pair.hyp, static_cast<std::size_t>(n));
      auto ref_counts = detail::ngram_counts(pair.ref, static_cast<std::size_t>(n));
      double a = 0, b = 0;
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        a += it == ref_counts.end() ? 0 : std::min(count, it->second);
      }
      if (pair.hyp.size() >= static_cast<std::size_t>(n)) {
        b = static_cast<double>(pair.hyp.size()) - n + 1;
      }
      if (n >= 2) {
        a += 1.0;
        b += 1.0;
      }
      if (a == 0 || b == 0) {
        zero = true;
        break;
      }
      log_sum += std::log(a / b) / max_n;
    }
    if (zero) continue;
    double bp = pair.hyp.size() >= pair.ref.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(pair.ref.size()) /
                                         static_cast<double>(pair.hyp.size()));
    sum += bp * std::exp(log_sum);
  }
  return sum / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                     : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

/// Mean per-pair LCS F-measure. beta weighs recall (beta=1 gives F1).
inline double rouge_l(const Corpus& corpus, double beta = 1.0) {
  if (corpus.empty()) throw ConfigError("rouge_l: empty corpus");
  double sum = 0.0;
  double b2 = beta * beta;
  for (const auto& pair : corpus) {
    std::size_t l = lcs_length(pair.hyp, pair.ref);
    if (l == 0 || pair.hyp.empty() || pair.ref.empty()) continue;
    double p = static_cast<double>(l) / static_cast<double>(pair.hyp.size());
    double r = static_cast<double>(l) / static_cast<double>(pair.ref.size());
    sum += (1.0 + b2) * p * r / (r + b2 * p);
  }
  return sum / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// METEOR (exact surface matches only)

struct MeteorParams {
  double alpha = 0.9;   // precision weight in the harmonic mean
  double beta = 3.0;    // fragmentation penalty exponent
  double gamma = 0.5;   // fragmentation penalty weight
};

namespace detail {

inline int count_chunks(const std::vector<std::pair<int, int>>& align) {
  int chunks = 0;
  for (std::size_t i = 0; i < align.size(); ++i) {
    if (i == 0 || align[i].first != align[i - 1].first + 1 ||
        align[i].second != align[i - 1].second + 1) {
      ++chunks;
    }
  }
  return chunks;
}

// Greedy left-to-right alignment: each hypothesis token takes the smallest
// unused reference position with the same surface form.
inline std::vector<std::pair<int, int>> greedy_alignment(const TokenSeq& hyp,
                                                         const TokenSeq& ref) {
  std::vector<bool> used(ref.size(), false);
  std::vector<std::pair<int, int>> align;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == hyp[i]) {
        used[j] = true;
        align.emplace_back(static_cast<int>(i), static_cast<int>(j));
        break;
      }
    }
  }
  return align;
}

// Exhaustive search for the maximum matching with the fewest chunks.
// Node-capped; falls back to the greedy answer if the cap is hit.
class ChunkMinimizer {
 public:
  ChunkMinimizer(const TokenSeq& hyp, const TokenSeq& ref, int target_matches)
      : hyp_(hyp), ref_(ref), target_(target_matches) {}

  int solve(int greedy_chunks) {
    best_ = greedy_chunks;
    used_.assign(ref_.size(), false);
    align_.clear();
    dfs(0);
    return best_;
  }

  bool capped() const { return nodes_ > kNodeCap; }

 private:
  static constexpr long kNodeCap = 200000;

  void dfs(std::size_t i) {
    if (++nodes_ > kNodeCap) return;
    int matched = static_cast<int>(align_.size());
    int remaining = static_cast<int>(hyp_.size() - i);
    if (matched + remaining < target_) return;
    if (i == hyp_.size()) {
      if (matched == target_) {
        std::vector<std::pair<int, int>> sorted = align_;
        std::sort(sorted.begin(), sorted.end());
        best_ = std::min(best_, count_chunks(sorted));
      }
      return;
    }
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if (!used_[j] && ref_[j] == hyp_[i]) {
        used_[j] = true;
        align_.emplace_back(static_cast<int>(i), static_cast<int>(j));
        dfs(i + 1);
        align_.pop_back();
        used_[j] = false;
      }
    }
    dfs(i + 1);  // leave hyp_[i] unmatched
  }

  const TokenSeq& hyp_;
  const TokenSeq& ref_;
  int target_;
  int best_ = 0;
  long nodes_ = 0;
  std::vector<bool> used_;
  std::vector<std::pair<int, int>> align_;
};

}  // namespace detail

inline double meteor_pair(const TokenSeq& hyp, const TokenSeq& ref,
                          const MeteorParams& params = {}) {
  if (hyp.empty() || ref.empty()) return 0.0;
  std::map<std::string, int> hyp_counts, ref_counts;
  for (const auto& t : hyp) ++hyp_counts[t];
  for (const auto& t : ref) ++ref_counts[t];
  int m = 0;
  for (const auto& [tok, count] : hyp_counts) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) m += std::min(count, it->second);
  }
  if (m == 0) return 0.0;

  double p = static_cast<double>(m) / static_cast<double>(hyp.size());
  double r = static_cast<double>(m) / static_cast<double>(ref.size());
  double f = p * r / (params.alpha * p + (1.0 - params.alpha) * r);

  auto greedy = detail::greedy_alignment(hyp, ref);
  int chunks = detail::count_chunks(greedy);
  if (m <= 10) {
    detail::ChunkMinimizer minimizer(hyp, ref, m);
    chunks = minimizer.solve(chunks);
  }
  double penalty = params.gamma *
                   std::pow(static_cast<double>(chunks) / static_cast<double>(m),
                            params.beta);
  return f * (1.0 - penalty);
}

inline double meteor(const Corpus& corpus, const MeteorParams& params = {}) {
  if (corpus.empty()) throw ConfigError("meteor: empty corpus");
  double sum = 0.0;
  for (const auto& pair : corpus) sum += meteor_pair(pair.hyp, pair.ref, params);
  return sum / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------

inline MetricReport score_report(const Corpus& corpus) {
  if (corpus.empty()) throw ConfigError("score_report: empty corpus");
  MetricReport report;
  report.bleu1 = bleu(corpus, 1);
  report.bleu2 = bleu(corpus, 2);
  report.bleu3 = bleu(corpus, 3);
  report.bleu4 = bleu(corpus, 4);
  report.rouge_l = rouge_l(corpus);
  report.meteor = meteor(corpus);
  return report;
}

}  // namespace evomerge
