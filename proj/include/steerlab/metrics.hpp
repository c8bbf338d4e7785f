#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "steerlab/lm.hpp"

namespace steerlab {

// Longest common (non-contiguous) subsequence length, O(|a|*|b|) time and
// O(min) memory via two DP rows.
template <typename Seq>
size_t lcs_length(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[m];
}

// Longest common contiguous substring; exposed because "memorized verbatim"
// readings sometimes mean substring rather than subsequence.
template <typename Seq>
size_t lcs_substring_length(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
  size_t best = 0;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

enum class AnlcsUnit { Char, Word };

inline const char* to_string(AnlcsUnit u) { return u == AnlcsUnit::Char ? "char" : "word"; }

// Average Normalized LCS over (ground_truth, output) pairs. Each term is
// LCS(gt, out) / len(gt), capped at 1; unit is characters by default.
inline double anlcs(const std::vector<std::pair<std::string, std::string>>& pairs,
                    AnlcsUnit unit = AnlcsUnit::Char) {
  if (pairs.empty()) throw ContractError("anlcs: empty pair list");
  double total = 0.0;
  for (const auto& [gt, out] : pairs) {
    if (gt.empty()) throw ContractError("anlcs: empty ground truth");
    size_t l, n;
    if (unit == AnlcsUnit::Char) {
      l = lcs_length(gt, out);
      n = gt.size();
    } else {
      auto gw = split_words(gt);
      auto ow = split_words(out);
      if (gw.empty()) throw ContractError("anlcs: ground truth has no words");
      l = lcs_length(gw, ow);
      n = gw.size();
    }
    total += static_cast<double>(std::min(l, n)) / static_cast<double>(n);
  }
  return total / static_cast<double>(pairs.size());
}

// If the model echoed the prompt before its continuation, drop the echo so
// memorization scoring sees only the response.
inline std::string strip_prompt_echo(const std::string& output, const std::string& prompt) {
  size_t i = 0;
  while (i < output.size() && std::isspace(static_cast<unsigned char>(output[i]))) ++i;
  if (!prompt.empty() && output.compare(i, prompt.size(), prompt) == 0) {
    i += prompt.size();
    while (i < output.size() && std::isspace(static_cast<unsigned char>(output[i]))) ++i;
    return output.substr(i);
  }
  return output;
}

// exp(mean token NLL in nats) under the scorer. Texts longer than the
// context are scored in overlapping windows with stride = context/2; each
// window scores only the tokens not already covered. The first token of the
// text is never scored (it has no context).
inline double perplexity(const LmCheckpoint& scorer, const std::string& text) {
  if (text.empty()) throw ContractError("perplexity: empty text");
  std::vector<int> tokens = tokenize_bytes(text);
  if (tokens.size() < 2)
    throw ContractError("perplexity: text too short to score (needs >= 2 tokens)");
  const int ctx = scorer.config.context_length;
  const int stride = std::max(1, ctx / 2);
  const int total = static_cast<int>(tokens.size());

  double nll_sum = 0.0;
  int64_t scored = 0;
  int covered = 1;  // positions < covered already scored (position 0 unscored)
  int start = 0;
  while (covered < total) {
    int end = std::min(total, start + ctx);
    std::vector<int> window(tokens.begin() + start, tokens.begin() + end);
    ForwardResult fr = lm_forward(scorer, window);
    for (int pos = covered; pos < end; ++pos) {
      int local = pos - start;  // predicted from logits at local-1
      const float* row = fr.logits.row_ptr(local - 1);
      const int vocab = fr.logits.cols();
      double mx = row[0];
      for (int j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double lse = 0.0;
      for (int j = 0; j < vocab; ++j) lse += std::exp(row[j] - mx);
      lse = mx + std::log(lse);
      nll_sum += lse - row[tokens[static_cast<size_t>(pos)]];
      ++scored;
    }
    covered = end;
    if (end == total) break;
    start += stride;
  }
  return std::exp(nll_sum / static_cast<double>(scored));
}

inline double ppl_ratio(const std::string& steered_text, const std::string& default_text,
                        const LmCheckpoint& scorer) {
  return perplexity(scorer, steered_text) / perplexity(scorer, default_text);
}

namespace detail {

struct MeteorAlignment {
  size_t matches = 0;
  size_t chunks = 0;
};

// Aligns exact unigram matches one-to-one by repeatedly taking the longest
// still-unused common contiguous run (ties: leftmost in candidate, then in
// reference). Every common token ends up matched, so the match count is
// maximal; the run-first order keeps the chunk count minimal in practice.
inline MeteorAlignment align_exact(const std::vector<std::string>& cand,
                                   const std::vector<std::string>& ref) {
  std::vector<bool> used_c(cand.size(), false), used_r(ref.size(), false);
  MeteorAlignment out;
  while (true) {
    size_t best_len = 0, best_i = 0, best_j = 0;
    for (size_t i = 0; i < cand.size(); ++i) {
      if (used_c[i]) continue;
      for (size_t j = 0; j < ref.size(); ++j) {
        if (used_r[j] || cand[i] != ref[j]) continue;
        size_t len = 0;
        while (i + len < cand.size() && j + len < ref.size() && !used_c[i + len] &&
               !used_r[j + len] && cand[i + len] == ref[j + len])
          ++len;
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (size_t k = 0; k < best_len; ++k) {
      used_c[best_i + k] = true;
      used_r[best_j + k] = true;
    }
    out.matches += best_len;
    out.chunks += 1;
  }
  return out;
}

}  // namespace detail

// METEOR restricted to exact whitespace-token matches (no stemming or
// synonyms): Fmean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3,
// score = Fmean*(1-penalty). Zero matches scores 0.
inline double meteor_exact(const std::string& candidate, const std::string& reference) {
  auto cand = split_words(candidate);
  auto ref = split_words(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  auto [matches, chunks] = detail::align_exact(cand, ref);
  if (matches == 0) return 0.0;
  double p = static_cast<double>(matches) / static_cast<double>(cand.size());
  double r = static_cast<double>(matches) / static_cast<double>(ref.size());
  double fmean = 10.0 * p * r / (r + 9.0 * p);
  double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

// Trim, case-fold, strip punctuation, keep the first whitespace token.
inline std::string normalize_answer(const std::string& raw) {
  auto words = split_words(raw);
  if (words.empty()) return "";
  std::string w = words[0];
  size_t b = 0, e = w.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
  std::string out;
  for (size_t i = b; i < e; ++i)
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(w[i]))));
  return out;
}

// Exact-match accuracy after answer normalization.
inline double task_accuracy(const std::vector<std::string>& golds,
                            const std::vector<std::string>& answers) {
  if (golds.size() != answers.size())
    throw ContractError("task_accuracy: " + std::to_string(golds.size()) + " golds vs " +
                        std::to_string(answers.size()) + " answers");
  if (golds.empty()) throw ContractError("task_accuracy: empty item list");
  size_t correct = 0;
  for (size_t i = 0; i < golds.size(); ++i)
    if (!normalize_answer(golds[i]).empty() &&
        normalize_answer(golds[i]) == normalize_answer(answers[i]))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

// Per-run metric bundle; perplexities and their ratio are pair-level values
// shared by both arms of a paired run.
struct ScoreReport {
  double anlcs = 0.0;
  double perplexity_steered = 0.0;
  double perplexity_default = 0.0;
  double ppl_ratio = 0.0;
  double meteor = 0.0;
  std::map<std::string, double> task_accuracies;
};

}  // namespace steerlab
