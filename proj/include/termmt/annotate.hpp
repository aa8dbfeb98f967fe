#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "termmt/termbase.hpp"

namespace termmt {

// Factor values attached to every source token.
inline constexpr int kFactorSourceWord = 0;
inline constexpr int kFactorSourceTerm = 1;
inline constexpr int kFactorTargetTerm = 2;

enum class AnnotationMode { Append, Replace };

AnnotationMode parse_annotation_mode(const std::string& s);
std::string to_string(AnnotationMode mode);

struct FactoredSentence {
  std::vector<std::string> tokens;
  std::vector<int> factors;  // same length as tokens, values in {0,1,2}

  static FactoredSentence plain(std::vector<std::string> tokens);
};

enum class MatchKind { Exact, Approximate };

struct TermMatch {
  TermEntry entry;
  std::size_t start = 0;  // token index, inclusive
  std::size_t end = 0;    // token index, exclusive
  MatchKind kind = MatchKind::Exact;
};

// Case-folded prefix rule: equal tokens always match; otherwise the sentence
// token must start with the term token and the term token must have at least
// min_stem_len characters. Covers inflections and compounds.
inline constexpr std::size_t kMinStemLen = 4;
bool approx_token_match(const std::string& term_token, const std::string& sentence_token,
                        std::size_t min_stem_len = kMinStemLen);

// True if phrase occurs as a contiguous token subsequence of sentence.
// With approx_last, the final phrase token may match by the prefix rule;
// earlier tokens always match exactly (case-folded).
bool phrase_occurs(const std::vector<std::string>& phrase,
                   const std::vector<std::string>& sentence, bool approx_last);

// Every candidate span where an entry matches, overlaps unresolved.
std::vector<TermMatch> find_match_candidates(const std::vector<std::string>& sentence,
                                             const TermBase& tb, bool approximate);

// Keeps the longest candidate among overlapping ones (ties: leftmost, then
// lexicographically smallest target); result is disjoint and sorted by start.
std::vector<TermMatch> resolve_overlaps(std::vector<TermMatch> candidates);

std::vector<TermMatch> find_matches(const std::vector<std::string>& sentence,
                                    const TermBase& tb, bool approximate);

// Append mode inserts the target phrase (factor 2) after the matched span
// (factor 1); replace mode substitutes the span with the target phrase.
FactoredSentence annotate_sentence(const std::vector<std::string>& sentence,
                                   const std::vector<TermMatch>& matches,
                                   AnnotationMode mode);

struct AugmentedCorpus {
  std::vector<FactoredSentence> src;
  std::vector<std::vector<std::string>> tgt;
  std::size_t original_count = 0;
  std::size_t annotated_count = 0;
};

// Emits the original corpus (all factors 0) followed by annotated copies of
// a seeded random subset of eligible pairs. A match is eligible only when its
// target phrase occurs in the reference (approximate match permitted).
// Annotated copies amount to augment_fraction of the original size, or all
// eligible pairs if fewer. Selection is per-sentence deterministic in
// (seed, index), so it is independent of processing order.
AugmentedCorpus build_training_corpus(const std::vector<std::vector<std::string>>& src,
                                      const std::vector<std::vector<std::string>>& tgt,
                                      const TermBase& tb, AnnotationMode mode,
                                      double augment_fraction, std::uint64_t seed);

enum class TargetMatchRegime { Exact, Approximate };

struct TestItem {
  std::size_t corpus_index = 0;
  std::vector<std::string> src;
  std::vector<std::string> ref;
  std::vector<TermMatch> matches;  // disjoint, sorted; gold terms for scoring
};

struct ExtractedTestSet {
  std::vector<TestItem> items;
  std::size_t total_terms() const;
};

// Keeps sentences with at least one exact source-side match whose target
// occurs in the reference under the requested regime.
ExtractedTestSet extract_test_set(const std::vector<std::vector<std::string>>& src,
                                  const std::vector<std::vector<std::string>>& refs,
                                  const TermBase& tb, TargetMatchRegime regime);

}  // namespace termmt
