#include "termmt/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "termmt/text.hpp"

namespace termmt {

AnnotationMode parse_annotation_mode(const std::string& s) {
  if (s == "append") return AnnotationMode::Append;
  if (s == "replace") return AnnotationMode::Replace;
  throw std::invalid_argument("unknown annotation mode: " + s);
}

std::string to_string(AnnotationMode mode) {
  return mode == AnnotationMode::Append ? "append" : "replace";
}

FactoredSentence FactoredSentence::plain(std::vector<std::string> tokens) {
  FactoredSentence fs;
  fs.factors.assign(tokens.size(), kFactorSourceWord);
  fs.tokens = std::move(tokens);
  return fs;
}

bool approx_token_match(const std::string& term_token, const std::string& sentence_token,
                        std::size_t min_stem_len) {
  if (term_token.empty() || sentence_token.empty())
    throw std::invalid_argument("approx_token_match requires non-empty tokens");
  if (fold_case(term_token) == fold_case(sentence_token)) return true;
  return utf8_length(term_token) >= min_stem_len &&
         starts_with_fold(sentence_token, term_token);
}

bool phrase_occurs(const std::vector<std::string>& phrase,
                   const std::vector<std::string>& sentence, bool approx_last) {
  if (phrase.empty() || phrase.size() > sentence.size()) return false;
  for (std::size_t start = 0; start + phrase.size() <= sentence.size(); ++start) {
    bool ok = true;
    for (std::size_t j = 0; j < phrase.size() && ok; ++j) {
      const bool last = (j + 1 == phrase.size());
      if (last && approx_last)
        ok = approx_token_match(phrase[j], sentence[start + j]);
      else
        ok = fold_case(phrase[j]) == fold_case(sentence[start + j]);
    }
    if (ok) return true;
  }
  return false;
}

std::vector<TermMatch> find_match_candidates(const std::vector<std::string>& sentence,
                                             const TermBase& tb, bool approximate) {
  std::vector<TermMatch> out;
  for (const auto& entry : tb.entries) {
    const std::size_t n = entry.source.size();
    if (n > sentence.size()) continue;
    for (std::size_t start = 0; start + n <= sentence.size(); ++start) {
      bool exact = true;
      bool ok = true;
      for (std::size_t j = 0; j < n && ok; ++j) {
        const bool equal = fold_case(entry.source[j]) == fold_case(sentence[start + j]);
        if (equal) continue;
        // Only the final token of a multi-token phrase may match
        // approximately; earlier tokens must be exact.
        if (approximate && j + 1 == n &&
            approx_token_match(entry.source[j], sentence[start + j])) {
          exact = false;
        } else {
          ok = false;
        }
      }
      if (!ok) continue;
      TermMatch m;
      m.entry = entry;
      m.start = start;
      m.end = start + n;
      m.kind = exact ? MatchKind::Exact : MatchKind::Approximate;
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<TermMatch> resolve_overlaps(std::vector<TermMatch> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const TermMatch& a, const TermMatch& b) {
    const std::size_t la = a.end - a.start, lb = b.end - b.start;
    if (la != lb) return la > lb;                    // longest first
    if (a.start != b.start) return a.start < b.start;  // then leftmost
    return a.entry.target_text() < b.entry.target_text();
  });
  std::vector<TermMatch> kept;
  for (auto& cand : candidates) {
    bool overlaps = false;
    for (const auto& k : kept)
      if (cand.start < k.end && k.start < cand.end) {
        overlaps = true;
        break;
      }
    if (!overlaps) kept.push_back(std::move(cand));
  }
  std::sort(kept.begin(), kept.end(),
            [](const TermMatch& a, const TermMatch& b) { return a.start < b.start; });
  return kept;
}

std::vector<TermMatch> find_matches(const std::vector<std::string>& sentence,
                                    const TermBase& tb, bool approximate) {
  if (sentence.empty()) throw std::invalid_argument("sentence must be non-empty");
  return resolve_overlaps(find_match_candidates(sentence, tb, approximate));
}

FactoredSentence annotate_sentence(const std::vector<std::string>& sentence,
                                   const std::vector<TermMatch>& matches,
                                   AnnotationMode mode) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const auto& m = matches[i];
    if (m.start >= m.end || m.end > sentence.size())
      throw std::invalid_argument("match span out of bounds");
    if (i > 0 && m.start < prev_end)
      throw std::invalid_argument("matches must be sorted and non-overlapping");
    prev_end = m.end;
  }

  FactoredSentence out;
  std::size_t pos = 0;
  for (const auto& m : matches) {
    for (; pos < m.start; ++pos) {
      out.tokens.push_back(sentence[pos]);
      out.factors.push_back(kFactorSourceWord);
    }
    if (mode == AnnotationMode::Append) {
      for (; pos < m.end; ++pos) {
        out.tokens.push_back(sentence[pos]);
        out.factors.push_back(kFactorSourceTerm);
      }
    } else {
      pos = m.end;  // matched span is dropped
    }
    for (const auto& t : m.entry.target) {
      out.tokens.push_back(t);
      out.factors.push_back(kFactorTargetTerm);
    }
  }
  for (; pos < sentence.size(); ++pos) {
    out.tokens.push_back(sentence[pos]);
    out.factors.push_back(kFactorSourceWord);
  }
  return out;
}

namespace {

// Matches whose target side is absent from the reference are dropped before
// overlap resolution, so a shorter reference-backed candidate can win over a
// longer unusable one.
std::vector<TermMatch> eligible_matches(const std::vector<std::string>& sentence,
                                        const std::vector<std::string>& reference,
                                        const TermBase& tb, bool approx_source,
                                        bool approx_target) {
  auto candidates = find_match_candidates(sentence, tb, approx_source);
  std::vector<TermMatch> ok;
  for (auto& c : candidates)
    if (phrase_occurs(c.entry.target, reference, approx_target)) ok.push_back(std::move(c));
  return resolve_overlaps(std::move(ok));
}

}  // namespace

AugmentedCorpus build_training_corpus(const std::vector<std::vector<std::string>>& src,
                                      const std::vector<std::vector<std::string>>& tgt,
                                      const TermBase& tb, AnnotationMode mode,
                                      double augment_fraction, std::uint64_t seed) {
  if (src.size() != tgt.size())
    throw std::invalid_argument("misaligned corpora: " + std::to_string(src.size()) +
                                " source vs " + std::to_string(tgt.size()) + " target lines");
  if (augment_fraction < 0.0 || augment_fraction > 1.0)
    throw std::invalid_argument("augment_fraction must be in [0, 1]");

  AugmentedCorpus out;
  out.original_count = src.size();
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.src.push_back(FactoredSentence::plain(src[i]));
    out.tgt.push_back(tgt[i]);
  }

  struct Eligible {
    std::size_t index;
    std::uint64_t rank;
    std::vector<TermMatch> matches;
  };
  std::vector<Eligible> eligible;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty()) continue;
    auto matches = eligible_matches(src[i], tgt[i], tb, /*approx_source=*/true,
                                    /*approx_target=*/true);
    if (matches.empty()) continue;
    eligible.push_back({i, hash_combine(seed, i), std::move(matches)});
  }

  auto want = static_cast<std::size_t>(
      std::llround(augment_fraction * static_cast<double>(src.size())));
  std::size_t take = std::min(want, eligible.size());

  // Rank by per-sentence hash: a deterministic subset independent of order.
  std::sort(eligible.begin(), eligible.end(), [](const Eligible& a, const Eligible& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.index < b.index;
  });
  eligible.resize(take);
  std::sort(eligible.begin(), eligible.end(),
            [](const Eligible& a, const Eligible& b) { return a.index < b.index; });

  for (const auto& e : eligible) {
    out.src.push_back(annotate_sentence(src[e.index], e.matches, mode));
    out.tgt.push_back(tgt[e.index]);
    ++out.annotated_count;
  }
  return out;
}

std::size_t ExtractedTestSet::total_terms() const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.matches.size();
  return n;
}

ExtractedTestSet extract_test_set(const std::vector<std::vector<std::string>>& src,
                                  const std::vector<std::vector<std::string>>& refs,
                                  const TermBase& tb, TargetMatchRegime regime) {
  if (src.size() != refs.size())
    throw std::invalid_argument("misaligned corpora: " + std::to_string(src.size()) +
                                " source vs " + std::to_string(refs.size()) + " reference lines");
  ExtractedTestSet out;
  const bool approx_target = (regime == TargetMatchRegime::Approximate);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty()) continue;
    // Source side is matched exactly at test time; only the reference side
    // may be relaxed.
    auto matches = eligible_matches(src[i], refs[i], tb, /*approx_source=*/false,
                                    approx_target);
    if (matches.empty()) continue;
    TestItem item;
    item.corpus_index = i;
    item.src = src[i];
    item.ref = refs[i];
    item.matches = std::move(matches);
    out.items.push_back(std::move(item));
  }
  return out;
}

}  // namespace termmt
