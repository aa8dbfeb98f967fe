#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "termmt/annotate.hpp"
#include "termmt/text.hpp"

using namespace termmt;

namespace {

std::vector<std::string> toks(const std::string& s) { return tokenize(s); }

TermBase tb_of(std::initializer_list<std::pair<std::string, std::string>> pairs) {
  TermBase tb;
  for (const auto& [src, tgt] : pairs) tb.entries.push_back(make_entry(toks(src), toks(tgt)));
  return tb;
}

}  // namespace

TEST_CASE("approx_token_match: prefix rule") {
  CHECK(approx_token_match("elect", "elected"));
  CHECK(approx_token_match("arrest", "arrest"));
  CHECK_FALSE(approx_token_match("a", "apple"));  // stem too short, not equal
  CHECK(approx_token_match("a", "a"));            // equality always matches
  CHECK(approx_token_match("Haus", "hausbau"));   // case folded, compound
  CHECK_FALSE(approx_token_match("abc", "abcd"));  // 3 < min stem
  CHECK_THROWS_AS(approx_token_match("", "x"), std::invalid_argument);
}

TEST_CASE("approx_token_match: inflected umlaut example") {
  CHECK(approx_token_match("humanitär", "humanitären"));
}

TEST_CASE("find_matches: single exact match") {
  auto sentence = toks("All alternates shall be elected for one term");
  auto matches = find_matches(sentence, tb_of({{"alternates", "Stellvertreter"}}), false);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].start == 1);
  CHECK(matches[0].end == 2);
  CHECK(matches[0].kind == MatchKind::Exact);
}

TEST_CASE("find_matches: longest overlapping match wins") {
  // Oracle: candidates are [1,2) "translation" and [0,2) "machine translation";
  // the longest-match rule keeps only the two-token span.
  auto sentence = toks("machine translation works");
  auto tb = tb_of({{"machine translation", "MU"}, {"translation", "U"}});
  auto matches = find_matches(sentence, tb, false);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].start == 0);
  CHECK(matches[0].end == 2);
  CHECK(matches[0].entry.target_text() == "MU");
}

TEST_CASE("find_matches: empty term base, empty result") {
  TermBase tb;
  CHECK(find_matches(toks("a b c"), tb, true).empty());
}

TEST_CASE("find_matches: equal-length ties go leftmost then smallest target") {
  auto tb = tb_of({{"b", "Z"}, {"b", "A"}});
  auto matches = find_matches(toks("a b c"), tb, false);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].entry.target_text() == "A");

  // Two separate occurrences are both annotated.
  auto tb2 = tb_of({{"b", "X"}});
  auto m2 = find_matches(toks("b c b"), tb2, false);
  REQUIRE(m2.size() == 2);
  CHECK(m2[0].start == 0);
  CHECK(m2[1].start == 2);
}

TEST_CASE("find_matches: approximate only on the final token of a phrase") {
  auto tb = tb_of({{"human rights", "Menschenrechte"}});
  CHECK(find_matches(toks("human rightsgroups met"), tb, true).size() == 1);
  // First token must stay exact: "humans rights" does not match.
  CHECK(find_matches(toks("humans rights met"), tb, true).empty());
}

TEST_CASE("find_matches: output spans disjoint and sorted (random property)") {
  auto tb = tb_of({{"a b", "AB"}, {"b c", "BC"}, {"c", "C"}, {"a", "A"}, {"d e f", "DEF"}});
  Rng rng(99);
  std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f", "g"};
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<std::string> sent;
    int len = 1 + static_cast<int>(rng.next_below(10));
    for (int i = 0; i < len; ++i) sent.push_back(alphabet[rng.next_below(alphabet.size())]);
    auto ms = find_matches(sent, tb, iter % 2 == 0);
    for (std::size_t i = 1; i < ms.size(); ++i) {
      CHECK(ms[i - 1].end <= ms[i].start);
      CHECK(ms[i - 1].start < ms[i].start);
    }
  }
}

TEST_CASE("annotate_sentence: append mode factored output") {
  auto sentence = toks("All alternates shall be elected for one term");
  auto matches = find_matches(sentence, tb_of({{"alternates", "Stellvertreter"}}), false);
  FactoredSentence fs = annotate_sentence(sentence, matches, AnnotationMode::Append);
  CHECK(join_tokens(fs.tokens) == "All alternates Stellvertreter shall be elected for one term");
  CHECK(fs.factors == std::vector<int>{0, 1, 2, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("annotate_sentence: replace mode is pure span substitution") {
  auto sentence = toks("All alternates shall be elected for one term");
  auto matches = find_matches(sentence, tb_of({{"alternates", "Stellvertreter"}}), false);
  FactoredSentence fs = annotate_sentence(sentence, matches, AnnotationMode::Replace);
  CHECK(join_tokens(fs.tokens) == "All Stellvertreter shall be elected for one term");
  CHECK(fs.factors == std::vector<int>{0, 2, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("annotate_sentence: no matches leaves the sentence untouched") {
  auto sentence = toks("nothing to see");
  for (auto mode : {AnnotationMode::Append, AnnotationMode::Replace}) {
    FactoredSentence fs = annotate_sentence(sentence, {}, mode);
    CHECK(fs.tokens == sentence);
    CHECK(fs.factors == std::vector<int>(3, 0));
  }
}

TEST_CASE("annotate_sentence: overlapping or unsorted matches error") {
  auto sentence = toks("a b c d");
  auto tb = tb_of({{"a b", "X"}, {"b c", "Y"}});
  auto cands = find_match_candidates(sentence, tb, false);
  REQUIRE(cands.size() == 2);
  std::sort(cands.begin(), cands.end(),
            [](const TermMatch& a, const TermMatch& b) { return a.start < b.start; });
  CHECK_THROWS_AS(annotate_sentence(sentence, cands, AnnotationMode::Append),
                  std::invalid_argument);
  std::swap(cands[0], cands[1]);
  CHECK_THROWS_AS(annotate_sentence(sentence, cands, AnnotationMode::Append),
                  std::invalid_argument);
}

TEST_CASE("annotate_sentence: append preserves original tokens as factor 0/1 subsequence") {
  auto tb = tb_of({{"b", "B2"}, {"d e", "DE"}});
  Rng rng(7);
  std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<std::string> sent;
    int len = 1 + static_cast<int>(rng.next_below(9));
    for (int i = 0; i < len; ++i) sent.push_back(alphabet[rng.next_below(alphabet.size())]);
    auto ms = find_matches(sent, tb, false);

    FactoredSentence app = annotate_sentence(sent, ms, AnnotationMode::Append);
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < app.tokens.size(); ++i)
      if (app.factors[i] != kFactorTargetTerm) kept.push_back(app.tokens[i]);
    CHECK(kept == sent);

    // Replace mode: factor-0 subsequence equals the input minus matched spans.
    FactoredSentence rep = annotate_sentence(sent, ms, AnnotationMode::Replace);
    std::vector<std::string> kept_rep;
    for (std::size_t i = 0; i < rep.tokens.size(); ++i)
      if (rep.factors[i] == kFactorSourceWord) kept_rep.push_back(rep.tokens[i]);
    std::vector<std::string> expected;
    std::size_t pos = 0;
    for (const auto& m : ms) {
      for (; pos < m.start; ++pos) expected.push_back(sent[pos]);
      pos = m.end;
    }
    for (; pos < sent.size(); ++pos) expected.push_back(sent[pos]);
    CHECK(kept_rep == expected);

    // Factor-1 runs are immediately followed by factor-2 runs in append mode.
    for (std::size_t i = 0; i < app.factors.size(); ++i) {
      if (app.factors[i] == kFactorSourceTerm &&
          (i + 1 == app.factors.size() || app.factors[i + 1] == kFactorSourceWord))
        CHECK(false);
    }
    for (int f : rep.factors) CHECK(f != kFactorSourceTerm);
  }
}

TEST_CASE("build_training_corpus: reference-backed matches only") {
  // The reference lacks the target, so the pair is never annotated.
  auto src = std::vector<std::vector<std::string>>{toks("the arrest happened")};
  auto tgt = std::vector<std::vector<std::string>>{toks("es geschah gestern")};
  auto tb = tb_of({{"arrest", "Festnahme"}});
  auto out = build_training_corpus(src, tgt, tb, AnnotationMode::Append, 1.0, 3);
  CHECK(out.annotated_count == 0);
  CHECK(out.src.size() == 1);
}

TEST_CASE("build_training_corpus: approximate target-side eligibility") {
  auto src = std::vector<std::vector<std::string>>{toks("the arrest happened")};
  auto tgt = std::vector<std::vector<std::string>>{toks("die Festnahmen geschahen")};
  auto tb = tb_of({{"arrest", "Festnahme"}});
  auto out = build_training_corpus(src, tgt, tb, AnnotationMode::Append, 1.0, 3);
  CHECK(out.annotated_count == 1);  // Festnahme ~ Festnahmen by the prefix rule
}

TEST_CASE("build_training_corpus: fraction zero is the identity corpus") {
  std::vector<std::vector<std::string>> src{toks("a b"), toks("b c")};
  std::vector<std::vector<std::string>> tgt{toks("A B"), toks("B C")};
  auto tb = tb_of({{"b", "B"}});
  auto out = build_training_corpus(src, tgt, tb, AnnotationMode::Append, 0.0, 1);
  CHECK(out.src.size() == 2);
  CHECK(out.annotated_count == 0);
  for (const auto& fs : out.src)
    for (int f : fs.factors) CHECK(f == 0);
}

TEST_CASE("build_training_corpus: 100 eligible pairs at 0.10 gives exactly 10 annotated") {
  // Oracle: count annotated lines in the output.
  std::vector<std::vector<std::string>> src(100, toks("x b y"));
  std::vector<std::vector<std::string>> tgt(100, toks("X B Y"));
  auto tb = tb_of({{"b", "B"}});
  auto out = build_training_corpus(src, tgt, tb, AnnotationMode::Append, 0.10, 11);
  CHECK(out.src.size() == 110);
  CHECK(out.annotated_count == 10);
  std::size_t annotated = 0;
  for (const auto& fs : out.src)
    if (std::any_of(fs.factors.begin(), fs.factors.end(), [](int f) { return f != 0; }))
      ++annotated;
  CHECK(annotated == 10);
}

TEST_CASE("build_training_corpus: deterministic given seed, misalignment errors") {
  std::vector<std::vector<std::string>> src(20, toks("x b y"));
  std::vector<std::vector<std::string>> tgt(20, toks("X B Y"));
  auto tb = tb_of({{"b", "B"}});
  auto a = build_training_corpus(src, tgt, tb, AnnotationMode::Replace, 0.5, 5);
  auto b = build_training_corpus(src, tgt, tb, AnnotationMode::Replace, 0.5, 5);
  REQUIRE(a.src.size() == b.src.size());
  for (std::size_t i = 0; i < a.src.size(); ++i) {
    CHECK(a.src[i].tokens == b.src[i].tokens);
    CHECK(a.src[i].factors == b.src[i].factors);
  }
  tgt.pop_back();
  CHECK_THROWS_AS(build_training_corpus(src, tgt, tb, AnnotationMode::Append, 0.5, 5),
                  std::invalid_argument);
}

TEST_CASE("build_training_corpus: every factor-2 phrase occurs in the reference") {
  auto tb = tb_of({{"b", "B"}, {"c d", "CD"}, {"e", "EE"}});
  std::vector<std::vector<std::string>> src, tgt;
  Rng rng(13);
  std::vector<std::string> alpha = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 60; ++i) {
    std::vector<std::string> s, t;
    int len = 2 + static_cast<int>(rng.next_below(6));
    for (int k = 0; k < len; ++k) {
      auto w = alpha[rng.next_below(alpha.size())];
      s.push_back(w);
      // Reference sometimes carries the uppercase target, sometimes not.
      if (rng.next_double() < 0.6) {
        std::string up = w;
        up[0] = static_cast<char>(up[0] - 'a' + 'A');
        if (w == "c") up = "CD";
        t.push_back(up);
      } else {
        t.push_back("filler");
      }
    }
    src.push_back(s);
    tgt.push_back(t);
  }
  auto out = build_training_corpus(src, tgt, tb, AnnotationMode::Append, 1.0, 17);
  for (std::size_t i = 0; i < out.src.size(); ++i) {
    const auto& fs = out.src[i];
    std::size_t k = 0;
    while (k < fs.tokens.size()) {
      if (fs.factors[k] == kFactorTargetTerm) {
        std::vector<std::string> phrase;
        while (k < fs.tokens.size() && fs.factors[k] == kFactorTargetTerm)
          phrase.push_back(fs.tokens[k++]);
        CHECK(phrase_occurs(phrase, out.tgt[i], true));
      } else {
        ++k;
      }
    }
  }
}

TEST_CASE("extract_test_set: exact regime keeps exact reference containment") {
  auto tb = tb_of({{"alternates", "Stellvertreter"}});
  std::vector<std::vector<std::string>> src{toks("the alternates arrived")};
  std::vector<std::vector<std::string>> refs{toks("die Stellvertreter kamen")};
  auto ts = extract_test_set(src, refs, tb, TargetMatchRegime::Exact);
  REQUIRE(ts.items.size() == 1);
  CHECK(ts.items[0].matches.size() == 1);
  CHECK(ts.total_terms() == 1);
}

TEST_CASE("extract_test_set: inflected reference dropped in exact, kept in approximate") {
  auto tb = tb_of({{"humanitarian", "humanitär"}});
  std::vector<std::vector<std::string>> src{toks("a humanitarian crisis")};
  std::vector<std::vector<std::string>> refs{toks("eine humanitären Krise")};
  CHECK(extract_test_set(src, refs, tb, TargetMatchRegime::Exact).items.empty());
  auto ts = extract_test_set(src, refs, tb, TargetMatchRegime::Approximate);
  REQUIRE(ts.items.size() == 1);
}

TEST_CASE("extract_test_set: source side is matched exactly") {
  auto tb = tb_of({{"elect", "wählen"}});
  // Inflected source does not trigger at test time.
  std::vector<std::vector<std::string>> src{toks("they elected him")};
  std::vector<std::vector<std::string>> refs{toks("sie wählen ihn")};
  CHECK(extract_test_set(src, refs, tb, TargetMatchRegime::Approximate).items.empty());
}

TEST_CASE("extract_test_set: no matches anywhere gives an empty set") {
  auto tb = tb_of({{"zzz", "ZZZ"}});
  std::vector<std::vector<std::string>> src{toks("a b"), toks("c d")};
  std::vector<std::vector<std::string>> refs{toks("A B"), toks("C D")};
  CHECK(extract_test_set(src, refs, tb, TargetMatchRegime::Exact).items.empty());
}
