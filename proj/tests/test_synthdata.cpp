#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "termmt/annotate.hpp"
#include "termmt/synthdata.hpp"
#include "termmt/text.hpp"

using namespace termmt;

namespace {

SynthTaskSpec small_spec(std::uint64_t seed = 9) {
  SynthTaskSpec s;
  s.dictionary_size = 40;
  s.held_out_terms = 6;
  s.train_size = 120;
  s.dev_size = 20;
  s.test_size = 30;
  s.terms_per_test_sentence = 2;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("generate_task: zero-shot guarantee (exhaustive scan oracle)") {
  SynthTask task = generate_task(small_spec());
  // Every held-out target, scanned over all training references: 0 hits.
  for (const auto& e : task.test_terms.entries) {
    for (const auto& ref : task.train.tgt) CHECK_FALSE(phrase_occurs(e.target, ref, false));
    for (const auto& ref : task.dev.tgt) CHECK_FALSE(phrase_occurs(e.target, ref, false));
  }
  CHECK(verify_zero_shot(task.train.tgt, task.train_terms, task.test_terms));
}

TEST_CASE("generate_task: byte identical given the same seed") {
  SynthTask a = generate_task(small_spec(77));
  SynthTask b = generate_task(small_spec(77));
  CHECK(a.train.src == b.train.src);
  CHECK(a.train.tgt == b.train.tgt);
  CHECK(a.test.src == b.test.src);
  CHECK(a.test.tgt == b.test.tgt);
  REQUIRE(a.test_terms.size() == b.test_terms.size());
  for (std::size_t i = 0; i < a.test_terms.size(); ++i)
    CHECK(a.test_terms.entries[i] == b.test_terms.entries[i]);
  SynthTask c = generate_task(small_spec(78));
  CHECK(a.train.src != c.train.src);
}

TEST_CASE("generate_task: zero held-out terms leaves the test term base empty") {
  auto spec = small_spec();
  spec.held_out_terms = 0;
  spec.terms_per_test_sentence = 1;
  SynthTask task = generate_task(spec);
  CHECK(task.test_terms.size() == 0);
  CHECK(verify_zero_shot(task.train.tgt, task.train_terms, task.test_terms));  // vacuous
}

TEST_CASE("generate_task: test sentences carry the requested injected terms") {
  SynthTask task = generate_task(small_spec());
  std::set<std::string> held;
  for (const auto& e : task.test_terms.entries) held.insert(e.source[0]);
  for (const auto& sent : task.test.src) {
    int found = 0;
    for (const auto& w : sent) found += held.count(w);
    CHECK(found >= 2);
  }
}

TEST_CASE("generate_task: dictionary application is invertible on the word level") {
  SynthTask task = generate_task(small_spec());
  // Rebuild the mapping from parallel data; it must stay a function with a
  // unique source per target (injectivity).
  std::map<std::string, std::set<std::string>> fwd, rev;
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const auto& src = task.train.src[i];
    auto unordered = reorder_words(task.train.tgt[i]);  // reorder is an involution
    REQUIRE(src.size() == unordered.size());
    for (std::size_t k = 0; k < src.size(); ++k) {
      fwd[src[k]].insert(unordered[k]);
      rev[unordered[k]].insert(src[k]);
    }
  }
  for (const auto& [s, ts] : fwd) CHECK(ts.size() == 1);
  for (const auto& [t, ss] : rev) CHECK(ss.size() == 1);
}

TEST_CASE("generate_task: suffix variation is positional and deterministic") {
  auto spec = small_spec();
  spec.suffix_variation = SuffixVariation::Positional;
  SynthTask task = generate_task(spec);
  auto plain = generate_task(small_spec());
  REQUIRE(task.train.tgt.size() == plain.train.tgt.size());
  for (std::size_t i = 0; i < task.train.tgt.size(); ++i) {
    const auto& with = task.train.tgt[i];
    const auto& without = plain.train.tgt[i];
    REQUIRE(with.size() == without.size());
    for (std::size_t j = 0; j < with.size(); ++j)
      CHECK(with[j] == without[j] + positional_suffix(j));
  }
}

TEST_CASE("verify_zero_shot: mutation flips the verdict") {
  SynthTask task = generate_task(small_spec());
  REQUIRE(verify_zero_shot(task.train.tgt, task.train_terms, task.test_terms));
  // Inject one test term target into a training reference.
  task.train.tgt[3].push_back(task.test_terms.entries[0].target[0]);
  CHECK_FALSE(verify_zero_shot(task.train.tgt, task.train_terms, task.test_terms));
}

TEST_CASE("verify_zero_shot: source overlap with the training term base is a violation") {
  SynthTask task = generate_task(small_spec());
  TermBase train_tb = task.train_terms;
  train_tb.entries.push_back(task.test_terms.entries[0]);
  CHECK_FALSE(verify_zero_shot(task.train.tgt, train_tb, task.test_terms));
}

TEST_CASE("generate_task: infeasible specs error") {
  auto spec = small_spec();
  spec.held_out_terms = spec.dictionary_size;
  CHECK_THROWS_AS(generate_task(spec), std::runtime_error);
  auto spec2 = small_spec();
  spec2.source_alphabet_size = 1;
  CHECK_THROWS_AS(generate_task(spec2), std::runtime_error);
  auto spec3 = small_spec();
  spec3.target_alphabet_size = 2;
  spec3.dictionary_size = 1000;  // only 240 distinct targets exist at lengths 4..7
  CHECK_THROWS_AS(generate_task(spec3), std::runtime_error);
}

TEST_CASE("reorder_words: swaps adjacent pairs at even indices") {
  CHECK(reorder_words({"a", "b", "c", "d", "e"}) ==
        std::vector<std::string>{"b", "a", "d", "c", "e"});
  CHECK(reorder_words({"x"}) == std::vector<std::string>{"x"});
  CHECK(reorder_words({}).empty());
}

TEST_CASE("task spec json round trip") {
  auto spec = small_spec(123);
  spec.suffix_variation = SuffixVariation::Positional;
  auto parsed = SynthTaskSpec::from_json(spec.to_json());
  CHECK(parsed.to_json() == spec.to_json());
  CHECK(parsed.seed == 123);
  CHECK(parsed.suffix_variation == SuffixVariation::Positional);
}
