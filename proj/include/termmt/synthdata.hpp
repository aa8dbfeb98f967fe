#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "termmt/io.hpp"
#include "termmt/termbase.hpp"

namespace termmt {

enum class SuffixVariation {
  None,
  // After reordering, the target word at position j gains the suffix "en"
  // when j % 4 == 3. Deterministic from position, so a model can learn it;
  // it exercises the approximate-reference matching path.
  Positional,
};

SuffixVariation parse_suffix_variation(const std::string& s);
std::string to_string(SuffixVariation v);

struct SynthTaskSpec {
  int source_alphabet_size = 12;   // distinct characters on the source side
  int target_alphabet_size = 12;
  int dictionary_size = 160;       // injective source word -> target word
  int held_out_terms = 16;         // entries reserved for zero-shot testing
  int min_sentence_len = 4;
  int max_sentence_len = 9;
  std::size_t train_size = 2000;
  std::size_t dev_size = 200;
  std::size_t test_size = 400;
  int terms_per_test_sentence = 2;
  SuffixVariation suffix_variation = SuffixVariation::None;
  std::uint64_t seed = 1;

  std::string to_json() const;
  static SynthTaskSpec from_json(const std::string& text);
};

struct SynthTask {
  ParallelCorpus train, dev, test;
  TermBase train_terms;  // dictionary entries outside the held-out set
  TermBase test_terms;   // held-out sources mapped to fresh target words
};

// Source sentences are random words; references apply the dictionary
// word-by-word, swap adjacent word pairs at even indices, then apply the
// suffix rule. Test sentences carry injected held-out sources whose fresh
// targets never occur in any training reference. Deterministic given seed.
SynthTask generate_task(const SynthTaskSpec& spec);

// True iff no test target phrase occurs in any training reference and no
// test source phrase occurs in the training term base.
bool verify_zero_shot(const TokenLines& train_refs, const TermBase& train_terms,
                      const TermBase& test_terms);

// The deterministic reorder applied by the generator, exposed for tests.
std::vector<std::string> reorder_words(std::vector<std::string> words);

std::string positional_suffix(std::size_t position);

}  // namespace termmt
