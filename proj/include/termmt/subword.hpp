#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "termmt/annotate.hpp"

namespace termmt {

// Internal symbols carry a "</w>" suffix on word-final pieces while merges
// are learned; rendered output uses the "@@" continuation convention
// ("Stell@@ vertreter").
inline constexpr const char* kEndOfWord = "</w>";
inline constexpr const char* kContinuation = "@@";

struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;  // order significant
  std::unordered_set<std::string> vocab;  // internal symbols of the segmented corpus

  std::size_t num_merges() const { return merges.size(); }

  // Every internal symbol this model can ever produce on any input over the
  // training alphabet: initial characters plus all merge outputs.
  std::vector<std::string> reachable_symbols() const;
};

struct FactoredSubwordSentence {
  std::vector<std::string> subwords;
  std::vector<int> factors;  // broadcast from the word stream
};

// Joint BPE over the concatenation of both corpus sides. Pair-frequency ties
// break on the lexicographically smaller (left, right) pair.
BpeModel bpe_train(const std::vector<std::vector<std::string>>& src_corpus,
                   const std::vector<std::vector<std::string>>& tgt_corpus,
                   std::size_t num_merges);

// Greedy application of merges in learned order; unseen characters fall back
// to single-character symbols. Rendered with the "@@" convention.
std::vector<std::string> bpe_segment_word(const std::string& word, const BpeModel& model);

FactoredSubwordSentence bpe_apply(const FactoredSentence& sentence, const BpeModel& model);
std::vector<std::string> bpe_apply_tokens(const std::vector<std::string>& tokens,
                                          const BpeModel& model);

// Joins subwords back into words at continuation markers.
std::vector<std::string> bpe_decode(const std::vector<std::string>& subwords);

void save_bpe_model(const BpeModel& model, const std::filesystem::path& path);
BpeModel load_bpe_model(const std::filesystem::path& path);

// Memoizing wrapper for corpus-scale application. Not thread-safe; the
// underlying free functions are.
class BpeApplier {
 public:
  explicit BpeApplier(const BpeModel& model);

  const std::vector<std::string>& segment(const std::string& word);
  FactoredSubwordSentence apply(const FactoredSentence& sentence);
  std::vector<std::string> apply_tokens(const std::vector<std::string>& tokens);

 private:
  const BpeModel& model_;
  std::unordered_map<std::string, std::size_t> ranks_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;
};

}  // namespace termmt
