#include "termmt/synthdata.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "termmt/annotate.hpp"
#include "termmt/text.hpp"

namespace termmt {

SuffixVariation parse_suffix_variation(const std::string& s) {
  if (s == "none") return SuffixVariation::None;
  if (s == "positional") return SuffixVariation::Positional;
  throw std::invalid_argument("unknown suffix variation: " + s);
}

std::string to_string(SuffixVariation v) {
  return v == SuffixVariation::None ? "none" : "positional";
}

std::string SynthTaskSpec::to_json() const {
  nlohmann::json j;
  j["source_alphabet_size"] = source_alphabet_size;
  j["target_alphabet_size"] = target_alphabet_size;
  j["dictionary_size"] = dictionary_size;
  j["held_out_terms"] = held_out_terms;
  j["min_sentence_len"] = min_sentence_len;
  j["max_sentence_len"] = max_sentence_len;
  j["train_size"] = train_size;
  j["dev_size"] = dev_size;
  j["test_size"] = test_size;
  j["terms_per_test_sentence"] = terms_per_test_sentence;
  j["suffix_variation"] = to_string(suffix_variation);
  j["seed"] = seed;
  return j.dump();
}

SynthTaskSpec SynthTaskSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SynthTaskSpec s;
  s.source_alphabet_size = j.value("source_alphabet_size", s.source_alphabet_size);
  s.target_alphabet_size = j.value("target_alphabet_size", s.target_alphabet_size);
  s.dictionary_size = j.value("dictionary_size", s.dictionary_size);
  s.held_out_terms = j.value("held_out_terms", s.held_out_terms);
  s.min_sentence_len = j.value("min_sentence_len", s.min_sentence_len);
  s.max_sentence_len = j.value("max_sentence_len", s.max_sentence_len);
  s.train_size = j.value("train_size", s.train_size);
  s.dev_size = j.value("dev_size", s.dev_size);
  s.test_size = j.value("test_size", s.test_size);
  s.terms_per_test_sentence = j.value("terms_per_test_sentence", s.terms_per_test_sentence);
  if (j.contains("suffix_variation"))
    s.suffix_variation = parse_suffix_variation(j["suffix_variation"].get<std::string>());
  s.seed = j.value("seed", s.seed);
  return s;
}

std::vector<std::string> reorder_words(std::vector<std::string> words) {
  for (std::size_t i = 0; i + 1 < words.size(); i += 2) std::swap(words[i], words[i + 1]);
  return words;
}

std::string positional_suffix(std::size_t position) {
  return position % 4 == 3 ? "en" : "";
}

namespace {

std::string random_word(Rng& rng, const std::vector<char>& alphabet, int min_len, int max_len) {
  int len = min_len + static_cast<int>(rng.next_below(max_len - min_len + 1));
  std::string w;
  for (int i = 0; i < len; ++i)
    w.push_back(alphabet[rng.next_below(alphabet.size())]);
  return w;
}

std::vector<std::string> distinct_words(Rng& rng, const std::vector<char>& alphabet,
                                        int min_len, int max_len, std::size_t count,
                                        const std::unordered_set<std::string>& forbidden) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 200 * count + 1000;
  while (out.size() < count) {
    if (++attempts > max_attempts)
      throw std::runtime_error("infeasible task spec: cannot generate " +
                               std::to_string(count) + " distinct words");
    std::string w = random_word(rng, alphabet, min_len, max_len);
    if (forbidden.count(w) || !seen.insert(w).second) continue;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<char> make_alphabet(int size, bool from_front) {
  if (size < 2 || size > 26) throw std::runtime_error("infeasible task spec: alphabet size");
  std::vector<char> out;
  for (int i = 0; i < size; ++i)
    out.push_back(from_front ? static_cast<char>('a' + i) : static_cast<char>('z' - i));
  return out;
}

}  // namespace

SynthTask generate_task(const SynthTaskSpec& spec) {
  if (spec.dictionary_size < 2 || spec.held_out_terms < 0 ||
      spec.held_out_terms >= spec.dictionary_size)
    throw std::runtime_error("infeasible task spec: dictionary/held-out sizes");
  if (spec.min_sentence_len < 1 || spec.max_sentence_len < spec.min_sentence_len)
    throw std::runtime_error("infeasible task spec: sentence length range");
  if (spec.terms_per_test_sentence < 1 ||
      spec.terms_per_test_sentence > spec.min_sentence_len)
    throw std::runtime_error("infeasible task spec: terms per test sentence");

  // Source words over the front of the alphabet, target words over the back,
  // so the two sides stay visually distinct (they may overlap when large).
  auto src_alpha = make_alphabet(spec.source_alphabet_size, true);
  auto tgt_alpha = make_alphabet(spec.target_alphabet_size, false);

  Rng vocab_rng(hash_combine(spec.seed, 0x1001));
  auto src_words = distinct_words(vocab_rng, src_alpha, 3, 6,
                                  static_cast<std::size_t>(spec.dictionary_size), {});
  auto tgt_words = distinct_words(vocab_rng, tgt_alpha, 4, 7,
                                  static_cast<std::size_t>(spec.dictionary_size), {});

  std::map<std::string, std::string> dictionary;  // injective by construction
  for (int i = 0; i < spec.dictionary_size; ++i) dictionary[src_words[i]] = tgt_words[i];

  // Held-out sources get fresh zero-shot targets built only from characters
  // that occur in training targets, so subword segmentation stays covered.
  std::vector<std::size_t> held_idx(src_words.size());
  for (std::size_t i = 0; i < held_idx.size(); ++i) held_idx[i] = i;
  vocab_rng.shuffle(held_idx);
  held_idx.resize(static_cast<std::size_t>(spec.held_out_terms));
  std::unordered_set<std::size_t> held_set(held_idx.begin(), held_idx.end());

  std::set<char> used_chars;
  for (const auto& w : tgt_words)
    for (char c : w) used_chars.insert(c);
  std::vector<char> fresh_alpha(used_chars.begin(), used_chars.end());

  std::unordered_set<std::string> forbidden;
  for (const auto& w : tgt_words) {
    forbidden.insert(w);
    forbidden.insert(w + "en");  // suffixed training forms
  }
  auto fresh_targets = distinct_words(vocab_rng, fresh_alpha, 5, 7,
                                      static_cast<std::size_t>(spec.held_out_terms), forbidden);

  SynthTask task;
  task.train_terms.name = "synth.train";
  task.test_terms.name = "synth.test";
  std::vector<std::string> regular_sources;  // not held out
  for (std::size_t i = 0; i < src_words.size(); ++i) {
    if (held_set.count(i)) continue;
    regular_sources.push_back(src_words[i]);
    task.train_terms.entries.push_back(make_entry({src_words[i]}, {dictionary[src_words[i]]}));
  }
  std::map<std::string, std::string> held_map;  // source -> fresh target
  for (std::size_t k = 0; k < held_idx.size(); ++k) {
    const std::string& src = src_words[held_idx[k]];
    held_map[src] = fresh_targets[k];
    task.test_terms.entries.push_back(make_entry({src}, {fresh_targets[k]}));
  }

  const bool suffixes = spec.suffix_variation == SuffixVariation::Positional;
  auto make_reference = [&](const std::vector<std::string>& words, bool use_held_targets) {
    std::vector<std::string> ref;
    ref.reserve(words.size());
    for (const auto& w : words) {
      auto held = held_map.find(w);
      if (use_held_targets && held != held_map.end())
        ref.push_back(held->second);
      else
        ref.push_back(dictionary.at(w));
    }
    ref = reorder_words(std::move(ref));
    if (suffixes)
      for (std::size_t j = 0; j < ref.size(); ++j) ref[j] += positional_suffix(j);
    return ref;
  };

  auto gen_plain_corpus = [&](std::uint64_t tag, std::size_t size, ParallelCorpus& corpus) {
    for (std::size_t i = 0; i < size; ++i) {
      Rng rng(hash_combine(spec.seed, hash_combine(tag, i)));
      int len = spec.min_sentence_len +
                static_cast<int>(rng.next_below(spec.max_sentence_len - spec.min_sentence_len + 1));
      std::vector<std::string> words;
      for (int t = 0; t < len; ++t)
        words.push_back(src_words[rng.next_below(src_words.size())]);
      corpus.tgt.push_back(make_reference(words, /*use_held_targets=*/false));
      corpus.src.push_back(std::move(words));
    }
  };
  gen_plain_corpus(0x7261, spec.train_size, task.train);
  gen_plain_corpus(0xdeb0, spec.dev_size, task.dev);

  // Test sentences: regular words with held-out sources injected at distinct
  // positions; references translate those positions with the fresh targets.
  for (std::size_t i = 0; i < spec.test_size; ++i) {
    Rng rng(hash_combine(spec.seed, hash_combine(0x7e57, i)));
    int len = spec.min_sentence_len +
              static_cast<int>(rng.next_below(spec.max_sentence_len - spec.min_sentence_len + 1));
    std::vector<std::string> words;
    for (int t = 0; t < len; ++t)
      words.push_back(regular_sources[rng.next_below(regular_sources.size())]);
    if (!held_map.empty()) {
      int inject = std::min<int>(spec.terms_per_test_sentence, len);
      std::vector<int> positions(len);
      for (int p = 0; p < len; ++p) positions[p] = p;
      rng.shuffle(positions);
      std::vector<std::size_t> term_ids(held_idx.size());
      for (std::size_t t = 0; t < term_ids.size(); ++t) term_ids[t] = t;
      rng.shuffle(term_ids);
      for (int k = 0; k < inject && k < static_cast<int>(term_ids.size()); ++k)
        words[positions[k]] = task.test_terms.entries[term_ids[k]].source[0];
    }
    task.test.tgt.push_back(make_reference(words, /*use_held_targets=*/true));
    task.test.src.push_back(std::move(words));
  }
  return task;
}

bool verify_zero_shot(const TokenLines& train_refs, const TermBase& train_terms,
                      const TermBase& test_terms) {
  std::unordered_set<std::string> train_sources;
  for (const auto& e : train_terms.entries) train_sources.insert(fold_case(e.source_text()));
  for (const auto& e : test_terms.entries) {
    if (train_sources.count(fold_case(e.source_text()))) return false;
    for (const auto& ref : train_refs)
      if (phrase_occurs(e.target, ref, /*approx_last=*/false)) return false;
  }
  return true;
}

}  // namespace termmt
