#include "termmt/subword.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "termmt/io.hpp"
#include "termmt/text.hpp"

namespace termmt {

namespace {

using Symbols = std::vector<std::string>;

Symbols word_to_symbols(const std::string& word) {
  Symbols syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kEndOfWord;
  return syms;
}

bool ends_with_eow(const std::string& s) {
  const std::string_view eow = kEndOfWord;
  return s.size() >= eow.size() && std::string_view(s).substr(s.size() - eow.size()) == eow;
}

std::string render_symbol(const std::string& internal) {
  if (ends_with_eow(internal))
    return internal.substr(0, internal.size() - std::string_view(kEndOfWord).size());
  return internal + kContinuation;
}

Symbols render_symbols(const Symbols& internal) {
  Symbols out;
  out.reserve(internal.size());
  for (const auto& s : internal) out.push_back(render_symbol(s));
  return out;
}

void merge_in_place(Symbols& syms, const std::string& left, const std::string& right) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w++] = left + right;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      ++w;
      ++r;
    }
  }
  syms.resize(w);
}

}  // namespace

std::vector<std::string> BpeModel::reachable_symbols() const {
  std::unordered_set<std::string> set;
  for (const auto& s : vocab) {
    // Alphabet characters are recoverable from the corpus vocabulary by
    // splitting each symbol back into codepoints.
    std::string body = s;
    bool eow = ends_with_eow(s);
    if (eow) body = s.substr(0, s.size() - std::string_view(kEndOfWord).size());
    auto chars = utf8_chars(body);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      bool last = (i + 1 == chars.size());
      set.insert(last && eow ? chars[i] + kEndOfWord : chars[i]);
      set.insert(chars[i]);  // mid-word fallback form
    }
    set.insert(s);
  }
  for (const auto& [l, r] : merges) set.insert(l + r);
  std::vector<std::string> out(set.begin(), set.end());
  std::sort(out.begin(), out.end());
  return out;
}

BpeModel bpe_train(const std::vector<std::vector<std::string>>& src_corpus,
                   const std::vector<std::vector<std::string>>& tgt_corpus,
                   std::size_t num_merges) {
  if (src_corpus.empty() && tgt_corpus.empty())
    throw std::invalid_argument("bpe_train: corpora are empty");

  std::unordered_map<std::string, std::uint64_t> word_freq;
  for (const auto* corpus : {&src_corpus, &tgt_corpus})
    for (const auto& sent : *corpus)
      for (const auto& w : sent) ++word_freq[w];

  struct WordState {
    Symbols syms;
    std::uint64_t freq;
  };
  std::vector<WordState> words;
  {
    // Deterministic iteration order regardless of hash layout.
    std::map<std::string, std::uint64_t> sorted(word_freq.begin(), word_freq.end());
    for (const auto& [w, f] : sorted) words.push_back({word_to_symbols(w), f});
  }

  BpeModel model;
  for (std::size_t step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::uint64_t> pair_freq;
    for (const auto& ws : words)
      for (std::size_t i = 0; i + 1 < ws.syms.size(); ++i)
        pair_freq[{ws.syms[i], ws.syms[i + 1]}] += ws.freq;
    if (pair_freq.empty()) break;

    // Highest frequency wins; ties go to the lexicographically smaller pair,
    // which std::map iteration order yields for free.
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->second < 2) break;  // nothing left worth merging

    const auto [left, right] = best->first;
    for (auto& ws : words) merge_in_place(ws.syms, left, right);
    model.merges.emplace_back(left, right);
  }

  for (const auto& ws : words)
    for (const auto& s : ws.syms) model.vocab.insert(s);
  return model;
}

namespace {

Symbols segment_internal(const std::string& word, const BpeModel& model,
                         const std::unordered_map<std::string, std::size_t>& ranks) {
  Symbols syms = word_to_symbols(word);
  if (syms.size() < 2) return syms;
  // Repeatedly apply the lowest-ranked merge present; equivalent to applying
  // the merge list in learned order.
  while (syms.size() >= 2) {
    std::size_t best_rank = ranks.size();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = ranks.find(syms[i] + "\x01" + syms[i + 1]);
      if (it != ranks.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == ranks.size()) break;
    const auto& [left, right] = model.merges[best_rank];
    merge_in_place(syms, left, right);
  }
  return syms;
}

std::unordered_map<std::string, std::size_t> build_ranks(const BpeModel& model) {
  std::unordered_map<std::string, std::size_t> ranks;
  ranks.reserve(model.merges.size());
  for (std::size_t i = 0; i < model.merges.size(); ++i) {
    const auto& [l, r] = model.merges[i];
    ranks.emplace(l + "\x01" + r, i);
  }
  return ranks;
}

}  // namespace

std::vector<std::string> bpe_segment_word(const std::string& word, const BpeModel& model) {
  if (word.empty()) return {};
  auto ranks = build_ranks(model);
  return render_symbols(segment_internal(word, model, ranks));
}

std::vector<std::string> bpe_apply_tokens(const std::vector<std::string>& tokens,
                                          const BpeModel& model) {
  auto ranks = build_ranks(model);
  std::vector<std::string> out;
  for (const auto& w : tokens) {
    auto syms = render_symbols(segment_internal(w, model, ranks));
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

FactoredSubwordSentence bpe_apply(const FactoredSentence& sentence, const BpeModel& model) {
  if (sentence.tokens.size() != sentence.factors.size())
    throw std::invalid_argument("factored sentence streams misaligned");
  auto ranks = build_ranks(model);
  FactoredSubwordSentence out;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    auto syms = render_symbols(segment_internal(sentence.tokens[i], model, ranks));
    for (auto& s : syms) {
      out.subwords.push_back(std::move(s));
      out.factors.push_back(sentence.factors[i]);
    }
  }
  return out;
}

std::vector<std::string> bpe_decode(const std::vector<std::string>& subwords) {
  std::vector<std::string> out;
  std::string current;
  const std::string_view cont = kContinuation;
  for (const auto& s : subwords) {
    bool continues = s.size() >= cont.size() &&
                     std::string_view(s).substr(s.size() - cont.size()) == cont;
    if (continues) {
      current += s.substr(0, s.size() - cont.size());
    } else {
      current += s;
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));  // dangling continuation
  return out;
}

void save_bpe_model(const BpeModel& model, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.push_back("bpe v1 " + std::to_string(model.merges.size()));
  for (const auto& [l, r] : model.merges) lines.push_back(l + " " + r);
  for (const auto& s : [&] {
         std::vector<std::string> v(model.vocab.begin(), model.vocab.end());
         std::sort(v.begin(), v.end());
         return v;
       }())
    lines.push_back("#vocab " + s);
  write_lines(path, lines);
}

BpeModel load_bpe_model(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty() || lines[0].rfind("bpe v1 ", 0) != 0)
    throw std::runtime_error("not a bpe model file: " + path.string());
  std::size_t n = std::stoull(lines[0].substr(7));
  BpeModel model;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.rfind("#vocab ", 0) == 0) {
      model.vocab.insert(line.substr(7));
      continue;
    }
    std::size_t space = line.find(' ');
    if (space == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(i + 1) +
                               ": expected `left<SPACE>right`");
    model.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  if (model.merges.size() != n)
    throw std::runtime_error(path.string() + ": merge count mismatch with header");
  return model;
}

BpeApplier::BpeApplier(const BpeModel& model) : model_(model), ranks_(build_ranks(model)) {}

const std::vector<std::string>& BpeApplier::segment(const std::string& word) {
  auto it = cache_.find(word);
  if (it != cache_.end()) return it->second;
  auto [ins, _] =
      cache_.emplace(word, render_symbols(segment_internal(word, model_, ranks_)));
  return ins->second;
}

FactoredSubwordSentence BpeApplier::apply(const FactoredSentence& sentence) {
  if (sentence.tokens.size() != sentence.factors.size())
    throw std::invalid_argument("factored sentence streams misaligned");
  FactoredSubwordSentence out;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    for (const auto& s : segment(sentence.tokens[i])) {
      out.subwords.push_back(s);
      out.factors.push_back(sentence.factors[i]);
    }
  }
  return out;
}

std::vector<std::string> BpeApplier::apply_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& w : tokens) {
    const auto& syms = segment(w);
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

}  // namespace termmt
