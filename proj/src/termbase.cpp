#include "termmt/termbase.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "termmt/io.hpp"
#include "termmt/text.hpp"

namespace termmt {

std::string TermEntry::source_text() const { return join_tokens(source); }
std::string TermEntry::target_text() const { return join_tokens(target); }

TermEntry make_entry(std::vector<std::string> source, std::vector<std::string> target) {
  if (source.empty() || target.empty())
    throw std::invalid_argument("term entry sides must be non-empty");
  for (const auto& t : source)
    if (t.empty()) throw std::invalid_argument("empty token in term source");
  for (const auto& t : target)
    if (t.empty()) throw std::invalid_argument("empty token in term target");
  TermEntry e;
  e.source = std::move(source);
  e.target = std::move(target);
  e.id = e.source_text() + "\t" + e.target_text();
  return e;
}

bool FrequencyList::contains(const std::string& folded_word) const {
  for (const auto& [word, count] : items)
    if (word == folded_word) return true;
  return false;
}

TermBase termbase_from_lines(const std::vector<std::string>& lines, const std::string& name) {
  TermBase tb;
  tb.name = name;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 0;
  for (const auto& line : lines) {
    ++lineno;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw std::runtime_error("term base line " + std::to_string(lineno) +
                               ": expected exactly one tab separator");
    auto src = tokenize(std::string_view(line).substr(0, tab));
    auto tgt = tokenize(std::string_view(line).substr(tab + 1));
    if (src.empty() || tgt.empty())
      throw std::runtime_error("term base line " + std::to_string(lineno) +
                               ": empty source or target side");
    TermEntry e = make_entry(std::move(src), std::move(tgt));
    if (seen.insert(e.id).second) tb.entries.push_back(std::move(e));
  }
  if (tb.entries.empty()) throw std::runtime_error("term base is empty");
  return tb;
}

TermBase ingest_termbase(const std::filesystem::path& path, const std::string& name) {
  auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("term base file is empty: " + path.string());
  try {
    return termbase_from_lines(lines, name);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void save_termbase(const TermBase& tb, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(tb.entries.size());
  for (const auto& e : tb.entries)
    lines.push_back(e.source_text() + "\t" + e.target_text());
  write_lines(path, lines);
}

FrequencyList frequency_list_from_tokens(
    const std::vector<std::vector<std::string>>& sentences, std::size_t top_n) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) ++counts[fold_case(tok)];
  if (counts.empty()) throw std::runtime_error("corpus is empty");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_n) ranked.resize(top_n);

  FrequencyList out;
  out.items = std::move(ranked);
  return out;
}

FrequencyList build_frequency_list(const std::filesystem::path& corpus, std::size_t top_n) {
  return frequency_list_from_tokens(read_token_file(corpus), top_n);
}

void save_frequency_list(const FrequencyList& freq, const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for (const auto& [word, count] : freq.items)
    lines.push_back(word + "\t" + std::to_string(count));
  write_lines(path, lines);
}

FrequencyList load_frequency_list(const std::filesystem::path& path) {
  FrequencyList out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected word<TAB>count");
    out.items.emplace_back(line.substr(0, tab),
                           std::stoull(line.substr(tab + 1)));
  }
  for (std::size_t i = 1; i < out.items.size(); ++i)
    if (out.items[i].second > out.items[i - 1].second)
      throw std::runtime_error(path.string() + ": counts must be non-increasing");
  return out;
}

TermBase filter_termbase(const TermBase& tb, const FrequencyList& freq,
                         std::size_t min_chars) {
  if (min_chars < 1) throw std::invalid_argument("min_chars must be >= 1");
  std::unordered_set<std::string> frequent;
  for (const auto& [word, count] : freq.items) frequent.insert(word);

  TermBase out;
  out.name = tb.name;
  for (const auto& e : tb.entries) {
    // The frequency filter targets frequent words, not phrases: multi-word
    // sources are only subject to the length rule.
    if (e.source.size() == 1 && frequent.count(fold_case(e.source[0]))) continue;
    std::size_t chars = 0;
    for (const auto& tok : e.source) chars += utf8_length(tok);
    if (chars < min_chars) continue;
    out.entries.push_back(e);
  }
  return out;
}

std::pair<TermBase, TermBase> split_termbase(const TermBase& tb, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0, 1)");

  // Group entries by folded source so identical sources travel together.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < tb.entries.size(); ++i)
    groups[fold_case(tb.entries[i].source_text())].push_back(i);

  std::vector<const std::vector<std::size_t>*> order;
  order.reserve(groups.size());
  for (const auto& [key, idxs] : groups) order.push_back(&idxs);

  std::size_t n_groups = order.size();
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_groups)));
  if (n_groups < 2 || n_test == 0 || n_test >= n_groups)
    throw std::runtime_error("term base too small to honor test_fraction");

  Rng rng(seed);
  rng.shuffle(order);

  TermBase train, test;
  train.name = tb.name + ".train";
  test.name = tb.name + ".test";
  for (std::size_t g = 0; g < n_groups; ++g) {
    TermBase& half = (g < n_test) ? test : train;
    for (std::size_t idx : *order[g]) half.entries.push_back(tb.entries[idx]);
  }
  // Restore ingest order within each half for stable output.
  auto by_id = [&](const TermEntry& a, const TermEntry& b) { return a.id < b.id; };
  std::sort(train.entries.begin(), train.entries.end(), by_id);
  std::sort(test.entries.begin(), test.entries.end(), by_id);
  return {std::move(train), std::move(test)};
}

}  // namespace termmt
