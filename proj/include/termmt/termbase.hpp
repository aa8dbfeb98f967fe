#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace termmt {

struct TermEntry {
  std::vector<std::string> source;  // non-empty word tokens
  std::vector<std::string> target;  // non-empty word tokens
  std::string id;                   // stable, content-derived

  std::string source_text() const;
  std::string target_text() const;
  bool operator==(const TermEntry& other) const {
    return source == other.source && target == other.target;
  }
};

struct TermBase {
  std::string name;
  std::vector<TermEntry> entries;

  std::size_t size() const { return entries.size(); }
};

struct FrequencyList {
  // Most frequent first; counts non-increasing, ties broken lexicographically.
  std::vector<std::pair<std::string, std::uint64_t>> items;

  bool contains(const std::string& folded_word) const;
};

TermEntry make_entry(std::vector<std::string> source, std::vector<std::string> target);

// UTF-8 TSV, `source<TAB>target` per line, no header. Exact duplicates
// collapse; malformed lines raise with their line number.
TermBase ingest_termbase(const std::filesystem::path& path, const std::string& name);
TermBase termbase_from_lines(const std::vector<std::string>& lines, const std::string& name);
void save_termbase(const TermBase& tb, const std::filesystem::path& path);

// Case-folded word counts over the source corpus, top_n kept.
FrequencyList build_frequency_list(const std::filesystem::path& corpus, std::size_t top_n);
FrequencyList frequency_list_from_tokens(
    const std::vector<std::vector<std::string>>& sentences, std::size_t top_n);
void save_frequency_list(const FrequencyList& freq, const std::filesystem::path& path);
FrequencyList load_frequency_list(const std::filesystem::path& path);

// Drops single-word entries found (case-folded) in the frequency list and
// entries whose source side has fewer than min_chars codepoints in total.
TermBase filter_termbase(const TermBase& tb, const FrequencyList& freq,
                         std::size_t min_chars = 2);

// Disjoint split with no source phrase (case-folded) shared between halves;
// entries with equal sources travel together. Deterministic given seed.
std::pair<TermBase, TermBase> split_termbase(const TermBase& tb, double test_fraction,
                                             std::uint64_t seed);

}  // namespace termmt
