#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "termmt/subword.hpp"

namespace termmt {

// Shared source/target subword vocabulary with reserved specials.
class SubwordVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  SubwordVocab() = default;

  // Covers every rendered symbol the model can produce on any input over the
  // training alphabet, so unseen words stay in-vocabulary after segmentation.
  static SubwordVocab from_bpe(const BpeModel& model);

  int size() const { return static_cast<int>(id_to_sym_.size()); }
  int lookup(const std::string& sym) const;  // kUnk on miss
  const std::string& symbol(int id) const { return id_to_sym_.at(id); }

  std::vector<int> encode(const std::vector<std::string>& subwords) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;  // specials skipped

  void save(const std::filesystem::path& path) const;
  static SubwordVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_sym_;
  std::unordered_map<std::string, int> sym_to_id_;
  void rebuild_index();
};

}  // namespace termmt
