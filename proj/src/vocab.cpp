#include "termmt/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "termmt/io.hpp"

namespace termmt {

namespace {
const char* kSpecials[] = {"<pad>", "<s>", "</s>", "<unk>"};
}

SubwordVocab SubwordVocab::from_bpe(const BpeModel& model) {
  SubwordVocab v;
  for (const char* s : kSpecials) v.id_to_sym_.emplace_back(s);

  auto internal = model.reachable_symbols();
  std::vector<std::string> rendered;
  rendered.reserve(internal.size());
  const std::string eow = kEndOfWord;
  for (const auto& s : internal) {
    if (s.size() >= eow.size() && s.compare(s.size() - eow.size(), eow.size(), eow) == 0)
      rendered.push_back(s.substr(0, s.size() - eow.size()));
    else
      rendered.push_back(s + kContinuation);
  }
  std::sort(rendered.begin(), rendered.end());
  rendered.erase(std::unique(rendered.begin(), rendered.end()), rendered.end());
  for (auto& s : rendered) v.id_to_sym_.push_back(std::move(s));
  v.rebuild_index();
  return v;
}

void SubwordVocab::rebuild_index() {
  sym_to_id_.clear();
  for (int i = 0; i < static_cast<int>(id_to_sym_.size()); ++i)
    sym_to_id_.emplace(id_to_sym_[i], i);
}

int SubwordVocab::lookup(const std::string& sym) const {
  auto it = sym_to_id_.find(sym);
  return it == sym_to_id_.end() ? kUnk : it->second;
}

std::vector<int> SubwordVocab::encode(const std::vector<std::string>& subwords) const {
  std::vector<int> ids;
  ids.reserve(subwords.size());
  for (const auto& s : subwords) ids.push_back(lookup(s));
  return ids;
}

std::vector<std::string> SubwordVocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (id < 0 || id >= size()) throw std::out_of_range("subword id out of range");
    out.push_back(id_to_sym_[id]);
  }
  return out;
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  write_lines(path, id_to_sym_);
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  SubwordVocab v;
  v.id_to_sym_ = read_lines(path);
  if (v.id_to_sym_.size() < 4 || v.id_to_sym_[0] != kSpecials[0])
    throw std::runtime_error("not a vocabulary file: " + path.string());
  v.rebuild_index();
  return v;
}

}  // namespace termmt
