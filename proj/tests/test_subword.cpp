#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "termmt/io.hpp"
#include "termmt/subword.hpp"
#include "termmt/text.hpp"
#include "termmt/vocab.hpp"

using namespace termmt;

namespace {

TokenLines lines(std::initializer_list<std::string> raw) {
  TokenLines out;
  for (const auto& s : raw) out.push_back(tokenize(s));
  return out;
}

}  // namespace

TEST_CASE("bpe_train: zero merges gives a character-level model") {
  BpeModel m = bpe_train(lines({"ab ba"}), lines({"abba"}), 0);
  CHECK(m.merges.empty());
  // Vocabulary holds only single characters (with word-final markers).
  for (const auto& s : m.vocab) {
    std::string body = s;
    auto pos = body.find(kEndOfWord);
    if (pos != std::string::npos) body = body.substr(0, pos);
    CHECK(utf8_length(body) == 1);
  }
}

TEST_CASE("bpe_train: first merge on 'aaab' corpus is (a,a)") {
  // Oracle, by hand: pairs in a+a+a+b</w> are (a,a) x2 and (a,b</w>) x1 per
  // occurrence, so (a,a) wins.
  TokenLines corpus(4, tokenize("aaab"));
  BpeModel m = bpe_train(corpus, {}, 1);
  REQUIRE(m.merges.size() == 1);
  CHECK(m.merges[0].first == "a");
  CHECK(m.merges[0].second == "a");
}

TEST_CASE("bpe_train: deterministic across runs") {
  TokenLines src = lines({"the cat sat", "the hat is flat", "catters chatter"});
  TokenLines tgt = lines({"die katze sass", "der hut ist flach", "katzen plappern"});
  BpeModel a = bpe_train(src, tgt, 50);
  BpeModel b = bpe_train(src, tgt, 50);
  CHECK(a.merges == b.merges);
}

TEST_CASE("bpe_train: frequency ties break lexicographically") {
  // "xy" and "ab" both occur twice; (a,b) sorts before (x,y).
  TokenLines corpus = lines({"ab ab xy xy"});
  BpeModel m = bpe_train(corpus, {}, 1);
  REQUIRE(m.merges.size() == 1);
  CHECK(m.merges[0].first == "a");
}

TEST_CASE("bpe_apply: factors broadcast to every subword of a word") {
  TokenLines corpus = lines({"stell vertreter stellvertreter"});
  BpeModel m = bpe_train(corpus, {}, 6);
  FactoredSentence fs;
  fs.tokens = {"Stellvertreter"};
  fs.factors = {2};
  auto out = bpe_apply(fs, m);
  CHECK(out.subwords.size() >= 1);
  REQUIRE(out.subwords.size() == out.factors.size());
  for (int f : out.factors) CHECK(f == 2);
  CHECK(bpe_decode(out.subwords) == fs.tokens);
}

TEST_CASE("bpe_apply: all-zero factors stay all zero") {
  TokenLines corpus = lines({"alpha beta gamma"});
  BpeModel m = bpe_train(corpus, {}, 10);
  auto out = bpe_apply(FactoredSentence::plain(tokenize("alpha gamma beta")), m);
  for (int f : out.factors) CHECK(f == 0);
}

TEST_CASE("bpe_decode: marker join") {
  CHECK(bpe_decode({"Stell@@", "vertreter"}) == std::vector<std::string>{"Stellvertreter"});
  CHECK(bpe_decode({}).empty());
  CHECK(bpe_decode({"a@@", "b@@", "c"}) == std::vector<std::string>{"abc"});
}

TEST_CASE("bpe round trip on random sentences over the training alphabet") {
  TokenLines src = lines({"the quick brown fox", "jumps over the lazy dog", "pack my box",
                          "with five dozen jugs", "liquor quiz vexed"});
  TokenLines tgt = lines({"der schnelle braune fuchs", "springt ueber den faulen hund"});
  BpeModel m = bpe_train(src, tgt, 80);
  BpeApplier applier(m);

  std::vector<std::string> words;
  for (const auto& s : src) words.insert(words.end(), s.begin(), s.end());
  for (const auto& s : tgt) words.insert(words.end(), s.begin(), s.end());

  Rng rng(4242);
  for (int iter = 0; iter < 1000; ++iter) {
    FactoredSentence fs;
    int len = 1 + static_cast<int>(rng.next_below(12));
    for (int i = 0; i < len; ++i) {
      fs.tokens.push_back(words[rng.next_below(words.size())]);
      fs.factors.push_back(static_cast<int>(rng.next_below(3)));
    }
    auto out = applier.apply(fs);
    CHECK(bpe_decode(out.subwords) == fs.tokens);
    // Factor broadcast: count of factor-2 subwords >= count of factor-2 words.
    std::size_t words2 = 0, subs2 = 0;
    for (int f : fs.factors) words2 += (f == 2);
    for (int f : out.factors) subs2 += (f == 2);
    CHECK(subs2 >= words2);
  }
}

TEST_CASE("bpe_apply: unseen words fall back to characters and still decode") {
  TokenLines corpus = lines({"abc bcd cde"});
  BpeModel m = bpe_train(corpus, {}, 5);
  auto out = bpe_apply(FactoredSentence::plain({"xyzzy"}), m);  // chars unseen
  CHECK(bpe_decode(out.subwords) == std::vector<std::string>{"xyzzy"});
}

TEST_CASE("bpe vocabulary bound: |vocab| <= merges + alphabet") {
  TokenLines src = lines({"abcabc cabba bacca", "abc cab bca"});
  BpeModel m = bpe_train(src, {}, 20);
  std::set<std::string> alphabet;
  for (const auto& sent : src)
    for (const auto& w : sent) {
      auto chars = utf8_chars(w);
      for (std::size_t i = 0; i < chars.size(); ++i)
        alphabet.insert(i + 1 == chars.size() ? chars[i] + kEndOfWord : chars[i]);
    }
  CHECK(m.vocab.size() <= m.merges.size() + alphabet.size());
}

TEST_CASE("bpe model file round trip") {
  TokenLines src = lines({"roundtrip works fine", "trip round the works"});
  BpeModel m = bpe_train(src, {}, 30);
  auto path = std::filesystem::temp_directory_path() / "termmt_test.bpe";
  save_bpe_model(m, path);
  BpeModel m2 = load_bpe_model(path);
  CHECK(m.merges == m2.merges);
  CHECK(m.vocab == m2.vocab);
  // Identical segmentation behavior.
  CHECK(bpe_segment_word("roundtrips", m) == bpe_segment_word("roundtrips", m2));
}

TEST_CASE("vocab covers every symbol produced on unseen words") {
  TokenLines src = lines({"abcd bcda cdab dabc", "ab bc cd da"});
  BpeModel m = bpe_train(src, {}, 40);
  SubwordVocab vocab = SubwordVocab::from_bpe(m);
  Rng rng(5);
  std::string alpha = "abcd";
  for (int iter = 0; iter < 500; ++iter) {
    std::string w;
    int len = 1 + static_cast<int>(rng.next_below(9));
    for (int i = 0; i < len; ++i) w.push_back(alpha[rng.next_below(alpha.size())]);
    for (const auto& sym : bpe_segment_word(w, m))
      CHECK(vocab.lookup(sym) != SubwordVocab::kUnk);
  }
}

TEST_CASE("vocab: specials, lookup, save/load") {
  TokenLines src = lines({"aa bb"});
  BpeModel m = bpe_train(src, {}, 4);
  SubwordVocab v = SubwordVocab::from_bpe(m);
  CHECK(v.lookup("<pad>") == SubwordVocab::kPad);
  CHECK(v.lookup("<s>") == SubwordVocab::kBos);
  CHECK(v.lookup("</s>") == SubwordVocab::kEos);
  CHECK(v.lookup("never-seen-symbol") == SubwordVocab::kUnk);
  auto path = std::filesystem::temp_directory_path() / "termmt_test.vocab";
  v.save(path);
  SubwordVocab v2 = SubwordVocab::load(path);
  CHECK(v2.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(v.symbol(i) == v2.symbol(i));
}
