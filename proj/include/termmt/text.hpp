#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace termmt {

// Whitespace tokenization; runs of separators collapse, no empty tokens.
std::vector<std::string> tokenize(std::string_view line);

std::string join_tokens(const std::vector<std::string>& tokens, char sep = ' ');

// ASCII-only case folding. Bytes outside A-Z pass through untouched, so
// folding is stable on UTF-8 input (continuation bytes are >= 0x80).
std::string fold_case(std::string_view s);

bool starts_with_fold(std::string_view text, std::string_view prefix);

// Number of UTF-8 codepoints (continuation bytes are not counted).
std::size_t utf8_length(std::string_view s);

// One string per codepoint; malformed bytes fall back to single-byte symbols.
std::vector<std::string> utf8_chars(std::string_view s);

// Small deterministic hashing utilities used for seeded subset selection,
// file checksums and the toy decoders in tests.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::uint64_t fnv1a64(std::string_view bytes);

// Portable deterministic PRNG (splitmix64 stream). std::mt19937 would be
// reproducible too, but the <random> distributions are not specified
// bit-exactly; this keeps every sampled value identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, n) without modulo bias (multiply-shift reduction).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double next_double() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

}  // namespace termmt
