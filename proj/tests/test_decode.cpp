#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "termmt/decode.hpp"
#include "termmt/text.hpp"

using namespace termmt;

namespace {

// Deterministic hash-scored toy model: log-probs depend on (salt, prefix).
// Same interface as the real model session, cheap enough for brute force.
class ToyScorer : public ScoreSession {
 public:
  ToyScorer(int vocab, std::uint64_t salt) : vocab_(vocab), salt_(salt) {}

  int vocab_size() const override { return vocab_; }

  Eigen::VectorXf log_probs(const std::vector<int>& prefix) override {
    std::uint64_t h = salt_;
    for (int t : prefix) h = hash_combine(h, static_cast<std::uint64_t>(t) + 17);
    Eigen::VectorXf logits(vocab_);
    for (int v = 0; v < vocab_; ++v) {
      std::uint64_t u = splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (v + 1)));
      logits[v] = static_cast<float>(4.0 * (static_cast<double>(u >> 11) * 0x1.0p-53));
    }
    float mx = logits.maxCoeff();
    float lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
  }

 private:
  int vocab_;
  std::uint64_t salt_;
};

float normalized_score(float log_prob, std::size_t len, float alpha) {
  return log_prob / std::pow(static_cast<float>(len), alpha);
}

// Exhaustive search over all token sequences up to max_len (content tokens
// then EOS), honoring the same length normalization and banned ids as the
// decoder. Constraints must appear as contiguous subsequences.
struct BruteForceResult {
  std::vector<int> tokens;
  float norm_score = -1e30f;
  bool found = false;
};

bool contains_contiguous(const std::vector<int>& seq, const std::vector<int>& phrase) {
  if (phrase.empty() || phrase.size() > seq.size()) return phrase.empty();
  for (std::size_t s = 0; s + phrase.size() <= seq.size(); ++s) {
    bool ok = true;
    for (std::size_t j = 0; j < phrase.size() && ok; ++j) ok = seq[s + j] == phrase[j];
    if (ok) return true;
  }
  return false;
}

void brute_rec(ScoreSession& session, const DecodeConfig& cfg,
               const std::vector<std::vector<int>>& constraints, std::vector<int>& prefix,
               float log_prob, BruteForceResult& best) {
  Eigen::VectorXf lp = session.log_probs(prefix);
  // Finish here: sequence = prefix + EOS.
  {
    bool all_ok = true;
    for (const auto& c : constraints)
      if (!contains_contiguous(prefix, c)) all_ok = false;
    if (all_ok) {
      float total = log_prob + lp[cfg.eos_id];
      float score = normalized_score(total, prefix.size() + 1, cfg.len_norm_alpha);
      std::vector<int> full = prefix;
      full.push_back(cfg.eos_id);
      if (!best.found || score > best.norm_score ||
          (score == best.norm_score && full < best.tokens)) {
        best.found = true;
        best.norm_score = score;
        best.tokens = full;
      }
    }
  }
  if (static_cast<int>(prefix.size()) + 1 >= cfg.max_len) return;
  for (int v = 0; v < session.vocab_size(); ++v) {
    if (v == cfg.eos_id) continue;
    bool banned = false;
    for (int b : cfg.banned_ids) banned |= (v == b);
    if (banned) continue;
    prefix.push_back(v);
    brute_rec(session, cfg, constraints, prefix, log_prob + lp[v], best);
    prefix.pop_back();
  }
}

BruteForceResult brute_force_best(ScoreSession& session, const DecodeConfig& cfg,
                                  const std::vector<std::vector<int>>& constraints) {
  BruteForceResult best;
  std::vector<int> prefix;
  brute_rec(session, cfg, constraints, prefix, 0.0f, best);
  return best;
}

// Saturating beam: wide enough that per-bank quotas never prune anything.
int saturating_beam(int vocab, int max_len, std::size_t constraint_tokens) {
  double width = 1.0;
  double total = 1.0;
  for (int t = 0; t < max_len; ++t) {
    width *= vocab;
    total += width;
    if (total > 2e6) break;
  }
  double per_bank = std::min(total, 2e6);
  return static_cast<int>(per_bank) * static_cast<int>(constraint_tokens + 1);
}

}  // namespace

TEST_CASE("constraint tracking: advance, reset-and-recheck, frozen") {
  ConstraintState st;
  st.constraints.push_back({{7, 8}, 0});

  auto s1 = track_constraint_progress(st, 7);
  CHECK(s1.constraints[0].tokens_met == 1);
  auto s2 = track_constraint_progress(s1, 8);
  CHECK(s2.constraints[0].tokens_met == 2);
  CHECK(s2.all_satisfied());

  // Mismatch mid-constraint resets, then re-checks the constraint start.
  auto r = track_constraint_progress(s1, 7);
  CHECK(r.constraints[0].tokens_met == 1);
  auto r2 = track_constraint_progress(s1, 9);
  CHECK(r2.constraints[0].tokens_met == 0);

  // Satisfied constraints are frozen.
  auto f = track_constraint_progress(s2, 9);
  CHECK(f.constraints[0].tokens_met == 2);
  auto f2 = track_constraint_progress(s2, 7);
  CHECK(f2.constraints[0].tokens_met == 2);
}

TEST_CASE("beam_search: beam 1 equals greedy argmax rollout") {
  for (std::uint64_t salt = 0; salt < 20; ++salt) {
    ToyScorer scorer(7, salt);
    DecodeConfig cfg;
    cfg.beam_size = 1;
    cfg.max_len = 8;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    auto result = beam_search(scorer, cfg);

    std::vector<int> greedy;
    for (int step = 0; step < cfg.max_len; ++step) {
      Eigen::VectorXf lp = scorer.log_probs(greedy);
      lp[0] = lp[1] = -1e30f;
      int best = 0;
      for (int v = 1; v < 7; ++v)
        if (lp[v] > lp[best]) best = v;
      greedy.push_back(best);
      if (best == cfg.eos_id) break;
    }
    CHECK(result.best.tokens == greedy);
  }
}

TEST_CASE("beam_search: saturating beam matches exhaustive search") {
  for (std::uint64_t salt = 100; salt < 110; ++salt) {
    ToyScorer scorer(6, salt);
    DecodeConfig cfg;
    cfg.beam_size = saturating_beam(6, 4, 0);
    cfg.max_len = 4;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    auto result = beam_search(scorer, cfg);
    auto oracle = brute_force_best(scorer, cfg, {});
    REQUIRE(oracle.found);
    CHECK(result.best.tokens == oracle.tokens);
  }
}

TEST_CASE("beam_search: larger beams never lower the returned score") {
  for (std::uint64_t salt = 40; salt < 48; ++salt) {
    ToyScorer scorer(8, salt);
    DecodeConfig cfg;
    cfg.max_len = 6;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    float prev = -1e30f;
    for (int beam = 1; beam <= 8; ++beam) {
      cfg.beam_size = beam;
      auto r = beam_search(scorer, cfg);
      float score = normalized_score(r.best.log_prob, r.best.tokens.size(), cfg.len_norm_alpha);
      CHECK(score >= prev - 1e-6f);
      prev = std::max(prev, score);
    }
  }
}

TEST_CASE("dba: zero constraints is bit-identical to beam_search") {
  for (std::uint64_t salt = 0; salt < 50; ++salt) {
    ToyScorer s1(9, salt), s2(9, salt);
    DecodeConfig cfg;
    cfg.beam_size = 4;
    cfg.max_len = 7;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    auto a = beam_search(s1, cfg);
    auto b = constrained_beam_search_dba(s2, {}, cfg);
    CHECK(a.best.tokens == b.best.tokens);
    CHECK(a.best.log_prob == b.best.log_prob);  // bitwise
    REQUIRE(a.nbest.size() == b.nbest.size());
    for (std::size_t i = 0; i < a.nbest.size(); ++i) {
      CHECK(a.nbest[i].tokens == b.nbest[i].tokens);
      CHECK(a.nbest[i].log_prob == b.nbest[i].log_prob);
    }
  }
}

TEST_CASE("dba: single 1-token constraint is always satisfied") {
  for (std::uint64_t salt = 0; salt < 100; ++salt) {
    ToyScorer scorer(8, salt);
    DecodeConfig cfg;
    cfg.beam_size = 5;
    cfg.max_len = 10;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    int token = 3 + static_cast<int>(salt % 5);
    Constraint c;
    c.ids = {token};
    auto r = constrained_beam_search_dba(scorer, {c}, cfg);
    // A finished hypothesis implies satisfaction; the unfinished fallback
    // maximizes constraint tokens met, which for a 1-token constraint also
    // means the token was emitted.
    CHECK(contains_contiguous(r.best.tokens, {token}));
    CHECK(r.constraints_met == 1);
  }
}

TEST_CASE("dba: finished output never misses a constraint (invariant)") {
  for (std::uint64_t salt = 200; salt < 260; ++salt) {
    ToyScorer scorer(7, salt);
    DecodeConfig cfg;
    cfg.beam_size = 5;
    cfg.max_len = 12;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    std::vector<Constraint> cs;
    cs.push_back({{3, 4}, 0});
    cs.push_back({{5}, 0});
    auto r = constrained_beam_search_dba(scorer, cs, cfg);
    if (r.best.finished) {
      CHECK(contains_contiguous(r.best.tokens, {3, 4}));
      CHECK(contains_contiguous(r.best.tokens, {5}));
      CHECK(r.constraints_met == 3);
    }
  }
}

TEST_CASE("dba: out-of-vocabulary constraint errors") {
  ToyScorer scorer(6, 1);
  DecodeConfig cfg;
  Constraint c;
  c.ids = {99};
  CHECK_THROWS_AS(constrained_beam_search_dba(scorer, {c}, cfg), std::invalid_argument);
  Constraint empty;
  CHECK_THROWS_AS(constrained_beam_search_dba(scorer, {empty}, cfg), std::invalid_argument);
}

TEST_CASE("dba: saturating beam equals the brute-force constrained optimum") {
  // Smaller sweep here; the acceptance suite runs the full 50-model version.
  int models = 0;
  for (std::uint64_t salt = 300; models < 12; ++salt) {
    Rng rng(salt);
    int vocab = 5 + static_cast<int>(rng.next_below(2));  // 5..6
    int max_len = 4 + static_cast<int>(rng.next_below(2));  // 4..5
    int n_constraints = 1 + static_cast<int>(rng.next_below(2));
    std::vector<std::vector<int>> phrases;
    std::vector<Constraint> cs;
    for (int c = 0; c < n_constraints; ++c) {
      int len = 1 + static_cast<int>(rng.next_below(2));
      std::vector<int> phrase;
      for (int i = 0; i < len; ++i) phrase.push_back(3 + static_cast<int>(rng.next_below(vocab - 3)));
      phrases.push_back(phrase);
      cs.push_back({phrase, 0});
    }
    std::size_t total_tokens = 0;
    for (const auto& p : phrases) total_tokens += p.size();
    if (static_cast<int>(total_tokens) + 1 > max_len) continue;  // unsatisfiable
    ++models;

    ToyScorer scorer(vocab, salt * 7919);
    DecodeConfig cfg;
    cfg.max_len = max_len;
    cfg.banned_ids = {0, 1};
    cfg.eos_id = 2;
    cfg.beam_size = saturating_beam(vocab, max_len, total_tokens);

    auto oracle = brute_force_best(scorer, cfg, phrases);
    auto result = constrained_beam_search_dba(scorer, cs, cfg);
    REQUIRE(oracle.found);
    REQUIRE(result.best.finished);
    CHECK(result.best.tokens == oracle.tokens);
  }
}

TEST_CASE("dba: bank equals the sum of met constraint tokens along any path") {
  ConstraintState st;
  st.constraints.push_back({{3, 4, 3}, 0});
  st.constraints.push_back({{5, 5}, 0});
  Rng rng(17);
  for (int path = 0; path < 200; ++path) {
    ConstraintState s = st;
    for (int step = 0; step < 12; ++step) {
      int tok = 3 + static_cast<int>(rng.next_below(4));
      s = s.advance(tok);
      std::size_t manual = 0;
      for (const auto& c : s.constraints) manual += c.tokens_met;
      CHECK(s.bank() == manual);
      for (const auto& c : s.constraints) CHECK(c.tokens_met <= c.ids.size());
    }
  }
}

TEST_CASE("measure_latency: degenerate distribution returns the constant") {
  auto stats = measure_latency(
      [](std::size_t) { std::this_thread::sleep_for(std::chrono::milliseconds(2)); }, 4, 50.0);
  CHECK(stats.percentile_seconds >= 0.0015);
  CHECK(stats.percentile_seconds < 0.1);
  CHECK(stats.seconds.size() == 4);
}

TEST_CASE("measure_latency: too few inputs for the percentile errors") {
  CHECK_THROWS_AS(measure_latency([](std::size_t) {}, 50, 99.0), std::invalid_argument);
  CHECK_NOTHROW(measure_latency([](std::size_t) {}, 100, 99.0));
  CHECK_THROWS_AS(measure_latency([](std::size_t) {}, 1, 50.0), std::invalid_argument);
}

TEST_CASE("percentile_value: nearest rank") {
  std::vector<double> v = {5, 1, 4, 2, 3};
  CHECK(percentile_value(v, 50.0) == 3.0);
  CHECK(percentile_value(v, 100.0) == 5.0);
  CHECK(percentile_value(v, 1.0) == 1.0);
}
