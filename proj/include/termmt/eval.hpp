#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "termmt/io.hpp"

namespace termmt {

struct TermUseStats {
  std::size_t used = 0;
  std::size_t total = 0;
  double rate() const { return 100.0 * static_cast<double>(used) / static_cast<double>(total); }
};

// Numerator: (sentence, term) pairs whose target phrase occurs in the output
// as a contiguous token subsequence (final token by the prefix rule when
// approximate). Denominator: total annotations. Errors on zero annotations.
TermUseStats term_use_rate(const TokenLines& outputs,
                           const std::vector<std::vector<std::vector<std::string>>>& gold_terms,
                           bool approximate);

struct BleuScore {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

// Per-sentence sufficient statistics so corpus BLEU composes under
// resampling.
struct SentenceBleuStats {
  std::array<std::uint64_t, 4> match{};
  std::array<std::uint64_t, 4> total{};
  std::uint64_t hyp_len = 0;
  std::uint64_t ref_len = 0;
};

SentenceBleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                                      const std::vector<std::string>& ref);
BleuScore bleu_from_stats(const std::vector<SentenceBleuStats>& stats);

// Corpus-level BLEU-4: geometric mean of clipped n-gram precisions times the
// brevity penalty; case-sensitive on tokens, no smoothing.
BleuScore bleu(const TokenLines& outputs, const TokenLines& refs);

// One-sided paired bootstrap on sentence indices: p-value that the observed
// winner on the full test set fails to win a resample. Deterministic given
// seed; resample randomness derives from (seed, resample index).
double paired_bootstrap(const TokenLines& outputs_a, const TokenLines& outputs_b,
                        const TokenLines& refs, std::size_t resamples, std::uint64_t seed);

struct SystemEval {
  std::string system;
  std::optional<TermUseStats> terms;
  BleuScore bleu;
  std::optional<double> delta_vs_baseline;
  std::optional<double> p_value_vs_baseline;
  std::optional<double> latency_p50;
  std::optional<double> latency_p99;
};

struct EvalReport {
  std::vector<SystemEval> systems;  // baseline first when present

  std::string to_json() const;  // machine-readable, stable key order
  static EvalReport from_json(const std::string& text);
  std::string to_table() const;  // aligned plain-text table
};

struct SystemRun {
  std::string name;
  TokenLines outputs;
  std::optional<std::vector<double>> latencies_seconds;
};

// Scores every system against the shared gold data; the baseline row (by
// name) carries no delta or p-value, all others are compared against it.
EvalReport assemble_report(const std::vector<SystemRun>& runs,
                           const std::vector<std::vector<std::vector<std::string>>>& gold_terms,
                           const TokenLines& refs, bool approximate_terms,
                           const std::string& baseline_name, std::size_t bootstrap_resamples,
                           std::uint64_t seed);

}  // namespace termmt
