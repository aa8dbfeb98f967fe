#include "termmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "termmt/annotate.hpp"
#include "termmt/decode.hpp"
#include "termmt/text.hpp"

namespace termmt {

TermUseStats term_use_rate(const TokenLines& outputs,
                           const std::vector<std::vector<std::vector<std::string>>>& gold_terms,
                           bool approximate) {
  if (outputs.size() != gold_terms.size())
    throw std::invalid_argument("outputs and gold term lists are misaligned");
  TermUseStats stats;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (const auto& phrase : gold_terms[i]) {
      ++stats.total;
      if (phrase_occurs(phrase, outputs[i], approximate)) ++stats.used;
    }
  }
  if (stats.total == 0)
    throw std::invalid_argument("term use rate undefined: zero term annotations");
  return stats;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::uint64_t> count_ngrams(const std::vector<std::string>& tokens,
                                            std::size_t n) {
  std::map<Ngram, std::uint64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

SentenceBleuStats sentence_bleu_stats(const std::vector<std::string>& hyp,
                                      const std::vector<std::string>& ref) {
  SentenceBleuStats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    auto hyp_counts = count_ngrams(hyp, n);
    auto ref_counts = count_ngrams(ref, n);
    std::uint64_t total = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    std::uint64_t match = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) match += std::min(count, it->second);
    }
    s.match[n - 1] = match;
    s.total[n - 1] = total;
  }
  return s;
}

BleuScore bleu_from_stats(const std::vector<SentenceBleuStats>& stats) {
  std::array<std::uint64_t, 4> match{}, total{};
  std::uint64_t hyp_len = 0, ref_len = 0;
  for (const auto& s : stats) {
    for (std::size_t n = 0; n < 4; ++n) {
      match[n] += s.match[n];
      total[n] += s.total[n];
    }
    hyp_len += s.hyp_len;
    ref_len += s.ref_len;
  }

  BleuScore out;
  out.hyp_len = hyp_len;
  out.ref_len = ref_len;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = total[n] ? static_cast<double>(match[n]) / static_cast<double>(total[n]) : 0.0;
    out.precisions[n] = p;
    if (p <= 0.0)
      zero = true;
    else
      log_sum += std::log(p);
  }
  out.brevity_penalty =
      (hyp_len >= ref_len || hyp_len == 0)
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  out.score = zero ? 0.0 : 100.0 * out.brevity_penalty * std::exp(log_sum / 4.0);
  return out;
}

BleuScore bleu(const TokenLines& outputs, const TokenLines& refs) {
  if (outputs.size() != refs.size())
    throw std::invalid_argument("outputs and references are misaligned: " +
                                std::to_string(outputs.size()) + " vs " +
                                std::to_string(refs.size()));
  if (outputs.empty()) throw std::invalid_argument("empty test set");
  std::vector<SentenceBleuStats> stats;
  stats.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i)
    stats.push_back(sentence_bleu_stats(outputs[i], refs[i]));
  return bleu_from_stats(stats);
}

double paired_bootstrap(const TokenLines& outputs_a, const TokenLines& outputs_b,
                        const TokenLines& refs, std::size_t resamples, std::uint64_t seed) {
  if (outputs_a.size() != refs.size() || outputs_b.size() != refs.size())
    throw std::invalid_argument("bootstrap corpora are misaligned");
  if (resamples < 1000) throw std::invalid_argument("resamples must be >= 1000");
  const std::size_t n = refs.size();
  if (n == 0) throw std::invalid_argument("empty test set");

  std::vector<SentenceBleuStats> stats_a(n), stats_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    stats_a[i] = sentence_bleu_stats(outputs_a[i], refs[i]);
    stats_b[i] = sentence_bleu_stats(outputs_b[i], refs[i]);
  }
  const double full_a = bleu_from_stats(stats_a).score;
  const double full_b = bleu_from_stats(stats_b).score;
  const bool a_is_winner = full_a >= full_b;

  std::size_t losses = 0;
  std::vector<SentenceBleuStats> sample_a(n), sample_b(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    Rng rng(hash_combine(seed, r));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t idx = static_cast<std::size_t>(rng.next_below(n));
      sample_a[i] = stats_a[idx];
      sample_b[i] = stats_b[idx];
    }
    const double sa = bleu_from_stats(sample_a).score;
    const double sb = bleu_from_stats(sample_b).score;
    const bool winner_won = a_is_winner ? (sa > sb) : (sb > sa);
    if (!winner_won) ++losses;
  }
  return static_cast<double>(losses) / static_cast<double>(resamples);
}

namespace {

nlohmann::json system_to_json(const SystemEval& s) {
  nlohmann::json j;
  j["system"] = s.system;
  if (s.terms) {
    j["term_use_rate"] = s.terms->rate();
    j["terms_used"] = s.terms->used;
    j["terms_total"] = s.terms->total;
  }
  j["bleu"] = s.bleu.score;
  j["precisions"] = s.bleu.precisions;
  j["brevity_penalty"] = s.bleu.brevity_penalty;
  if (s.delta_vs_baseline) j["delta_vs_baseline"] = *s.delta_vs_baseline;
  if (s.p_value_vs_baseline) j["p_value_vs_baseline"] = *s.p_value_vs_baseline;
  if (s.latency_p50) j["latency_p50"] = *s.latency_p50;
  if (s.latency_p99) j["latency_p99"] = *s.latency_p99;
  return j;
}

SystemEval system_from_json(const nlohmann::json& j) {
  SystemEval s;
  s.system = j.at("system").get<std::string>();
  if (j.contains("term_use_rate")) {
    TermUseStats t;
    t.used = j.at("terms_used").get<std::size_t>();
    t.total = j.at("terms_total").get<std::size_t>();
    s.terms = t;
  }
  s.bleu.score = j.at("bleu").get<double>();
  s.bleu.precisions = j.at("precisions").get<std::array<double, 4>>();
  s.bleu.brevity_penalty = j.at("brevity_penalty").get<double>();
  if (j.contains("delta_vs_baseline")) s.delta_vs_baseline = j.at("delta_vs_baseline").get<double>();
  if (j.contains("p_value_vs_baseline"))
    s.p_value_vs_baseline = j.at("p_value_vs_baseline").get<double>();
  if (j.contains("latency_p50")) s.latency_p50 = j.at("latency_p50").get<double>();
  if (j.contains("latency_p99")) s.latency_p99 = j.at("latency_p99").get<double>();
  return s;
}

std::string format_double(double v, int prec) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(prec);
  ss << v;
  return ss.str();
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["systems"] = nlohmann::json::array();
  for (const auto& s : systems) j["systems"].push_back(system_to_json(s));
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  for (const auto& js : j.at("systems")) r.systems.push_back(system_from_json(js));
  return r;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %8s  %-16s %9s %9s\n", "Model", "Term%", "BLEU (d)",
                "P50(s)", "P99(s)");
  out << line;
  for (const auto& s : systems) {
    std::string termpct = s.terms ? format_double(s.terms->rate(), 1) : "-";
    std::string bleu_col = format_double(s.bleu.score, 1);
    if (s.delta_vs_baseline) {
      std::string mark;
      if (s.p_value_vs_baseline && *s.p_value_vs_baseline < 0.05)
        mark = *s.delta_vs_baseline > 0 ? "^" : "v";
      bleu_col += " (" + std::string(*s.delta_vs_baseline >= 0 ? "+" : "") +
                  format_double(*s.delta_vs_baseline, 1) + ")" + mark;
    }
    std::string p50 = s.latency_p50 ? format_double(*s.latency_p50, 3) : "-";
    std::string p99 = s.latency_p99 ? format_double(*s.latency_p99, 3) : "-";
    std::snprintf(line, sizeof(line), "%-18s %8s  %-16s %9s %9s\n", s.system.c_str(),
                  termpct.c_str(), bleu_col.c_str(), p50.c_str(), p99.c_str());
    out << line;
  }
  return out.str();
}

EvalReport assemble_report(const std::vector<SystemRun>& runs,
                           const std::vector<std::vector<std::vector<std::string>>>& gold_terms,
                           const TokenLines& refs, bool approximate_terms,
                           const std::string& baseline_name, std::size_t bootstrap_resamples,
                           std::uint64_t seed) {
  const SystemRun* baseline = nullptr;
  for (const auto& run : runs) {
    if (run.outputs.size() != refs.size())
      throw std::invalid_argument("system '" + run.name + "' has " +
                                  std::to_string(run.outputs.size()) + " outputs but the test set has " +
                                  std::to_string(refs.size()));
    if (run.name == baseline_name) baseline = &run;
  }

  EvalReport report;
  for (const auto& run : runs) {
    SystemEval s;
    s.system = run.name;
    s.terms = term_use_rate(run.outputs, gold_terms, approximate_terms);
    s.bleu = bleu(run.outputs, refs);
    if (baseline && run.name != baseline_name) {
      BleuScore base_bleu = bleu(baseline->outputs, refs);
      s.delta_vs_baseline = s.bleu.score - base_bleu.score;
      s.p_value_vs_baseline =
          paired_bootstrap(run.outputs, baseline->outputs, refs, bootstrap_resamples, seed);
    }
    if (run.latencies_seconds && !run.latencies_seconds->empty()) {
      // Percentiles are only meaningful with enough samples; absent otherwise.
      if (run.latencies_seconds->size() >= 2)
        s.latency_p50 = percentile_value(*run.latencies_seconds, 50.0);
      if (run.latencies_seconds->size() >= 100)
        s.latency_p99 = percentile_value(*run.latencies_seconds, 99.0);
    }
    report.systems.push_back(std::move(s));
  }
  // Baseline row first, remaining rows in run order.
  std::stable_sort(report.systems.begin(), report.systems.end(),
                   [&](const SystemEval& a, const SystemEval& b) {
                     return (a.system == baseline_name) > (b.system == baseline_name);
                   });
  return report;
}

}  // namespace termmt
