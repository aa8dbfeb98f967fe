#include "termmt/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace termmt {

ModelScoreSession::ModelScoreSession(const Seq2SeqModel& model, const std::vector<int>& src_ids,
                                     const std::vector<int>& src_factors)
    : model_(model), memory_(model.encode_source(src_ids, src_factors)) {}

Eigen::VectorXf ModelScoreSession::log_probs(const std::vector<int>& prefix) {
  return model_.next_log_probs(memory_, prefix);
}

std::size_t ConstraintState::bank() const {
  std::size_t n = 0;
  for (const auto& c : constraints) n += c.tokens_met;
  return n;
}

std::size_t ConstraintState::total_tokens() const {
  std::size_t n = 0;
  for (const auto& c : constraints) n += c.ids.size();
  return n;
}

ConstraintState ConstraintState::advance(int next_token) const {
  ConstraintState out = *this;
  for (auto& c : out.constraints) {
    if (c.satisfied()) continue;  // frozen
    if (c.ids[c.tokens_met] == next_token) {
      ++c.tokens_met;
    } else {
      // Reset, then re-check whether the token starts this constraint.
      c.tokens_met = (c.ids[0] == next_token) ? 1 : 0;
    }
  }
  return out;
}

ConstraintState track_constraint_progress(const ConstraintState& state, int next_token) {
  return state.advance(next_token);
}

namespace {

struct BeamHyp {
  std::vector<int> tokens;
  float log_prob = 0.0f;
  ConstraintState cs;
};

float normalized(float log_prob, std::size_t len, float alpha) {
  if (len == 0) return log_prob;
  return log_prob / std::pow(static_cast<float>(len), alpha);
}

struct Candidate {
  std::size_t hyp;   // index into the active set
  int token;
  float log_prob;    // cumulative
  std::size_t bank;  // constraint tokens met after emitting token
};

// Deterministic candidate order inside a bank.
bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.token != b.token) return a.token < b.token;
  return a.hyp < b.hyp;
}

// Beam slots divided evenly across banks 0..C; remainder goes to the highest
// banks first; quota a bank cannot fill moves to the nearest bank with spare
// candidates, lower side first.
std::vector<int> allocate_bank_quotas(int beam_size, const std::vector<int>& counts) {
  const int nb = static_cast<int>(counts.size());
  std::vector<int> quota(nb, beam_size / nb);
  for (int r = 0; r < beam_size % nb; ++r) quota[nb - 1 - r] += 1;

  for (int b = 0; b < nb; ++b) {
    int surplus = quota[b] - counts[b];
    if (surplus <= 0) continue;
    quota[b] = counts[b];
    for (int dist = 1; dist < nb && surplus > 0; ++dist) {
      for (int dir : {-1, +1}) {
        int nb_idx = b + dir * dist;
        if (nb_idx < 0 || nb_idx >= nb) continue;
        int spare = counts[nb_idx] - quota[nb_idx];
        if (spare <= 0) continue;
        int moved = std::min(surplus, spare);
        quota[nb_idx] += moved;
        surplus -= moved;
        if (surplus == 0) break;
      }
    }
  }
  return quota;
}

DecodeResult run_beam(ScoreSession& session, const std::vector<Constraint>& constraints,
                      const DecodeConfig& cfg) {
  if (cfg.beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  const int vocab = session.vocab_size();
  for (const auto& c : constraints) {
    if (c.ids.empty()) throw std::invalid_argument("empty constraint");
    for (int id : c.ids)
      if (id < 0 || id >= vocab)
        throw std::invalid_argument("constraint token out of vocabulary: " +
                                    std::to_string(id));
  }

  ConstraintState init;
  init.constraints = constraints;
  for (auto& c : init.constraints) c.tokens_met = 0;
  const std::size_t total_c = init.total_tokens();

  std::vector<BeamHyp> active{BeamHyp{{}, 0.0f, init}};
  std::vector<BeamHyp> finished;
  int steps = 0;

  for (int step = 0; step < cfg.max_len && !active.empty(); ++step) {
    ++steps;
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < active.size(); ++h) {
      Eigen::VectorXf lp = session.log_probs(active[h].tokens);
      for (int banned : cfg.banned_ids)
        if (banned >= 0 && banned < vocab) lp[banned] = -1e30f;

      // (a) top beam_size continuations (covers (c), the single best).
      std::vector<int> order(vocab);
      for (int v = 0; v < vocab; ++v) order[v] = v;
      const int k = std::min(cfg.beam_size, vocab);
      std::partial_sort(order.begin(), order.begin() + k, order.end(),
                        [&](int a, int b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      std::vector<int> tokens(order.begin(), order.begin() + k);
      // (b) the next token of every unmet constraint.
      for (const auto& c : active[h].cs.constraints)
        if (!c.satisfied()) tokens.push_back(c.ids[c.tokens_met]);
      std::sort(tokens.begin(), tokens.end());
      tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());

      for (int tok : tokens) {
        ConstraintState next_cs = active[h].cs.advance(tok);
        if (tok == cfg.eos_id && !next_cs.all_satisfied()) continue;
        candidates.push_back(
            {h, tok, active[h].log_prob + lp[tok], next_cs.bank()});
      }
    }
    if (candidates.empty()) break;

    // Group into banks by constraint tokens met and allocate the beam.
    const int nb = static_cast<int>(total_c) + 1;
    std::vector<std::vector<Candidate>> banks(nb);
    for (auto& c : candidates) banks[c.bank].push_back(c);
    std::vector<int> counts(nb);
    for (int b = 0; b < nb; ++b) {
      std::sort(banks[b].begin(), banks[b].end(), candidate_less);
      counts[b] = static_cast<int>(banks[b].size());
    }
    std::vector<int> quota = allocate_bank_quotas(cfg.beam_size, counts);

    std::vector<Candidate> selected;
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < quota[b]; ++i) selected.push_back(banks[b][i]);
    std::sort(selected.begin(), selected.end(), candidate_less);

    std::vector<BeamHyp> next_active;
    for (const auto& cand : selected) {
      BeamHyp next;
      next.tokens = active[cand.hyp].tokens;
      next.tokens.push_back(cand.token);
      next.log_prob = cand.log_prob;
      next.cs = active[cand.hyp].cs.advance(cand.token);
      if (cand.token == cfg.eos_id)
        finished.push_back(std::move(next));
      else
        next_active.push_back(std::move(next));
    }
    active = std::move(next_active);

    // Early stop: no active hypothesis can beat the best finished one even
    // with a free extension to max_len.
    if (!finished.empty() && !active.empty()) {
      float best_done = -1e30f;
      for (const auto& f : finished)
        best_done = std::max(best_done,
                             normalized(f.log_prob, f.tokens.size(), cfg.len_norm_alpha));
      float best_possible = -1e30f;
      for (const auto& a : active)
        best_possible =
            std::max(best_possible, normalized(a.log_prob, static_cast<std::size_t>(cfg.max_len),
                                               cfg.len_norm_alpha));
      if (best_done >= best_possible) break;
    }
  }

  auto hyp_score = [&](const BeamHyp& h) {
    return normalized(h.log_prob, h.tokens.size(), cfg.len_norm_alpha);
  };
  std::sort(finished.begin(), finished.end(), [&](const BeamHyp& a, const BeamHyp& b) {
    float sa = hyp_score(a), sb = hyp_score(b);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });

  DecodeResult result;
  result.steps = steps;
  result.constraints_total = total_c;
  for (const auto& f : finished) {
    Hypothesis h;
    h.tokens = f.tokens;
    h.log_prob = f.log_prob;
    h.finished = true;
    result.nbest.push_back(std::move(h));
  }

  if (!finished.empty()) {
    result.best = result.nbest.front();
    result.constraints_met = total_c;  // EOS was gated on full satisfaction
  } else if (!active.empty()) {
    // Fall back to the unfinished hypothesis with the most constraint tokens
    // met; score breaks ties.
    const BeamHyp* best = &active[0];
    for (const auto& a : active) {
      if (a.cs.bank() != best->cs.bank()
              ? a.cs.bank() > best->cs.bank()
              : hyp_score(a) > hyp_score(*best))
        best = &a;
    }
    result.best.tokens = best->tokens;
    result.best.log_prob = best->log_prob;
    result.best.finished = false;
    result.constraints_met = best->cs.bank();
  }
  return result;
}

}  // namespace

DecodeResult beam_search(ScoreSession& session, const DecodeConfig& cfg) {
  return run_beam(session, {}, cfg);
}

DecodeResult constrained_beam_search_dba(ScoreSession& session,
                                         const std::vector<Constraint>& constraints,
                                         const DecodeConfig& cfg) {
  return run_beam(session, constraints, cfg);
}

double percentile_value(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("no samples");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile out of range");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  return values[rank - 1];
}

LatencyStats measure_latency(const std::function<void(std::size_t)>& decode_one,
                             std::size_t n_inputs, double percentile) {
  const double tail = 100.0 - percentile;
  if (tail > 0.0 && static_cast<double>(n_inputs) * tail < 100.0)
    throw std::invalid_argument("not enough inputs for a stable P" +
                                std::to_string(static_cast<int>(percentile)) + ": have " +
                                std::to_string(n_inputs));
  if (n_inputs == 0) throw std::invalid_argument("no inputs");

  LatencyStats stats;
  stats.seconds.reserve(n_inputs);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    decode_one(i);
    auto t1 = std::chrono::steady_clock::now();
    stats.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  double sum = 0.0;
  for (double s : stats.seconds) sum += s;
  stats.mean_seconds = sum / static_cast<double>(n_inputs);
  stats.median_seconds = percentile_value(stats.seconds, 50.0);
  stats.percentile_seconds = percentile_value(stats.seconds, percentile);
  return stats;
}

}  // namespace termmt
