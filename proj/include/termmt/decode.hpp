#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "termmt/model.hpp"

namespace termmt {

// Per-sentence scoring interface: log-probabilities of the next token given
// the emitted prefix. The production implementation wraps an encoded source
// and the transformer; tests plug in deterministic toy scorers.
class ScoreSession {
 public:
  virtual ~ScoreSession() = default;
  virtual int vocab_size() const = 0;
  virtual Eigen::VectorXf log_probs(const std::vector<int>& prefix) = 0;
};

class ModelScoreSession : public ScoreSession {
 public:
  ModelScoreSession(const Seq2SeqModel& model, const std::vector<int>& src_ids,
                    const std::vector<int>& src_factors);
  int vocab_size() const override { return model_.cfg.vocab_size; }
  Eigen::VectorXf log_probs(const std::vector<int>& prefix) override;

 private:
  const Seq2SeqModel& model_;
  net::Mat<float> memory_;
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted ids, EOS included when finished
  float log_prob = 0.0f;
  bool finished = false;
};

struct Constraint {
  std::vector<int> ids;      // target phrase after subword encoding
  std::size_t tokens_met = 0;

  bool satisfied() const { return tokens_met == ids.size(); }
};

struct ConstraintState {
  std::vector<Constraint> constraints;

  std::size_t bank() const;         // total tokens met
  std::size_t total_tokens() const;
  bool all_satisfied() const { return bank() == total_tokens(); }

  // Advances every unmet constraint on the next emitted token: progress
  // extends on a match, otherwise resets and re-checks the constraint start.
  // Satisfied constraints are frozen.
  ConstraintState advance(int next_token) const;
};

ConstraintState track_constraint_progress(const ConstraintState& state, int next_token);

struct DecodeConfig {
  int beam_size = 5;
  int max_len = 64;
  float len_norm_alpha = 0.7f;  // score = log_prob / len^alpha
  int eos_id = SubwordVocab::kEos;
  std::vector<int> banned_ids = {SubwordVocab::kPad, SubwordVocab::kBos};
};

struct DecodeResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // finished hypotheses, best first
  int steps = 0;
  std::size_t constraints_met = 0;
  std::size_t constraints_total = 0;
};

// Length-normalized beam search. With beam_size 1 this is greedy decoding.
DecodeResult beam_search(ScoreSession& session, const DecodeConfig& cfg);

// Dynamic beam allocation: candidates per step are the top-k continuations,
// every unmet constraint's next token, and the single best continuation;
// they are grouped into banks by constraint tokens met and the beam is
// divided evenly across banks, surplus slots flowing to the nearest lower
// non-empty bank first. EOS is only permitted once every constraint is
// satisfied. With no constraints this is bit-identical to beam_search.
DecodeResult constrained_beam_search_dba(ScoreSession& session,
                                         const std::vector<Constraint>& constraints,
                                         const DecodeConfig& cfg);

struct LatencyStats {
  double percentile_seconds = 0.0;
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  std::vector<double> seconds;  // per input, in run order
};

// Runs decode_one(i) sequentially for i in [0, n_inputs) at batch size 1 and
// reports the requested wall-clock percentile. Requires enough inputs for
// the percentile to be meaningful (n * (100 - p) >= 100).
LatencyStats measure_latency(const std::function<void(std::size_t)>& decode_one,
                             std::size_t n_inputs, double percentile);

// Nearest-rank percentile of a sample (p in [0, 100]).
double percentile_value(std::vector<double> values, double p);

}  // namespace termmt
