#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "termmt/annotate.hpp"
#include "termmt/eval.hpp"
#include "termmt/model_config.hpp"
#include "termmt/synthdata.hpp"

namespace termmt {

// One system mode per run: baseline | append | replace | constrained.
struct ExperimentConfig {
  std::string mode = "baseline";
  std::string work_dir;

  // Data: either an inline synthetic task spec or file paths.
  std::optional<SynthTaskSpec> synth;
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string test_src, test_tgt;
  std::string termbase_path;  // ingested, filtered and split when given
  std::size_t freq_top_n = 500;
  std::size_t freq_min_chars = 2;
  double termbase_test_fraction = 0.2;

  ModelConfig model;
  std::size_t num_merges = 600;
  double augment_fraction = 0.1;
  int beam_size = 5;
  int max_decode_len = 0;  // 0: derived from the source length
  std::string eval_regime = "exact";  // exact | approximate reference match
  bool measure_latency = false;  // wall-clock fields are inherently non-reproducible
  std::size_t bootstrap_resamples = 1000;
  std::string reuse_checkpoint;   // skip training and load this checkpoint
  std::string baseline_outputs;   // hyp file for delta / p-value in solo runs
  std::uint64_t seed = 1;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  void validate() const;
};

struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error("stage " + stage_name + ": " + what), stage(std::move(stage_name)) {}
};

struct ExperimentResult {
  SystemEval eval;
  std::string report_json;
  std::filesystem::path work_dir;
  std::filesystem::path report_path;
  std::filesystem::path manifest_path;
  std::filesystem::path checkpoint_path;
  std::filesystem::path outputs_path;
  TokenLines outputs;                            // decoded word tokens
  std::vector<double> latencies_seconds;         // per test sentence (decode only)
  std::vector<std::size_t> constraints_per_sentence;
  std::vector<std::vector<std::vector<std::string>>> gold_terms;
  TokenLines test_refs;
  std::size_t train_pairs = 0;
  std::size_t annotated_pairs = 0;
};

// Full chain for one system: data -> term bases -> annotate -> bpe -> train
// -> decode -> evaluate -> report + manifest. Stage failures raise
// StageError; partial outputs stay in the work directory.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SuiteResult {
  EvalReport report;
  std::map<std::string, ExperimentResult> runs;
  std::filesystem::path report_json_path;
  std::filesystem::path report_table_path;
};

// Runs several modes on the same data and config (each in its own
// subdirectory), reusing the baseline checkpoint for constrained decoding,
// and assembles a combined report with significance marks.
SuiteResult run_experiment_suite(const ExperimentConfig& base,
                                 const std::vector<std::string>& modes);

// Exclusive ownership of a work directory via a lock file.
class WorkDirLock {
 public:
  explicit WorkDirLock(const std::filesystem::path& dir);
  ~WorkDirLock();
  WorkDirLock(const WorkDirLock&) = delete;
  WorkDirLock& operator=(const WorkDirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace termmt
