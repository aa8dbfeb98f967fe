#include "termmt/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "termmt/decode.hpp"
#include "termmt/io.hpp"
#include "termmt/model.hpp"
#include "termmt/subword.hpp"
#include "termmt/text.hpp"
#include "termmt/vocab.hpp"

namespace termmt {

namespace fs = std::filesystem;

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["work_dir"] = work_dir;
  if (synth) j["synth"] = nlohmann::json::parse(synth->to_json());
  j["train_src"] = train_src;
  j["train_tgt"] = train_tgt;
  j["dev_src"] = dev_src;
  j["dev_tgt"] = dev_tgt;
  j["test_src"] = test_src;
  j["test_tgt"] = test_tgt;
  j["termbase_path"] = termbase_path;
  j["freq_top_n"] = freq_top_n;
  j["freq_min_chars"] = freq_min_chars;
  j["termbase_test_fraction"] = termbase_test_fraction;
  j["model"] = nlohmann::json::parse(model.to_json());
  j["num_merges"] = num_merges;
  j["augment_fraction"] = augment_fraction;
  j["beam_size"] = beam_size;
  j["max_decode_len"] = max_decode_len;
  j["eval_regime"] = eval_regime;
  j["measure_latency"] = measure_latency;
  j["bootstrap_resamples"] = bootstrap_resamples;
  j["reuse_checkpoint"] = reuse_checkpoint;
  j["baseline_outputs"] = baseline_outputs;
  j["seed"] = seed;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig c;
  c.mode = j.value("mode", c.mode);
  c.work_dir = j.value("work_dir", c.work_dir);
  if (j.contains("synth") && !j["synth"].is_null())
    c.synth = SynthTaskSpec::from_json(j["synth"].dump());
  c.train_src = j.value("train_src", c.train_src);
  c.train_tgt = j.value("train_tgt", c.train_tgt);
  c.dev_src = j.value("dev_src", c.dev_src);
  c.dev_tgt = j.value("dev_tgt", c.dev_tgt);
  c.test_src = j.value("test_src", c.test_src);
  c.test_tgt = j.value("test_tgt", c.test_tgt);
  c.termbase_path = j.value("termbase_path", c.termbase_path);
  c.freq_top_n = j.value("freq_top_n", c.freq_top_n);
  c.freq_min_chars = j.value("freq_min_chars", c.freq_min_chars);
  c.termbase_test_fraction = j.value("termbase_test_fraction", c.termbase_test_fraction);
  if (j.contains("model")) c.model = ModelConfig::from_json(j["model"].dump());
  c.num_merges = j.value("num_merges", c.num_merges);
  c.augment_fraction = j.value("augment_fraction", c.augment_fraction);
  c.beam_size = j.value("beam_size", c.beam_size);
  c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  c.eval_regime = j.value("eval_regime", c.eval_regime);
  c.measure_latency = j.value("measure_latency", c.measure_latency);
  c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
  c.reuse_checkpoint = j.value("reuse_checkpoint", c.reuse_checkpoint);
  c.baseline_outputs = j.value("baseline_outputs", c.baseline_outputs);
  c.seed = j.value("seed", c.seed);
  return c;
}

void ExperimentConfig::validate() const {
  if (mode != "baseline" && mode != "append" && mode != "replace" && mode != "constrained")
    throw std::invalid_argument("unknown mode: " + mode);
  if (work_dir.empty()) throw std::invalid_argument("work_dir is required");
  if (eval_regime != "exact" && eval_regime != "approximate")
    throw std::invalid_argument("eval_regime must be exact or approximate");
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (!synth) {
    for (const auto* p : {&train_src, &train_tgt, &dev_src, &dev_tgt, &test_src, &test_tgt})
      if (p->empty())
        throw std::invalid_argument("file-based config requires all six corpus paths");
    if (termbase_path.empty())
      throw std::invalid_argument("file-based config requires termbase_path");
  }
}

WorkDirLock::WorkDirLock(const fs::path& dir) : lock_path_(dir / ".lock") {
  int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw std::runtime_error("work directory is locked by another run: " +
                             lock_path_.string());
  ::close(fd);
}

WorkDirLock::~WorkDirLock() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct PreparedData {
  ParallelCorpus train, dev, test;
  TermBase train_terms, test_terms;
};

PreparedData prepare_data(const ExperimentConfig& cfg, const fs::path& data_dir) {
  PreparedData d;
  if (cfg.synth) {
    SynthTask task = generate_task(*cfg.synth);
    d.train = std::move(task.train);
    d.dev = std::move(task.dev);
    d.test = std::move(task.test);
    d.train_terms = std::move(task.train_terms);
    d.test_terms = std::move(task.test_terms);
  } else {
    d.train.src = read_token_file(cfg.train_src);
    d.train.tgt = read_token_file(cfg.train_tgt);
    d.dev.src = read_token_file(cfg.dev_src);
    d.dev.tgt = read_token_file(cfg.dev_tgt);
    d.test.src = read_token_file(cfg.test_src);
    d.test.tgt = read_token_file(cfg.test_tgt);
    TermBase raw = ingest_termbase(cfg.termbase_path, fs::path(cfg.termbase_path).stem());
    FrequencyList freq = frequency_list_from_tokens(d.train.src, cfg.freq_top_n);
    save_frequency_list(freq, data_dir / "frequency.tsv");
    TermBase filtered = filter_termbase(raw, freq, cfg.freq_min_chars);
    auto [train_tb, test_tb] =
        split_termbase(filtered, cfg.termbase_test_fraction, hash_combine(cfg.seed, 0x5b));
    d.train_terms = std::move(train_tb);
    d.test_terms = std::move(test_tb);
  }
  write_token_file(data_dir / "train.src.tok", d.train.src);
  write_token_file(data_dir / "train.tgt.tok", d.train.tgt);
  write_token_file(data_dir / "dev.src.tok", d.dev.src);
  write_token_file(data_dir / "dev.tgt.tok", d.dev.tgt);
  write_token_file(data_dir / "test.src.tok", d.test.src);
  write_token_file(data_dir / "test.ref.tok", d.test.tgt);
  save_termbase(d.train_terms, data_dir / "terms.train.tsv");
  save_termbase(d.test_terms, data_dir / "terms.test.tsv");
  return d;
}

void write_augmented(const AugmentedCorpus& corpus, const fs::path& prefix) {
  TokenLines toks;
  std::vector<std::vector<int>> factors;
  for (const auto& fs_ : corpus.src) {
    toks.push_back(fs_.tokens);
    factors.push_back(fs_.factors);
  }
  write_token_file(fs::path(prefix.string() + ".tok"), toks);
  write_factor_file(fs::path(prefix.string() + ".factors"), factors);
  write_token_file(fs::path(prefix.string() + ".tgt"), corpus.tgt);
}

std::vector<TrainingExample> encode_corpus(const AugmentedCorpus& corpus, BpeApplier& bpe,
                                           const SubwordVocab& vocab) {
  std::vector<TrainingExample> out;
  out.reserve(corpus.src.size());
  for (std::size_t i = 0; i < corpus.src.size(); ++i) {
    auto sub = bpe.apply(corpus.src[i]);
    out.push_back(make_example(sub, bpe.apply_tokens(corpus.tgt[i]), vocab));
  }
  return out;
}

std::string latency_json(const std::vector<double>& lat,
                         const std::vector<std::size_t>& constraints) {
  nlohmann::json j;
  j["seconds"] = lat;
  j["constraints_per_sentence"] = constraints;
  return j.dump(2);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  stage("config", [&] { config.validate(); return 0; });

  const fs::path work(config.work_dir);
  const fs::path data_dir = work / "data";
  fs::create_directories(data_dir);
  WorkDirLock lock(work);
  write_file(work / "config.json", config.to_json());

  ExperimentResult result;
  result.work_dir = work;

  // --- data -----------------------------------------------------------
  PreparedData data = stage("data", [&] { return prepare_data(config, data_dir); });

  // --- annotate -------------------------------------------------------
  const bool annotated_mode = (config.mode == "append" || config.mode == "replace");
  const AnnotationMode ann_mode =
      config.mode == "replace" ? AnnotationMode::Replace : AnnotationMode::Append;
  const double fraction = annotated_mode ? config.augment_fraction : 0.0;

  AugmentedCorpus train_corpus = stage("annotate", [&] {
    return build_training_corpus(data.train.src, data.train.tgt, data.train_terms, ann_mode,
                                 fraction, hash_combine(config.seed, 0xa1));
  });
  AugmentedCorpus dev_corpus = stage("annotate", [&] {
    return build_training_corpus(data.dev.src, data.dev.tgt, data.train_terms, ann_mode,
                                 fraction, hash_combine(config.seed, 0xa2));
  });
  write_augmented(train_corpus, data_dir / "train.aug");
  write_augmented(dev_corpus, data_dir / "dev.aug");
  result.train_pairs = train_corpus.src.size();
  result.annotated_pairs = train_corpus.annotated_count;

  // --- subwords ---------------------------------------------------------
  // BPE is learned on the original corpus only: annotated copies introduce
  // no new words, and every system shares one subword space.
  BpeModel bpe_model = stage("bpe", [&] {
    return bpe_train(data.train.src, data.train.tgt, config.num_merges);
  });
  save_bpe_model(bpe_model, work / "bpe.model");
  SubwordVocab vocab = SubwordVocab::from_bpe(bpe_model);
  vocab.save(work / "vocab.txt");
  BpeApplier bpe(bpe_model);

  // --- train ----------------------------------------------------------
  result.checkpoint_path = work / "model.ckpt";
  std::unique_ptr<Seq2SeqModel> model;
  stage("train", [&] {
    if (!config.reuse_checkpoint.empty()) {
      model = load_checkpoint(config.reuse_checkpoint);
      if (model->cfg.vocab_size != vocab.size())
        throw std::runtime_error("reused checkpoint vocab size " +
                                 std::to_string(model->cfg.vocab_size) +
                                 " does not match corpus vocab " + std::to_string(vocab.size()));
      save_checkpoint(*model, result.checkpoint_path);
      return 0;
    }
    auto train_examples = encode_corpus(train_corpus, bpe, vocab);
    auto dev_examples = encode_corpus(dev_corpus, bpe, vocab);
    ModelConfig mc = config.model;
    mc.vocab_size = vocab.size();
    model = std::make_unique<Seq2SeqModel>();
    model->init(mc);
    TrainState ts = train_model(*model, train_examples, dev_examples);
    save_checkpoint(*model, result.checkpoint_path);
    nlohmann::json hist;
    for (const auto& e : ts.history)
      hist.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev_loss", e.dev_loss},
                      {"improved", e.improved}});
    write_file(work / "training.json",
               nlohmann::json{{"epochs_run", ts.epochs_run},
                              {"best_epoch", ts.best_epoch},
                              {"best_dev_loss", ts.best_dev_loss},
                              {"history", hist}}
                   .dump(2));
    return 0;
  });

  // --- test set ---------------------------------------------------------
  const TargetMatchRegime regime = config.eval_regime == "approximate"
                                       ? TargetMatchRegime::Approximate
                                       : TargetMatchRegime::Exact;
  ExtractedTestSet test_set = stage("test-extract", [&] {
    return extract_test_set(data.test.src, data.test.tgt, data.test_terms, regime);
  });
  if (test_set.items.empty())
    throw StageError("test-extract", "no test sentences with reference-backed term matches");

  {
    std::vector<std::string> gold_lines;
    TokenLines kept_src, kept_ref;
    for (const auto& item : test_set.items) {
      std::string line;
      for (std::size_t m = 0; m < item.matches.size(); ++m) {
        if (m) line += "\t";
        line += item.matches[m].entry.target_text();
      }
      gold_lines.push_back(line);
      kept_src.push_back(item.src);
      kept_ref.push_back(item.ref);
    }
    write_lines(work / "test.gold.tsv", gold_lines);
    write_token_file(work / "test.kept.src.tok", kept_src);
    write_token_file(work / "test.kept.ref.tok", kept_ref);
  }

  // --- decode -----------------------------------------------------------
  stage("decode", [&] {
    DecodeConfig dcfg;
    dcfg.beam_size = config.beam_size;

    for (const auto& item : test_set.items) {
      FactoredSentence input = annotated_mode
                                   ? annotate_sentence(item.src, item.matches, ann_mode)
                                   : FactoredSentence::plain(item.src);
      auto sub = bpe.apply(input);
      std::vector<int> ids = vocab.encode(sub.subwords);

      std::vector<Constraint> constraints;
      if (config.mode == "constrained") {
        for (const auto& m : item.matches) {
          Constraint c;
          c.ids = vocab.encode(bpe.apply_tokens(m.entry.target));
          constraints.push_back(std::move(c));
        }
      }

      dcfg.max_len = config.max_decode_len > 0
                         ? config.max_decode_len
                         : std::min<int>(2 * static_cast<int>(ids.size()) + 8,
                                         model->cfg.max_seq_len - 1);

      auto t0 = std::chrono::steady_clock::now();
      ModelScoreSession session(*model, ids, sub.factors);
      DecodeResult dr = constraints.empty()
                            ? beam_search(session, dcfg)
                            : constrained_beam_search_dba(session, constraints, dcfg);
      auto t1 = std::chrono::steady_clock::now();

      std::vector<int> out_ids = dr.best.tokens;
      if (!out_ids.empty() && out_ids.back() == SubwordVocab::kEos) out_ids.pop_back();
      result.outputs.push_back(bpe_decode(vocab.decode(out_ids)));
      result.latencies_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
      result.constraints_per_sentence.push_back(item.matches.size());
    }
    return 0;
  });
  result.outputs_path = work / "hyp.tok";
  write_token_file(result.outputs_path, result.outputs);
  if (config.measure_latency)
    write_file(work / "latency.json",
               latency_json(result.latencies_seconds, result.constraints_per_sentence));

  // --- evaluate -----------------------------------------------------------
  stage("evaluate", [&] {
    for (const auto& item : test_set.items) {
      std::vector<std::vector<std::string>> terms;
      for (const auto& m : item.matches) terms.push_back(m.entry.target);
      result.gold_terms.push_back(std::move(terms));
      result.test_refs.push_back(item.ref);
    }
    SystemEval ev;
    ev.system = config.mode;
    ev.terms = term_use_rate(result.outputs, result.gold_terms,
                             regime == TargetMatchRegime::Approximate);
    ev.bleu = bleu(result.outputs, result.test_refs);
    if (!config.baseline_outputs.empty()) {
      TokenLines base = read_token_file(config.baseline_outputs);
      ev.delta_vs_baseline = ev.bleu.score - bleu(base, result.test_refs).score;
      ev.p_value_vs_baseline = paired_bootstrap(result.outputs, base, result.test_refs,
                                                config.bootstrap_resamples,
                                                hash_combine(config.seed, 0xb0));
    }
    if (config.measure_latency) {
      if (result.latencies_seconds.size() >= 2)
        ev.latency_p50 = percentile_value(result.latencies_seconds, 50.0);
      if (result.latencies_seconds.size() >= 100)
        ev.latency_p99 = percentile_value(result.latencies_seconds, 99.0);
    }
    result.eval = std::move(ev);
    return 0;
  });

  // --- report + manifest ---------------------------------------------------
  stage("report", [&] {
    EvalReport report;
    report.systems.push_back(result.eval);
    result.report_json = report.to_json();
    result.report_path = work / "report.json";
    write_file(result.report_path, result.report_json);
    write_file(work / "report.txt", report.to_table());

    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(config.to_json());
    manifest["config_hash"] = file_checksum(work / "config.json");
    manifest["seed"] = config.seed;
    manifest["test_sentences"] = test_set.items.size();
    manifest["test_terms"] = test_set.total_terms();
    manifest["train_pairs"] = result.train_pairs;
    manifest["annotated_pairs"] = result.annotated_pairs;
    nlohmann::json files;
    for (const auto& name :
         {std::string("data/train.aug.tok"), std::string("data/train.aug.factors"),
          std::string("data/train.aug.tgt"), std::string("data/dev.aug.tok"),
          std::string("data/terms.train.tsv"), std::string("data/terms.test.tsv"),
          std::string("bpe.model"), std::string("vocab.txt"), std::string("model.ckpt"),
          std::string("test.gold.tsv"), std::string("hyp.tok"), std::string("report.json")})
      files[name] = file_checksum(work / name);
    manifest["files"] = files;
    result.manifest_path = work / "manifest.json";
    write_file(result.manifest_path, manifest.dump(2));
    return 0;
  });

  return result;
}

SuiteResult run_experiment_suite(const ExperimentConfig& base,
                                 const std::vector<std::string>& modes) {
  if (modes.empty()) throw std::invalid_argument("no modes requested");
  fs::create_directories(base.work_dir);

  SuiteResult suite;
  fs::path baseline_ckpt;
  for (const auto& mode : modes) {
    ExperimentConfig cfg = base;
    cfg.mode = mode;
    cfg.work_dir = (fs::path(base.work_dir) / mode).string();
    // The constrained system decodes with the plain baseline model.
    if (mode == "constrained" && !baseline_ckpt.empty() && cfg.reuse_checkpoint.empty())
      cfg.reuse_checkpoint = baseline_ckpt.string();
    ExperimentResult r = run_experiment(cfg);
    if (mode == "baseline") baseline_ckpt = r.checkpoint_path;
    suite.runs.emplace(mode, std::move(r));
  }

  const ExperimentResult& first = suite.runs.begin()->second;
  std::vector<SystemRun> runs;
  for (const auto& mode : modes) {
    const ExperimentResult& r = suite.runs.at(mode);
    SystemRun run;
    run.name = mode;
    run.outputs = r.outputs;
    if (base.measure_latency) run.latencies_seconds = r.latencies_seconds;
    runs.push_back(std::move(run));
  }
  suite.report = assemble_report(runs, first.gold_terms, first.test_refs,
                                 base.eval_regime == "approximate", "baseline",
                                 base.bootstrap_resamples, hash_combine(base.seed, 0xb0));
  suite.report_json_path = fs::path(base.work_dir) / "report.json";
  suite.report_table_path = fs::path(base.work_dir) / "report.txt";
  write_file(suite.report_json_path, suite.report.to_json());
  write_file(suite.report_table_path, suite.report.to_table());
  return suite;
}

}  // namespace termmt
