// Command-line surface: one subcommand per pipeline operation plus an
// end-to-end experiment driver.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "termmt/decode.hpp"
#include "termmt/eval.hpp"
#include "termmt/io.hpp"
#include "termmt/model.hpp"
#include "termmt/pipeline.hpp"
#include "termmt/subword.hpp"
#include "termmt/synthdata.hpp"
#include "termmt/termbase.hpp"
#include "termmt/text.hpp"
#include "termmt/vocab.hpp"

namespace {

using namespace termmt;
namespace fs = std::filesystem;

int cmd_ingest(const std::string& input, const std::string& name, const std::string& output) {
  TermBase tb = ingest_termbase(input, name.empty() ? fs::path(input).stem().string() : name);
  if (!output.empty()) save_termbase(tb, output);
  std::cout << "ingested " << tb.size() << " entries from " << input << "\n";
  return 0;
}

int cmd_filter(const std::string& termbase, const std::string& corpus,
               const std::string& freq_list, std::size_t top_n, std::size_t min_chars,
               const std::string& output) {
  TermBase tb = ingest_termbase(termbase, fs::path(termbase).stem().string());
  FrequencyList freq;
  if (!freq_list.empty())
    freq = load_frequency_list(freq_list);
  else if (!corpus.empty())
    freq = build_frequency_list(corpus, top_n);
  else
    throw std::runtime_error("filter needs --corpus or --freq-list");
  TermBase out = filter_termbase(tb, freq, min_chars);
  save_termbase(out, output);
  std::cout << "kept " << out.size() << " of " << tb.size() << " entries\n";
  return 0;
}

int cmd_split(const std::string& termbase, double fraction, std::uint64_t seed,
              const std::string& train_out, const std::string& test_out) {
  TermBase tb = ingest_termbase(termbase, fs::path(termbase).stem().string());
  auto [train, test] = split_termbase(tb, fraction, seed);
  save_termbase(train, train_out);
  save_termbase(test, test_out);
  std::cout << "train " << train.size() << " entries, test " << test.size() << " entries\n";
  return 0;
}

int cmd_annotate(const std::string& input, const std::string& termbase,
                 const std::string& mode_name, bool approximate, const std::string& output) {
  AnnotationMode mode = parse_annotation_mode(mode_name);
  TermBase tb = ingest_termbase(termbase, fs::path(termbase).stem().string());
  TokenLines sentences = read_token_file(input);
  TokenLines toks;
  std::vector<std::vector<int>> factors;
  for (const auto& sent : sentences) {
    if (sent.empty()) {
      toks.push_back({});
      factors.push_back({});
      continue;
    }
    auto matches = find_matches(sent, tb, approximate);
    FactoredSentence annotated = annotate_sentence(sent, matches, mode);
    toks.push_back(annotated.tokens);
    factors.push_back(annotated.factors);
  }
  write_token_file(output + ".tok", toks);
  write_factor_file(output + ".factors", factors);
  std::cout << "annotated " << toks.size() << " sentences -> " << output << ".{tok,factors}\n";
  return 0;
}

int cmd_bpe_train(const std::string& src, const std::string& tgt, std::size_t merges,
                  const std::string& output) {
  BpeModel model = bpe_train(read_token_file(src), read_token_file(tgt), merges);
  save_bpe_model(model, output);
  std::cout << "learned " << model.num_merges() << " merges -> " << output << "\n";
  return 0;
}

int cmd_bpe_apply(const std::string& input, const std::string& factors_path,
                  const std::string& model_path, const std::string& output) {
  BpeModel model = load_bpe_model(model_path);
  BpeApplier bpe(model);
  TokenLines sentences = read_token_file(input);
  std::vector<std::vector<int>> factors;
  if (!factors_path.empty()) {
    factors = read_factor_file(factors_path);
    if (factors.size() != sentences.size())
      throw std::runtime_error("factor file is misaligned with token file");
  }
  TokenLines out_toks;
  std::vector<std::vector<int>> out_factors;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    FactoredSentence in;
    in.tokens = sentences[i];
    in.factors = factors.empty() ? std::vector<int>(sentences[i].size(), 0) : factors[i];
    auto sub = bpe.apply(in);
    out_toks.push_back(sub.subwords);
    out_factors.push_back(sub.factors);
  }
  write_token_file(output + ".tok", out_toks);
  write_factor_file(output + ".factors", out_factors);
  std::cout << "applied bpe to " << out_toks.size() << " sentences -> " << output
            << ".{tok,factors}\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& outdir,
              std::optional<std::uint64_t> seed) {
  SynthTaskSpec spec;
  if (!config_path.empty()) spec = SynthTaskSpec::from_json(read_file(config_path));
  if (seed) spec.seed = *seed;
  SynthTask task = generate_task(spec);
  fs::create_directories(outdir);
  fs::path dir(outdir);
  write_token_file(dir / "train.src.tok", task.train.src);
  write_token_file(dir / "train.tgt.tok", task.train.tgt);
  write_token_file(dir / "dev.src.tok", task.dev.src);
  write_token_file(dir / "dev.tgt.tok", task.dev.tgt);
  write_token_file(dir / "test.src.tok", task.test.src);
  write_token_file(dir / "test.ref.tok", task.test.tgt);
  save_termbase(task.train_terms, dir / "terms.train.tsv");
  save_termbase(task.test_terms, dir / "terms.test.tsv");
  bool zero_shot = verify_zero_shot(task.train.tgt, task.train_terms, task.test_terms);
  std::cout << "generated task in " << outdir << " (zero-shot: " << (zero_shot ? "ok" : "VIOLATED")
            << ")\n";
  return zero_shot ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::string& train_prefix,
              const std::string& dev_prefix, const std::string& bpe_path,
              const std::string& vocab_path, const std::string& output,
              std::optional<std::uint64_t> seed) {
  ModelConfig mc;
  if (!config_path.empty()) mc = ModelConfig::from_json(read_file(config_path));
  if (seed) mc.seed = *seed;
  BpeModel bpe_model = load_bpe_model(bpe_path);
  SubwordVocab vocab =
      vocab_path.empty() ? SubwordVocab::from_bpe(bpe_model) : SubwordVocab::load(vocab_path);
  mc.vocab_size = vocab.size();
  BpeApplier bpe(bpe_model);

  auto load_examples = [&](const std::string& prefix) {
    TokenLines toks = read_token_file(prefix + ".tok");
    TokenLines tgt = read_token_file(prefix + ".tgt");
    std::vector<std::vector<int>> factors;
    if (fs::exists(prefix + ".factors")) factors = read_factor_file(prefix + ".factors");
    if (toks.size() != tgt.size())
      throw std::runtime_error(prefix + ": token and target files are misaligned");
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      FactoredSentence in;
      in.tokens = toks[i];
      in.factors = factors.empty() ? std::vector<int>(toks[i].size(), 0) : factors[i];
      out.push_back(make_example(bpe.apply(in), bpe.apply_tokens(tgt[i]), vocab));
    }
    return out;
  };

  auto model = std::make_unique<Seq2SeqModel>();
  model->init(mc);
  TrainState ts = train_model(*model, load_examples(train_prefix), load_examples(dev_prefix),
                              [](const EpochStats& e) {
                                std::cout << "epoch " << e.epoch << " train " << e.train_loss
                                          << " dev " << e.dev_loss << (e.improved ? " *" : "")
                                          << "\n";
                              });
  save_checkpoint(*model, output);
  std::cout << "trained " << ts.epochs_run << " epochs (best dev " << ts.best_dev_loss
            << " at epoch " << ts.best_epoch << ") -> " << output << "\n";
  return 0;
}

// Shared by translate / constrained-translate. Input lines are TSV:
// sentence tokens, then optional tab-separated target term phrases used as
// decoding constraints.
int cmd_translate(const std::string& model_path, const std::string& bpe_path,
                  const std::string& vocab_path, const std::string& input,
                  const std::string& factors_path, int beam, int max_len,
                  const std::string& output, bool constrained) {
  auto model = load_checkpoint(model_path);
  BpeModel bpe_model = load_bpe_model(bpe_path);
  SubwordVocab vocab =
      vocab_path.empty() ? SubwordVocab::from_bpe(bpe_model) : SubwordVocab::load(vocab_path);
  BpeApplier bpe(bpe_model);

  std::vector<std::vector<int>> factor_lines;
  if (!factors_path.empty()) factor_lines = read_factor_file(factors_path);

  TokenLines outputs;
  std::size_t lineno = 0;
  for (const auto& raw : read_lines(input)) {
    ++lineno;
    std::string sentence = raw;
    std::vector<Constraint> constraints;
    if (constrained) {
      auto fields = [&] {
        std::vector<std::string> fs_;
        std::size_t start = 0;
        while (true) {
          std::size_t tab = raw.find('\t', start);
          fs_.push_back(raw.substr(start, tab == std::string::npos ? tab : tab - start));
          if (tab == std::string::npos) break;
          start = tab + 1;
        }
        return fs_;
      }();
      sentence = fields[0];
      for (std::size_t f = 1; f < fields.size(); ++f) {
        if (fields[f].empty()) continue;
        Constraint c;
        c.ids = vocab.encode(bpe.apply_tokens(tokenize(fields[f])));
        constraints.push_back(std::move(c));
      }
    }
    FactoredSentence in;
    in.tokens = tokenize(sentence);
    in.factors = factor_lines.empty() ? std::vector<int>(in.tokens.size(), 0)
                                      : factor_lines[lineno - 1];
    auto sub = bpe.apply(in);
    DecodeConfig dcfg;
    dcfg.beam_size = beam;
    dcfg.max_len = max_len > 0 ? max_len
                               : std::min<int>(2 * static_cast<int>(sub.subwords.size()) + 8,
                                               model->cfg.max_seq_len - 1);
    ModelScoreSession session(*model, vocab.encode(sub.subwords), sub.factors);
    DecodeResult dr = constraints.empty() ? beam_search(session, dcfg)
                                          : constrained_beam_search_dba(session, constraints, dcfg);
    std::vector<int> ids = dr.best.tokens;
    if (!ids.empty() && ids.back() == SubwordVocab::kEos) ids.pop_back();
    outputs.push_back(bpe_decode(vocab.decode(ids)));
  }
  if (output.empty())
    for (const auto& line : outputs) std::cout << join_tokens(line) << "\n";
  else
    write_token_file(output, outputs);
  return 0;
}

int cmd_evaluate(const std::string& hyp, const std::string& ref, const std::string& gold,
                 const std::string& baseline, bool approximate, std::size_t resamples,
                 std::uint64_t seed, const std::string& output) {
  TokenLines hyps = read_token_file(hyp);
  TokenLines refs = read_token_file(ref);

  std::vector<SystemRun> runs;
  if (!baseline.empty()) runs.push_back({"baseline", read_token_file(baseline), std::nullopt});
  runs.push_back({"system", hyps, std::nullopt});

  std::vector<std::vector<std::vector<std::string>>> gold_terms;
  for (const auto& line : read_lines(gold)) {
    std::vector<std::vector<std::string>> terms;
    std::size_t start = 0;
    while (start <= line.size() && !line.empty()) {
      std::size_t tab = line.find('\t', start);
      std::string field =
          line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
      if (!field.empty()) terms.push_back(tokenize(field));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    gold_terms.push_back(std::move(terms));
  }

  EvalReport report =
      assemble_report(runs, gold_terms, refs, approximate, "baseline", resamples, seed);
  if (!output.empty()) write_file(output, report.to_json());
  std::cout << report.to_table();
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& workdir,
                   const std::string& modes_csv, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = ExperimentConfig::from_json(read_file(config_path));
  if (!workdir.empty()) cfg.work_dir = workdir;
  if (seed) {
    cfg.seed = *seed;
    cfg.model.seed = *seed;
    if (cfg.synth) cfg.synth->seed = *seed;
  }
  if (modes_csv.empty()) {
    ExperimentResult r = run_experiment(cfg);
    std::cout << "report: " << r.report_path.string() << "\n";
    EvalReport report;
    report.systems.push_back(r.eval);
    std::cout << report.to_table();
    return 0;
  }
  std::vector<std::string> modes;
  std::size_t start = 0;
  while (start <= modes_csv.size()) {
    std::size_t comma = modes_csv.find(',', start);
    modes.push_back(modes_csv.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  SuiteResult suite = run_experiment_suite(cfg, modes);
  std::cout << "report: " << suite.report_json_path.string() << "\n";
  std::cout << suite.report.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terminology-aware NMT sandbox"};
  app.require_subcommand(1);

  // ingest
  std::string in_path, in_name, in_out;
  auto* ingest = app.add_subcommand("ingest", "Normalize a term base TSV");
  ingest->add_option("--input", in_path)->required();
  ingest->add_option("--name", in_name);
  ingest->add_option("--output", in_out);

  // filter
  std::string f_tb, f_corpus, f_freq, f_out;
  std::size_t f_topn = 500, f_minchars = 2;
  auto* filter = app.add_subcommand("filter", "Frequency/length filter for a term base");
  filter->add_option("--termbase", f_tb)->required();
  filter->add_option("--corpus", f_corpus);
  filter->add_option("--freq-list", f_freq);
  filter->add_option("--top-n", f_topn);
  filter->add_option("--min-chars", f_minchars);
  filter->add_option("--output", f_out)->required();

  // split
  std::string s_tb, s_train, s_test;
  double s_fraction = 0.2;
  std::uint64_t s_seed = 1;
  auto* split = app.add_subcommand("split", "Split a term base with disjoint sources");
  split->add_option("--termbase", s_tb)->required();
  split->add_option("--test-fraction", s_fraction);
  split->add_option("--seed", s_seed);
  split->add_option("--train-out", s_train)->required();
  split->add_option("--test-out", s_test)->required();

  // annotate
  std::string a_in, a_tb, a_mode = "append", a_out;
  bool a_approx = false;
  auto* annotate = app.add_subcommand("annotate", "Annotate sentences with term matches");
  annotate->add_option("--input", a_in)->required();
  annotate->add_option("--termbase", a_tb)->required();
  annotate->add_option("--mode", a_mode)->check(CLI::IsMember({"append", "replace"}));
  annotate->add_flag("--approximate", a_approx);
  annotate->add_option("--output", a_out)->required();

  // bpe-train
  std::string bt_src, bt_tgt, bt_out;
  std::size_t bt_merges = 4000;
  auto* bpe_tr = app.add_subcommand("bpe-train", "Learn joint BPE merges");
  bpe_tr->add_option("--src", bt_src)->required();
  bpe_tr->add_option("--tgt", bt_tgt)->required();
  bpe_tr->add_option("--merges", bt_merges);
  bpe_tr->add_option("--output", bt_out)->required();

  // bpe-apply
  std::string ba_in, ba_factors, ba_model, ba_out;
  auto* bpe_ap = app.add_subcommand("bpe-apply", "Apply BPE with factor broadcast");
  bpe_ap->add_option("--input", ba_in)->required();
  bpe_ap->add_option("--factors", ba_factors);
  bpe_ap->add_option("--model", ba_model)->required();
  bpe_ap->add_option("--output", ba_out)->required();

  // synth
  std::string sy_config, sy_out;
  std::optional<std::uint64_t> sy_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic zero-shot task");
  synth->add_option("--config", sy_config);
  synth->add_option("--outdir", sy_out)->required();
  synth->add_option("--seed", sy_seed);

  // train
  std::string t_config, t_train, t_dev, t_bpe, t_vocab, t_out;
  std::optional<std::uint64_t> t_seed;
  auto* train = app.add_subcommand("train", "Train a model on factored corpora");
  train->add_option("--config", t_config);
  train->add_option("--train", t_train)->required();
  train->add_option("--dev", t_dev)->required();
  train->add_option("--bpe", t_bpe)->required();
  train->add_option("--vocab", t_vocab);
  train->add_option("--output", t_out)->required();
  train->add_option("--seed", t_seed);

  // translate / constrained-translate
  std::string tr_model, tr_bpe, tr_vocab, tr_in, tr_factors, tr_out;
  int tr_beam = 5, tr_maxlen = 0;
  auto* translate = app.add_subcommand("translate", "Beam-search decode");
  auto* ctranslate =
      app.add_subcommand("constrained-translate", "Decode with term constraints (TSV input)");
  for (auto* cmd : {translate, ctranslate}) {
    cmd->add_option("--model", tr_model)->required();
    cmd->add_option("--bpe", tr_bpe)->required();
    cmd->add_option("--vocab", tr_vocab);
    cmd->add_option("--input", tr_in)->required();
    cmd->add_option("--factors", tr_factors);
    cmd->add_option("--beam", tr_beam);
    cmd->add_option("--max-len", tr_maxlen);
    cmd->add_option("--output", tr_out);
  }

  // evaluate
  std::string e_hyp, e_ref, e_gold, e_baseline, e_out;
  bool e_approx = false;
  std::size_t e_resamples = 1000;
  std::uint64_t e_seed = 1;
  auto* evaluate = app.add_subcommand("evaluate", "Score outputs (term use, BLEU, significance)");
  evaluate->add_option("--hyp", e_hyp)->required();
  evaluate->add_option("--ref", e_ref)->required();
  evaluate->add_option("--gold", e_gold)->required();
  evaluate->add_option("--baseline", e_baseline);
  evaluate->add_flag("--approximate", e_approx);
  evaluate->add_option("--resamples", e_resamples);
  evaluate->add_option("--seed", e_seed);
  evaluate->add_option("--output", e_out);

  // experiment
  std::string x_config, x_workdir, x_modes;
  std::optional<std::uint64_t> x_seed;
  auto* experiment = app.add_subcommand("experiment", "Run the end-to-end pipeline");
  experiment->add_option("--config", x_config)->required();
  experiment->add_option("--workdir", x_workdir);
  experiment->add_option("--modes", x_modes, "Comma-separated list for a multi-system run");
  experiment->add_option("--seed", x_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n" << e.what() << "\n";
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_path, in_name, in_out);
    if (*filter) return cmd_filter(f_tb, f_corpus, f_freq, f_topn, f_minchars, f_out);
    if (*split) return cmd_split(s_tb, s_fraction, s_seed, s_train, s_test);
    if (*annotate) return cmd_annotate(a_in, a_tb, a_mode, a_approx, a_out);
    if (*bpe_tr) return cmd_bpe_train(bt_src, bt_tgt, bt_merges, bt_out);
    if (*bpe_ap) return cmd_bpe_apply(ba_in, ba_factors, ba_model, ba_out);
    if (*synth) return cmd_synth(sy_config, sy_out, sy_seed);
    if (*train) return cmd_train(t_config, t_train, t_dev, t_bpe, t_vocab, t_out, t_seed);
    if (*translate)
      return cmd_translate(tr_model, tr_bpe, tr_vocab, tr_in, tr_factors, tr_beam, tr_maxlen,
                           tr_out, false);
    if (*ctranslate)
      return cmd_translate(tr_model, tr_bpe, tr_vocab, tr_in, tr_factors, tr_beam, tr_maxlen,
                           tr_out, true);
    if (*evaluate)
      return cmd_evaluate(e_hyp, e_ref, e_gold, e_baseline, e_approx, e_resamples, e_seed, e_out);
    if (*experiment) return cmd_experiment(x_config, x_workdir, x_modes, x_seed);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
