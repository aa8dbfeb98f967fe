#include "termmt/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "termmt/text.hpp"

namespace termmt {

void ModelConfig::validate() const {
  if (factor_embed_size < 1) throw std::invalid_argument("factor_embed_size must be >= 1");
  if (model_size <= factor_embed_size)
    throw std::invalid_argument("model_size must exceed factor_embed_size");
  if (model_size % attention_heads != 0)
    throw std::invalid_argument("model_size must be divisible by attention_heads");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::invalid_argument("label_smoothing must be in [0,1)");
  if (vocab_size < 5) throw std::invalid_argument("vocab_size not set");
  if (max_seq_len < 2) throw std::invalid_argument("max_seq_len too small");
  if (num_layers_enc < 1 || num_layers_dec < 1)
    throw std::invalid_argument("need at least one layer per stack");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["model_size"] = model_size;
  j["num_layers_enc"] = num_layers_enc;
  j["num_layers_dec"] = num_layers_dec;
  j["attention_heads"] = attention_heads;
  j["feed_forward_hidden"] = feed_forward_hidden;
  j["dropout"] = dropout;
  j["label_smoothing"] = label_smoothing;
  j["factor_embed_size"] = factor_embed_size;
  j["vocab_size"] = vocab_size;
  j["max_seq_len"] = max_seq_len;
  j["seed"] = seed;
  j["learning_rate"] = learning_rate;
  j["warmup_steps"] = warmup_steps;
  j["batch_size"] = batch_size;
  j["min_epochs"] = min_epochs;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.model_size = j.value("model_size", c.model_size);
  c.num_layers_enc = j.value("num_layers_enc", c.num_layers_enc);
  c.num_layers_dec = j.value("num_layers_dec", c.num_layers_dec);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.feed_forward_hidden = j.value("feed_forward_hidden", c.feed_forward_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.factor_embed_size = j.value("factor_embed_size", c.factor_embed_size);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.seed = j.value("seed", c.seed);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.min_epochs = j.value("min_epochs", c.min_epochs);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  return c;
}

TrainingExample make_example(const FactoredSubwordSentence& src,
                             const std::vector<std::string>& tgt_subwords,
                             const SubwordVocab& vocab) {
  TrainingExample ex;
  ex.src_ids = vocab.encode(src.subwords);
  ex.src_factors = src.factors;
  ex.tgt_ids = vocab.encode(tgt_subwords);
  return ex;
}

namespace {

// Length-bucketed batches: sort by (src_len, tgt_len, index), chunk, then
// shuffle chunk order per epoch. Keeps batch contents deterministic.
std::vector<std::vector<const TrainingExample*>> make_batches(
    const std::vector<TrainingExample>& corpus, int batch_size) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = corpus[a];
    const auto& eb = corpus[b];
    if (ea.src_ids.size() != eb.src_ids.size()) return ea.src_ids.size() < eb.src_ids.size();
    if (ea.tgt_ids.size() != eb.tgt_ids.size()) return ea.tgt_ids.size() < eb.tgt_ids.size();
    return a < b;
  });
  std::vector<std::vector<const TrainingExample*>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const TrainingExample*> batch;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j)
      batch.push_back(&corpus[order[j]]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

double eval_loss(Seq2SeqModel& model, const std::vector<TrainingExample>& dev, int batch_size) {
  auto batches = make_batches(dev, batch_size);
  double total = 0.0;
  std::size_t tokens = 0;
  for (auto& b : batches) {
    std::size_t n = 0;
    for (auto* ex : b) n += ex->tgt_ids.size() + 1;
    total += static_cast<double>(model.batch_loss(b, false, nullptr)) * static_cast<double>(n);
    tokens += n;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

std::vector<net::Mat<float>> snapshot(const Seq2SeqModel& model) {
  std::vector<net::Mat<float>> copy;
  copy.reserve(model.store.params.size());
  for (auto* p : model.store.params) copy.push_back(p->value);
  return copy;
}

void restore(Seq2SeqModel& model, const std::vector<net::Mat<float>>& copy) {
  for (std::size_t i = 0; i < copy.size(); ++i) model.store.params[i]->value = copy[i];
}

}  // namespace

TrainState train_model(Seq2SeqModel& model, const std::vector<TrainingExample>& corpus,
                       const std::vector<TrainingExample>& dev,
                       const EpochCallback& on_epoch) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  if (dev.empty()) throw std::invalid_argument("dev corpus is empty");
  const ModelConfig& cfg = model.cfg;

  TrainState state;
  state.config = cfg;
  net::AdamOptimizer<float> adam(cfg.learning_rate, cfg.warmup_steps);

  auto batches = make_batches(corpus, cfg.batch_size);
  std::vector<std::size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), 0);

  double best_dev = std::numeric_limits<double>::infinity();
  std::vector<net::Mat<float>> best_params = snapshot(model);
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng order_rng(hash_combine(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(batch_order);

    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t bi = 0; bi < batch_order.size(); ++bi) {
      auto& batch = batches[batch_order[bi]];
      Rng drop_rng(hash_combine(cfg.seed,
                                (static_cast<std::uint64_t>(epoch) << 32) ^ batch_order[bi]));
      model.store.zero_grads();
      float loss = model.batch_loss(batch, true, &drop_rng);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(bi) + ": loss is not finite");
      adam.step(model.store);
      std::size_t n = 0;
      for (auto* ex : batch) n += ex->tgt_ids.size() + 1;
      epoch_loss += static_cast<double>(loss) * static_cast<double>(n);
      epoch_tokens += n;
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    es.dev_loss = eval_loss(model, dev, cfg.batch_size);
    if (es.dev_loss < best_dev) {
      best_dev = es.dev_loss;
      best_params = snapshot(model);
      state.best_epoch = epoch;
      since_best = 0;
      es.improved = true;
    } else {
      ++since_best;
    }
    state.history.push_back(es);
    state.epochs_run = epoch;
    if (on_epoch) on_epoch(es);

    if (epoch >= cfg.min_epochs && since_best >= cfg.patience) break;
  }

  restore(model, best_params);
  state.best_dev_loss = best_dev;
  return state;
}

// --- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'M', 'M', 'T', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace

void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  std::string cfg = model.cfg.to_json();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put_u32(out, static_cast<std::uint32_t>(model.store.params.size()));
  for (const auto* p : model.store.params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) put_f32(out, p->value(i, j));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::unique_ptr<Seq2SeqModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  std::uint32_t cfg_len = get_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  auto model = std::make_unique<Seq2SeqModel>();
  model->init(ModelConfig::from_json(cfg_text));

  std::uint32_t n = get_u32(in);
  if (n != model->store.params.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path.string());
  for (std::uint32_t t = 0; t < n; ++t) {
    std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rows = get_u32(in), cols = get_u32(in);
    auto* p = model->store.params[t];
    if (p->name != name || p->value.rows() != static_cast<Eigen::Index>(rows) ||
        p->value.cols() != static_cast<Eigen::Index>(cols))
      throw std::runtime_error("checkpoint tensor mismatch at " + name);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) p->value(i, j) = get_f32(in);
  }
  if (!in) throw std::runtime_error("checkpoint truncated: " + path.string());
  return model;
}

}  // namespace termmt
