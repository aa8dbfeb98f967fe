#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "termmt/model_config.hpp"
#include "termmt/net.hpp"
#include "termmt/subword.hpp"
#include "termmt/vocab.hpp"

namespace termmt {

using Seq2SeqModel = net::Transformer<float>;
using TrainingExample = net::Example;

// Encodes a factored sentence pair into id streams for the network.
TrainingExample make_example(const FactoredSubwordSentence& src,
                             const std::vector<std::string>& tgt_subwords,
                             const SubwordVocab& vocab);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  bool improved = false;
};

struct TrainState {
  ModelConfig config;
  int epochs_run = 0;
  double best_dev_loss = 0.0;
  int best_epoch = 0;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minimizes label-smoothed cross entropy with Adam; keeps the parameters of
// the best dev evaluation and restores them at the end. Stops once patience
// is exhausted after min_epochs, or at max_epochs. Deterministic given the
// config seed. Throws if the loss stops being finite.
TrainState train_model(Seq2SeqModel& model, const std::vector<TrainingExample>& corpus,
                       const std::vector<TrainingExample>& dev,
                       const EpochCallback& on_epoch = nullptr);

// Versioned binary checkpoint: header with config JSON, then named tensors
// (row-major float32, little-endian).
void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path);
std::unique_ptr<Seq2SeqModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace termmt
