#pragma once

#include <cstdint>
#include <string>

namespace termmt {

// Architecture and training hyperparameters. The word-embedding width is
// model_size - factor_embed_size so the concatenated source input width
// equals model_size.
struct ModelConfig {
  int model_size = 128;
  int num_layers_enc = 2;
  int num_layers_dec = 2;
  int attention_heads = 4;
  int feed_forward_hidden = 256;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int factor_embed_size = 8;
  int vocab_size = 0;  // filled from the subword vocabulary
  int max_seq_len = 64;
  std::uint64_t seed = 1;

  // Optimizer: Adam with fixed learning rate after linear warmup.
  double learning_rate = 1e-3;
  int warmup_steps = 200;
  int batch_size = 16;
  int min_epochs = 50;
  int max_epochs = 100;
  int patience = 10;  // dev evaluations without improvement after min_epochs

  int word_embed_size() const { return model_size - factor_embed_size; }
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

}  // namespace termmt
