#pragma once

#include <string>
#include <vector>

#include "ynet/audio.hpp"
#include "ynet/checkpoint.hpp"
#include "ynet/model.hpp"

namespace ynet {

struct ExamplePair {
  std::vector<double> mixture;  // window_samples long
  std::vector<double> vocals;   // same offsets
  std::string id;
};

struct TrainConfig {
  ModelConfig model;
  int epochs = 100;
  int batch_size = 2;  // desk-scale default; the full recipe uses 16
  double learning_rate = 1e-4;
  uint64_t seed = 0;
  bool log_mag = false;  // optional log1p compression of magnitudes
  std::string checkpoint_path;
  std::string loss_log_path;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
    model.validate();
  }
};

// Loads `<root>/<song>/{mixture.wav,vocals.wav}` in lexicographic song order
// and slices both stems with identical offsets. Songs without vocals.wav are
// skipped with a warning; non-44100 Hz input is resampled with a warning.
std::vector<ExamplePair> build_dataset(const std::string& root, int window_samples = 67072);

// Deterministic synthetic stand-in for real stems: a swept harmonic "vocal"
// with vibrato against a pink-ish noise + low tone bed, mixed at a random
// vocal-to-accompaniment ratio in [-6, +6] dB and peak-normalized to 0.9.
std::vector<ExamplePair> synth_dataset(uint64_t seed, int n_pairs, int window_samples = 67072,
                                       int sample_rate = 44100);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;  // empty without a validation set
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

TrainResult train(const TrainConfig& cfg, const std::vector<ExamplePair>& pairs,
                  const std::vector<ExamplePair>& val_pairs = {});

}  // namespace ynet
