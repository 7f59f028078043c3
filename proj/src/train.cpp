#include "ynet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ynet/adam.hpp"
#include "ynet/dsp.hpp"
#include "ynet/errors.hpp"

namespace fs = std::filesystem;

namespace ynet {

std::vector<ExamplePair> build_dataset(const std::string& root, int window_samples) {
  if (!fs::is_directory(root)) throw IoError("dataset root missing: " + root);
  std::vector<std::string> songs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) songs.push_back(e.path().filename().string());
  std::sort(songs.begin(), songs.end());

  std::vector<ExamplePair> pairs;
  for (const auto& song : songs) {
    const fs::path dir = fs::path(root) / song;
    const fs::path mix_path = dir / "mixture.wav";
    const fs::path voc_path = dir / "vocals.wav";
    if (!fs::is_regular_file(voc_path)) {
      std::fprintf(stderr, "ynet: warning: skipping %s (no vocals.wav)\n", song.c_str());
      continue;
    }
    if (!fs::is_regular_file(mix_path)) {
      std::fprintf(stderr, "ynet: warning: skipping %s (no mixture.wav)\n", song.c_str());
      continue;
    }
    AudioClip mix = read_wav(mix_path.string());
    AudioClip voc = read_wav(voc_path.string());
    if (mix.sample_rate != 44100) {
      std::fprintf(stderr, "ynet: warning: resampling %s mixture from %d Hz\n", song.c_str(),
                   mix.sample_rate);
      mix = resample(mix, 44100);
    }
    if (voc.sample_rate != 44100) {
      std::fprintf(stderr, "ynet: warning: resampling %s vocals from %d Hz\n", song.c_str(),
                   voc.sample_rate);
      voc = resample(voc, 44100);
    }
    if (mix.samples.size() != voc.samples.size()) {
      std::fprintf(stderr, "ynet: warning: %s stems differ in length; truncating to shorter\n",
                   song.c_str());
      const size_t len = std::min(mix.samples.size(), voc.samples.size());
      mix.samples.resize(len);
      voc.samples.resize(len);
    }
    const auto mix_windows = slice_windows(mix, window_samples, window_samples);
    const auto voc_windows = slice_windows(voc, window_samples, window_samples);
    for (size_t w = 0; w < mix_windows.size(); ++w) {
      ExamplePair p;
      p.mixture = mix_windows[w].samples;
      p.vocals = voc_windows[w].samples;
      p.id = song + "/" + std::to_string(w);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<ExamplePair> synth_dataset(uint64_t seed, int n_pairs, int window_samples,
                                       int sample_rate) {
  if (n_pairs < 1) throw UsageError("synth_dataset: need at least one pair");
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32) ^ 0x9e3779b9u));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<ExamplePair> pairs;
  const double dt = 1.0 / sample_rate;
  for (int p = 0; p < n_pairs; ++p) {
    const int n = window_samples;
    std::vector<double> vocal(static_cast<size_t>(n), 0.0);
    std::vector<double> accomp(static_cast<size_t>(n), 0.0);

    // "vocal": 3-6 harmonics of a swept fundamental with amplitude vibrato
    const double f_start = 120.0 + 480.0 * uni(rng);
    const double f_end = 120.0 + 480.0 * uni(rng);
    const int harmonics = 3 + static_cast<int>(uni(rng) * 4.0) % 4;
    const double vib_rate = 4.0 + 3.0 * uni(rng);
    const double vib_phase = 2.0 * M_PI * uni(rng);
    std::vector<double> harm_phase(static_cast<size_t>(harmonics));
    for (int h = 0; h < harmonics; ++h) harm_phase[static_cast<size_t>(h)] = 2.0 * M_PI * uni(rng);
    double phase = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = static_cast<double>(i) / n;
      const double f0 = f_start * std::pow(f_end / f_start, u);
      phase += 2.0 * M_PI * f0 * dt;
      const double vib = 1.0 + 0.3 * std::sin(2.0 * M_PI * vib_rate * i * dt + vib_phase);
      double s = 0.0;
      for (int h = 0; h < harmonics; ++h)
        s += std::sin((h + 1) * phase + harm_phase[static_cast<size_t>(h)]) / (h + 1);
      vocal[static_cast<size_t>(i)] = vib * s;
    }

    // accompaniment: one-pole low-passed noise plus a low-frequency tone bed
    const double pole = 0.9 + 0.08 * uni(rng);
    double state = 0.0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      state = pole * state + (1.0 - pole) * gauss(rng);
      accomp[static_cast<size_t>(i)] = state * 12.0;
    }
    const int bed_tones = 2 + static_cast<int>(uni(rng) * 2.0) % 2;
    for (int b = 0; b < bed_tones; ++b) {
      const double bf = 50.0 + 150.0 * uni(rng);
      const double bp = 2.0 * M_PI * uni(rng);
      for (int i = 0; i < n; ++i)
        accomp[static_cast<size_t>(i)] += 0.4 * std::sin(2.0 * M_PI * bf * i * dt + bp);
    }

    // set vocal-to-accompaniment power ratio, uniform in [-6, +6] dB
    auto rms = [](const std::vector<double>& x) {
      double acc = 0.0;
      for (double v : x) acc += v * v;
      return std::sqrt(acc / static_cast<double>(x.size()));
    };
    const double ratio_db = -6.0 + 12.0 * uni(rng);
    const double target_acc_rms = rms(vocal) * std::pow(10.0, -ratio_db / 20.0);
    const double acc_gain = target_acc_rms / std::max(rms(accomp), 1e-12);
    for (auto& v : accomp) v *= acc_gain;

    ExamplePair pair;
    pair.mixture.resize(static_cast<size_t>(n));
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
      pair.mixture[static_cast<size_t>(i)] =
          vocal[static_cast<size_t>(i)] + accomp[static_cast<size_t>(i)];
      peak = std::max(peak, std::abs(pair.mixture[static_cast<size_t>(i)]));
    }
    const double gain = 0.9 / std::max(peak, 1e-12);
    pair.vocals.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      pair.mixture[static_cast<size_t>(i)] *= gain;
      pair.vocals[static_cast<size_t>(i)] = vocal[static_cast<size_t>(i)] * gain;
    }
    pair.id = "synth/" + std::to_string(p);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

namespace {

struct PreparedPair {
  std::vector<float> wave;
  std::vector<float> mix_mag;    // [freq_bins * time_bins]
  std::vector<float> vocal_mag;  // ditto
};

PreparedPair prepare(const ExamplePair& pair, const ModelConfig& mc, bool log_mag) {
  StftConfig sc;
  sc.window_len = mc.stft_window;
  sc.hop = mc.stft_hop;
  sc.freq_bins = mc.freq_bins;
  AudioClip mix{pair.mixture, 44100}, voc{pair.vocals, 44100};
  ComplexSpectrogram ms = stft(mix, sc);
  ComplexSpectrogram vs = stft(voc, sc);
  if (ms.time_bins != mc.time_bins)
    throw ConfigError("training window yields " + std::to_string(ms.time_bins) +
                      " time bins, model expects " + std::to_string(mc.time_bins));
  PreparedPair out;
  out.wave.resize(pair.mixture.size());
  for (size_t i = 0; i < pair.mixture.size(); ++i)
    out.wave[i] = static_cast<float>(pair.mixture[i]);
  auto compress = [log_mag](double v) {
    return static_cast<float>(log_mag ? std::log1p(v) : v);
  };
  out.mix_mag.resize(ms.magnitude.size());
  out.vocal_mag.resize(vs.magnitude.size());
  for (size_t i = 0; i < ms.magnitude.size(); ++i) out.mix_mag[i] = compress(ms.magnitude[i]);
  for (size_t i = 0; i < vs.magnitude.size(); ++i) out.vocal_mag[i] = compress(vs.magnitude[i]);
  return out;
}

// Loss over one batch: mse(mask * mix_mag, vocal_mag), or a direct estimate
// for the wave-only ablation.
Tensor<float> batch_loss(const std::vector<const PreparedPair*>& batch, const ModelConfig& mc,
                         ModelParams<float>& params, Mode mode, std::mt19937* rng) {
  const int n = static_cast<int>(batch.size());
  const int fb = mc.freq_bins, tb = mc.time_bins;
  const int64_t plane = static_cast<int64_t>(fb) * tb;
  Tensor<float> wave({n, mc.window_samples});
  Tensor<float> mag({n, 1, fb, tb});
  Tensor<float> target({n, 1, fb, tb});
  Tensor<float> mix_const({n, 1, fb, tb});
  for (int i = 0; i < n; ++i) {
    std::copy(batch[static_cast<size_t>(i)]->wave.begin(),
              batch[static_cast<size_t>(i)]->wave.end(),
              wave.data() + static_cast<int64_t>(i) * mc.window_samples);
    std::copy(batch[static_cast<size_t>(i)]->mix_mag.begin(),
              batch[static_cast<size_t>(i)]->mix_mag.end(), mag.data() + i * plane);
    std::copy(batch[static_cast<size_t>(i)]->mix_mag.begin(),
              batch[static_cast<size_t>(i)]->mix_mag.end(), mix_const.data() + i * plane);
    std::copy(batch[static_cast<size_t>(i)]->vocal_mag.begin(),
              batch[static_cast<size_t>(i)]->vocal_mag.end(), target.data() + i * plane);
  }
  Tensor<float> out = forward_batch(wave, mag, mc, params, mode, rng);
  Tensor<float> estimate = mc.predicts_mask() ? mul(out, mix_const) : out;
  return mse(estimate, target);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<ExamplePair>& pairs,
                  const std::vector<ExamplePair>& val_pairs) {
  cfg.validate();
  if (pairs.empty()) throw UsageError("train: dataset is empty");

  std::mt19937 rng(static_cast<uint32_t>(cfg.seed ^ (cfg.seed >> 32) ^ 0x51ed2705u));
  ModelParams<float> params = init_model<float>(cfg.model, rng);
  std::vector<Tensor<float>> learnable = params.learnable(cfg.model);
  AdamState<float> opt(cfg.learning_rate);

  std::vector<PreparedPair> prepared;
  prepared.reserve(pairs.size());
  for (const auto& p : pairs) prepared.push_back(prepare(p, cfg.model, cfg.log_mag));
  std::vector<PreparedPair> val_prepared;
  for (const auto& p : val_pairs) val_prepared.push_back(prepare(p, cfg.model, cfg.log_mag));

  std::ofstream log;
  if (!cfg.loss_log_path.empty()) {
    log.open(cfg.loss_log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open loss log: " + cfg.loss_log_path);
    log << (val_prepared.empty() ? "epoch,step,train_loss" : "epoch,step,train_loss,val_loss")
        << "\n";
  }

  TrainResult result;
  result.initial_loss = -1.0;
  std::vector<size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);

  int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const PreparedPair*> batch;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)); ++i)
        batch.push_back(&prepared[order[i]]);
      Tensor<float> loss = batch_loss(batch, cfg.model, params, Mode::Train, &rng);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw InternalError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(epoch_batches + 1));
      if (result.initial_loss < 0.0) result.initial_loss = lv;
      backward(loss);
      adam_step(learnable, opt);
      zero_grads(learnable);
      ++step;
      epoch_loss += lv;
      ++epoch_batches;
      result.final_loss = lv;
      if (log) {
        const bool last_in_epoch = start + cfg.batch_size >= order.size();
        log << epoch << "," << step << "," << lv;
        if (!val_prepared.empty() && last_in_epoch) {
          double val = 0.0;
          for (const auto& vp : val_prepared) {
            std::vector<const PreparedPair*> one = {&vp};
            val += batch_loss(one, cfg.model, params, Mode::Eval, nullptr).item();
          }
          val /= static_cast<double>(val_prepared.size());
          result.epoch_val_loss.push_back(val);
          log << "," << val;
        }
        log << "\n";
      } else if (!val_prepared.empty() && start + cfg.batch_size >= order.size()) {
        double val = 0.0;
        for (const auto& vp : val_prepared) {
          std::vector<const PreparedPair*> one = {&vp};
          val += batch_loss(one, cfg.model, params, Mode::Eval, nullptr).item();
        }
        result.epoch_val_loss.push_back(val / static_cast<double>(val_prepared.size()));
      }
    }
    result.epoch_train_loss.push_back(epoch_loss / std::max(1, epoch_batches));

    if (!cfg.checkpoint_path.empty()) {
      sync_running_stats(params);
      Checkpoint ckpt{cfg.model, params, static_cast<uint64_t>(step)};
      save_checkpoint(ckpt, cfg.checkpoint_path);
    }
  }

  sync_running_stats(params);
  result.checkpoint = Checkpoint{cfg.model, std::move(params), static_cast<uint64_t>(step)};
  if (!cfg.checkpoint_path.empty()) save_checkpoint(result.checkpoint, cfg.checkpoint_path);
  return result;
}

}  // namespace ynet
