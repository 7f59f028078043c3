#include "ynet/separate.hpp"

#include <algorithm>
#include <cmath>

#include "ynet/errors.hpp"

namespace ynet {

SeparationResult separate(const AudioClip& mixture, Checkpoint& ckpt,
                          const SeparateOptions& opts) {
  const ModelConfig& cfg = ckpt.config;
  cfg.validate();
  const int win = cfg.window_samples;
  const int64_t n = static_cast<int64_t>(mixture.samples.size());
  const int64_t windows = std::max<int64_t>(1, (n + win - 1) / win);

  StftConfig stft_cfg;
  stft_cfg.window_len = cfg.stft_window;
  stft_cfg.hop = cfg.stft_hop;
  stft_cfg.freq_bins = cfg.freq_bins;

  SeparationResult result;
  result.vocal.sample_rate = mixture.sample_rate;
  result.vocal.samples.assign(static_cast<size_t>(windows) * win, 0.0);
  result.mask_rows = cfg.freq_bins;
  result.mask_cols = static_cast<int>(windows) * cfg.time_bins;
  result.mask.assign(static_cast<size_t>(result.mask_rows) * result.mask_cols, 0.0);

  for (int64_t w = 0; w < windows; ++w) {
    AudioClip window;
    window.sample_rate = mixture.sample_rate;
    window.samples.assign(static_cast<size_t>(win), 0.0);
    const int64_t start = w * win;
    const int64_t copy = std::min<int64_t>(win, std::max<int64_t>(0, n - start));
    std::copy_n(mixture.samples.begin() + start, copy, window.samples.begin());

    ComplexSpectrogram spec = stft(window, stft_cfg);
    if (spec.time_bins != cfg.time_bins)
      throw ConfigError("separate: window produced " + std::to_string(spec.time_bins) +
                        " time bins, model expects " + std::to_string(cfg.time_bins));

    std::vector<float> mask_vals(static_cast<size_t>(cfg.freq_bins) * cfg.time_bins);
    if (opts.force_mask) {
      std::fill(mask_vals.begin(), mask_vals.end(), static_cast<float>(*opts.force_mask));
    } else {
      Tensor<float> wave({1, win});
      for (int i = 0; i < win; ++i)
        wave.data()[i] = static_cast<float>(window.samples[static_cast<size_t>(i)]);
      Tensor<float> mag({1, cfg.freq_bins, cfg.time_bins});
      for (size_t i = 0; i < spec.magnitude.size(); ++i)
        mag.data()[static_cast<int64_t>(i)] = static_cast<float>(spec.magnitude[i]);
      Tensor<float> mask = forward(wave, mag, cfg, ckpt.params, Mode::Eval);
      std::copy_n(mask.data(), mask.size(), mask_vals.begin());
    }

    // est_mag = mask * mixture magnitude, clamped at zero; the wave-only
    // ablation's head output is already the magnitude estimate.
    ComplexSpectrogram est = spec;  // phase plane kept bit-identical
    for (int f = 0; f < cfg.freq_bins; ++f)
      for (int t = 0; t < cfg.time_bins; ++t) {
        const double m = mask_vals[static_cast<size_t>(f) * cfg.time_bins + t];
        const double v = cfg.predicts_mask() || opts.force_mask ? m * spec.mag(f, t) : m;
        est.mag(f, t) = std::max(0.0, v);
        result.mask[static_cast<size_t>(f) * result.mask_cols + w * cfg.time_bins + t] = m;
      }

    AudioClip rec = istft(est);
    std::copy_n(rec.samples.begin(), win, result.vocal.samples.begin() + start);
  }

  result.vocal.samples.resize(static_cast<size_t>(std::max<int64_t>(n, 0)));
  return result;
}

}  // namespace ynet
