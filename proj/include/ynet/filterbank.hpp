#pragma once

// Learnable spectrogram front end: five groups of dilated 1-D convolutions
// over the raw waveform, each strided to emit exactly the spectrogram's time
// bin count, concatenated along the row axis in dilation order.

#include <numeric>
#include <string>
#include <vector>

#include "ynet/errors.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

struct FilterbankConfig {
  int kernel_len = 2048;
  std::vector<int> dilation_rates = {1, 2, 4, 8, 16};
  std::vector<int> kernels_per_group = {512, 256, 128, 64, 64};
  int stride = 512;
  int target_frames = 128;
  double leaky_slope = 0.01;

  int total_kernels() const {
    return std::accumulate(kernels_per_group.begin(), kernels_per_group.end(), 0);
  }

  void validate() const {
    if (dilation_rates.size() != kernels_per_group.size())
      throw ConfigError("filterbank: dilation_rates and kernels_per_group lengths differ");
    if (dilation_rates.empty()) throw ConfigError("filterbank: needs at least one group");
    for (size_t i = 1; i < kernels_per_group.size(); ++i)
      if (kernels_per_group[i] > kernels_per_group[i - 1])
        throw ConfigError("filterbank: kernels_per_group must be non-increasing");
    if (kernel_len < 1 || stride < 1 || target_frames < 1)
      throw ConfigError("filterbank: kernel_len, stride, target_frames must be >= 1");
  }
};

template <typename S>
struct FilterbankParams {
  std::vector<Tensor<S>> weights;  // per group: [kernels x 1 x kernel_len]
  std::vector<Tensor<S>> biases;   // per group: [kernels]
};

template <typename S>
FilterbankParams<S> init_filterbank(const FilterbankConfig& cfg, std::mt19937& rng) {
  cfg.validate();
  FilterbankParams<S> p;
  const double bound = std::sqrt(1.0 / cfg.kernel_len);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (size_t g = 0; g < cfg.dilation_rates.size(); ++g) {
    const int k = cfg.kernels_per_group[g];
    Tensor<S> w({k, 1, cfg.kernel_len}, true);
    for (int64_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(u(rng));
    Tensor<S> b({k}, true);  // zero-initialized
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

// wave [1 x n] -> [total_kernels x target_frames]. Each group pads the input
// symmetrically by (kernel_len-1)*(dilation-1) total samples, which keeps the
// frame count identical across dilations at a fixed stride.
template <typename S>
Tensor<S> learnable_spectrogram(const Tensor<S>& wave, const FilterbankParams<S>& params,
                                const FilterbankConfig& cfg) {
  cfg.validate();
  if (wave.rank() != 2 || wave.dim(0) != 1)
    throw ConfigError("learnable_spectrogram expects wave [1 x n]");
  if (params.weights.size() != cfg.dilation_rates.size())
    throw ConfigError("learnable_spectrogram: parameter group count mismatch");
  const int n = wave.dim(1);

  std::vector<Tensor<S>> groups;
  for (size_t g = 0; g < cfg.dilation_rates.size(); ++g) {
    const int d = cfg.dilation_rates[g];
    const int pad_total = (cfg.kernel_len - 1) * (d - 1);
    const int pad_left = pad_total / 2;
    const int pad_right = pad_total - pad_left;
    const int span = (cfg.kernel_len - 1) * d + 1;
    const int frames = (n + pad_total - span) / cfg.stride + 1;
    if (frames != cfg.target_frames)
      throw ConfigError("filterbank group " + std::to_string(g) + " (dilation " +
                        std::to_string(d) + ") yields " + std::to_string(frames) +
                        " frames, expected " + std::to_string(cfg.target_frames));
    Tensor<S> conv = conv1d(wave, params.weights[g], params.biases[g], cfg.stride, d, pad_left,
                            pad_right);
    groups.push_back(leaky_relu(conv, static_cast<S>(cfg.leaky_slope)));
  }
  return concat(groups, 0);
}

}  // namespace ynet
