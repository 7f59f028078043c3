#pragma once

// The Y-Net mask estimator and its two single-branch ablations. A dual
// encoder (spectral + waveform) meets at a shared core and decodes through a
// single decoder with skip connections from both branches.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ynet/errors.hpp"
#include "ynet/filterbank.hpp"
#include "ynet/tensor.hpp"

namespace ynet {

enum class Arch { YNet, UNetSpec, UNetWave };

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::YNet: return "ynet";
    case Arch::UNetSpec: return "unet_spec";
    case Arch::UNetWave: return "unet_wave";
  }
  throw ConfigError("unknown architecture");
}

inline Arch parse_arch(const std::string& s) {
  if (s == "ynet") return Arch::YNet;
  if (s == "unet_spec" || s == "unet-spec") return Arch::UNetSpec;
  if (s == "unet_wave" || s == "unet-wave") return Arch::UNetWave;
  throw ConfigError("unknown architecture: " + s);
}

struct ModelConfig {
  Arch architecture = Arch::YNet;
  int base_channels = 16;
  int depth = 5;
  std::vector<int> encoder_dilations = {1, 2, 4, 8, 16};
  double dropout = 0.1;
  double hardtanh_lo = 0.0;
  double hardtanh_hi = 1.0;
  int freq_bins = 1024;
  int time_bins = 128;
  int window_samples = 67072;
  int stft_window = 2048;
  int stft_hop = 512;
  FilterbankConfig filterbank;

  bool has_wave_branch() const { return architecture != Arch::UNetSpec; }
  bool has_spec_branch() const { return architecture != Arch::UNetWave; }
  // The ablation without a spectral branch predicts the magnitude directly
  // rather than a mask over the mixture spectrogram.
  bool predicts_mask() const { return architecture != Arch::UNetWave; }

  void validate() const {
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (static_cast<int>(encoder_dilations.size()) != depth)
      throw ConfigError("encoder_dilations must list one rate per level");
    const int div = 1 << depth;
    if (freq_bins % div || time_bins % div)
      throw ConfigError("spectral dims " + std::to_string(freq_bins) + "x" +
                        std::to_string(time_bins) + " must be divisible by 2^depth");
    if (!(hardtanh_lo < hardtanh_hi)) throw ConfigError("hardtanh bounds must satisfy lo < hi");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (has_wave_branch()) {
      filterbank.validate();
      if (filterbank.total_kernels() != freq_bins)
        throw ConfigError("filterbank kernels must sum to freq_bins");
      if (filterbank.target_frames != time_bins)
        throw ConfigError("filterbank target_frames must equal time_bins");
    }
  }
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  bool learnable = true;
};

// Canonical parameter layout; the order here fixes initialization draws and
// the checkpoint tensor order.
inline std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  const int b = cfg.base_channels;
  auto conv = [&](const std::string& name, int co, int ci, int k) {
    out.push_back({name + ".weight", {co, ci, k, k}, true});
    out.push_back({name + ".bias", {co}, true});
  };
  auto bn = [&](const std::string& name, int c) {
    out.push_back({name + ".gamma", {c}, true});
    out.push_back({name + ".beta", {c}, true});
    out.push_back({name + ".running_mean", {c}, false});
    out.push_back({name + ".running_var", {c}, false});
  };
  auto branch = [&](const std::string& prefix) {
    conv(prefix + ".stem", b, 1, 3);
    for (int k = 1; k <= cfg.depth; ++k) {
      const std::string e = prefix + ".enc" + std::to_string(k);
      const int cin = b << (k - 1), cout = b << k;
      bn(e + ".bn", cin);
      conv(e + ".conv1", cout, cin, 3);
      conv(e + ".conv2", cout, cout, 3);
    }
  };

  if (cfg.has_wave_branch()) {
    for (size_t g = 0; g < cfg.filterbank.dilation_rates.size(); ++g) {
      const int k = cfg.filterbank.kernels_per_group[g];
      out.push_back({"fb.g" + std::to_string(g) + ".weight", {k, 1, cfg.filterbank.kernel_len},
                     true});
      out.push_back({"fb.g" + std::to_string(g) + ".bias", {k}, true});
    }
    branch("wave");
  }
  if (cfg.has_spec_branch()) branch("spec");

  // The core's first conv reduces the (possibly concatenated) channel count
  // back to one branch's deepest width; this is what keeps the two-encoder /
  // one-decoder layout cheaper than two full single-branch networks.
  const int c_deep = b << cfg.depth;
  const int core_in = cfg.architecture == Arch::YNet ? 2 * c_deep : c_deep;
  conv("core.conv1", c_deep, core_in, 3);
  conv("core.conv2", c_deep, c_deep, 3);
  bn("core.bn", c_deep);

  const int skips = cfg.architecture == Arch::YNet ? 2 : 1;
  for (int k = cfg.depth; k >= 1; --k) {
    const std::string d = "dec" + std::to_string(k);
    const int up_ch = k == cfg.depth ? c_deep : (b << k);
    const int cat_ch = up_ch + skips * (b << k);
    const int o = b << (k - 1);
    conv(d + ".conv1", o, cat_ch, 3);
    conv(d + ".conv2", o, o, 3);
    bn(d + ".bn", o);
  }
  conv("head", 1, b, 1);
  return out;
}

inline int64_t param_count(const ModelConfig& cfg) {
  int64_t n = 0;
  for (const auto& spec : parameter_specs(cfg)) {
    if (!spec.learnable) continue;
    int64_t k = 1;
    for (int d : spec.shape) k *= d;
    n += k;
  }
  return n;
}

template <typename S>
struct ModelParams {
  std::map<std::string, Tensor<S>> tensors;
  std::map<std::string, BatchNormState<S>> bn_stats;

  Tensor<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing model parameter: " + name);
    return it->second;
  }
  BatchNormState<S>& bn(const std::string& prefix) { return bn_stats[prefix]; }

  std::vector<Tensor<S>> learnable(const ModelConfig& cfg) {
    std::vector<Tensor<S>> out;
    for (const auto& spec : parameter_specs(cfg))
      if (spec.learnable) out.push_back(at(spec.name));
    return out;
  }
};

template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg, std::mt19937& rng) {
  ModelParams<S> params;
  for (const auto& spec : parameter_specs(cfg)) {
    Tensor<S> t(spec.shape, spec.learnable);
    const bool is_weight = spec.name.size() > 7 &&
                           spec.name.compare(spec.name.size() - 7, 7, ".weight") == 0;
    if (is_weight || spec.name == "head.weight") {
      int64_t fan_in = 1;
      for (size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(u(rng));
    } else if (spec.name.size() > 6 &&
               spec.name.compare(spec.name.size() - 6, 6, ".gamma") == 0) {
      std::fill_n(t.data(), t.size(), S(1));
    } else if (spec.name.size() > 12 &&
               spec.name.compare(spec.name.size() - 12, 12, ".running_var") == 0) {
      std::fill_n(t.data(), t.size(), S(1));
    }
    // biases, betas and running means stay zero
    params.tensors.emplace(spec.name, std::move(t));
  }
  for (const auto& [name, t] : params.tensors) {
    if (name.size() > 13 && name.compare(name.size() - 13, 13, ".running_mean") == 0) {
      const std::string prefix = name.substr(0, name.size() - 13);
      auto& state = params.bn_stats[prefix];
      state.running_mean = t.values();
      state.running_var = params.tensors.at(prefix + ".running_var").values();
      state.initialized = false;
    }
  }
  return params;
}

// Mirror live batchnorm statistics back into their named tensors so that a
// checkpoint written afterwards is self-contained.
template <typename S>
void sync_running_stats(ModelParams<S>& params) {
  for (auto& [prefix, state] : params.bn_stats) {
    if (state.running_mean.empty()) continue;
    params.at(prefix + ".running_mean").values() = state.running_mean;
    params.at(prefix + ".running_var").values() = state.running_var;
  }
}

namespace detail {

template <typename S>
struct EncoderOut {
  Tensor<S> out;
  std::vector<Tensor<S>> skips;  // shallowest first
};

template <typename S>
Tensor<S> branch_act(const Tensor<S>& x, bool waveform, double slope) {
  return waveform ? leaky_relu(x, static_cast<S>(slope)) : relu(x);
}

template <typename S>
EncoderOut<S> run_encoder(Tensor<S> x, const std::string& prefix, bool waveform,
                          const ModelConfig& cfg, ModelParams<S>& params, Mode mode,
                          std::mt19937* rng) {
  const double slope = cfg.filterbank.leaky_slope;
  x = conv2d(x, params.at(prefix + ".stem.weight"), params.at(prefix + ".stem.bias"), 1);
  EncoderOut<S> r;
  for (int k = 1; k <= cfg.depth; ++k) {
    const std::string e = prefix + ".enc" + std::to_string(k);
    const int dil = cfg.encoder_dilations[static_cast<size_t>(k - 1)];
    Tensor<S> h = batchnorm2d(x, params.at(e + ".bn.gamma"), params.at(e + ".bn.beta"),
                              params.bn(e + ".bn"), mode);
    h = branch_act(conv2d(h, params.at(e + ".conv1.weight"), params.at(e + ".conv1.bias"), dil),
                   waveform, slope);
    h = branch_act(conv2d(h, params.at(e + ".conv2.weight"), params.at(e + ".conv2.bias"), dil),
                   waveform, slope);
    r.skips.push_back(h);  // skip leaves before pooling
    h = maxpool2d(h);
    if (mode == Mode::Train && cfg.dropout > 0.0) {
      if (!rng) throw UsageError("train-mode forward needs an RNG for dropout");
      h = dropout(h, cfg.dropout, mode, *rng);
    }
    x = h;
  }
  r.out = x;
  return r;
}

}  // namespace detail

// wave [N x n] (ignored without a waveform branch), mag [N x 1 x F x T]
// (ignored without a spectral branch). Returns [N x 1 x F x T] in the
// hardtanh bounds.
template <typename S>
Tensor<S> forward_batch(const Tensor<S>& wave, const Tensor<S>& mag, const ModelConfig& cfg,
                        ModelParams<S>& params, Mode mode, std::mt19937* rng = nullptr) {
  cfg.validate();
  int n = 0;
  if (cfg.has_spec_branch()) {
    if (mag.rank() != 4 || mag.dim(1) != 1 || mag.dim(2) != cfg.freq_bins ||
        mag.dim(3) != cfg.time_bins)
      throw ConfigError("forward: magnitude must be [N x 1 x " + std::to_string(cfg.freq_bins) +
                        " x " + std::to_string(cfg.time_bins) + "]");
    n = mag.dim(0);
  }
  if (cfg.has_wave_branch()) {
    if (wave.rank() != 2) throw ConfigError("forward: wave must be [N x samples]");
    if (n && wave.dim(0) != n) throw ConfigError("forward: wave/magnitude batch mismatch");
    n = wave.dim(0);
  }

  std::optional<detail::EncoderOut<S>> spec_enc, wave_enc;
  if (cfg.has_wave_branch()) {
    FilterbankParams<S> fb;
    for (size_t g = 0; g < cfg.filterbank.dilation_rates.size(); ++g) {
      fb.weights.push_back(params.at("fb.g" + std::to_string(g) + ".weight"));
      fb.biases.push_back(params.at("fb.g" + std::to_string(g) + ".bias"));
    }
    std::vector<Tensor<S>> planes;
    for (int i = 0; i < n; ++i) {
      Tensor<S> w = reshape(slice(wave, 0, i, 1), {1, wave.dim(1)});
      Tensor<S> plane = learnable_spectrogram(w, fb, cfg.filterbank);
      planes.push_back(reshape(plane, {1, 1, cfg.freq_bins, cfg.time_bins}));
    }
    Tensor<S> stacked = planes.size() == 1 ? planes[0] : concat(planes, 0);
    wave_enc = detail::run_encoder(stacked, "wave", true, cfg, params, mode, rng);
  }
  if (cfg.has_spec_branch())
    spec_enc = detail::run_encoder(mag, "spec", false, cfg, params, mode, rng);

  Tensor<S> core_in;
  if (cfg.architecture == Arch::YNet)
    core_in = concat<S>({spec_enc->out, wave_enc->out}, 1);
  else
    core_in = cfg.has_spec_branch() ? spec_enc->out : wave_enc->out;

  Tensor<S> h = relu(conv2d(core_in, params.at("core.conv1.weight"),
                            params.at("core.conv1.bias"), 1));
  h = conv2d(h, params.at("core.conv2.weight"), params.at("core.conv2.bias"), 1);
  h = batchnorm2d(h, params.at("core.bn.gamma"), params.at("core.bn.beta"), params.bn("core.bn"),
                  mode);
  h = relu(h);

  for (int k = cfg.depth; k >= 1; --k) {
    const std::string d = "dec" + std::to_string(k);
    h = upsample2x(h);
    std::vector<Tensor<S>> cat = {h};
    if (spec_enc) cat.push_back(spec_enc->skips[static_cast<size_t>(k - 1)]);
    if (wave_enc) cat.push_back(wave_enc->skips[static_cast<size_t>(k - 1)]);
    h = cat.size() == 1 ? h : concat(cat, 1);
    h = relu(conv2d(h, params.at(d + ".conv1.weight"), params.at(d + ".conv1.bias"), 1));
    h = relu(conv2d(h, params.at(d + ".conv2.weight"), params.at(d + ".conv2.bias"), 1));
    h = batchnorm2d(h, params.at(d + ".bn.gamma"), params.at(d + ".bn.beta"),
                    params.bn(d + ".bn"), mode);
  }

  h = conv2d(h, params.at("head.weight"), params.at("head.bias"), 1);
  return hardtanh(h, static_cast<S>(cfg.hardtanh_lo), static_cast<S>(cfg.hardtanh_hi));
}

// Single-example convenience: wave [1 x n], mag [1 x F x T] -> [1 x F x T].
template <typename S>
Tensor<S> forward(const Tensor<S>& wave, const Tensor<S>& mag, const ModelConfig& cfg,
                  ModelParams<S>& params, Mode mode, std::mt19937* rng = nullptr) {
  Tensor<S> mag4;
  if (mag.defined() && mag.rank() == 3)
    mag4 = reshape(mag, {1, mag.dim(0), mag.dim(1), mag.dim(2)});
  else
    mag4 = mag;
  Tensor<S> out = forward_batch(wave, mag4, cfg, params, mode, rng);
  return reshape(out, {1, cfg.freq_bins, cfg.time_bins});
}

}  // namespace ynet
