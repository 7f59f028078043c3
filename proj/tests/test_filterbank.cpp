#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ynet/filterbank.hpp"

using namespace ynet;

namespace {
Tensor<double> random_wave(int n, uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Tensor<double> t({1, n});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}
}  // namespace

TEST_CASE("config invariants") {
  FilterbankConfig cfg;
  CHECK(cfg.kernel_len == 2048);
  CHECK(cfg.stride == 512);
  CHECK(cfg.dilation_rates == std::vector<int>{1, 2, 4, 8, 16});
  CHECK(cfg.kernels_per_group == std::vector<int>{512, 256, 128, 64, 64});
  int total = 0;
  for (int k : cfg.kernels_per_group) total += k;
  CHECK(total == 1024);
  cfg.validate();

  FilterbankConfig bad = cfg;
  bad.kernels_per_group = {64, 256, 128, 64, 512};  // increasing
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.dilation_rates = {1, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("framing arithmetic holds for every dilation") {
  // pad 2047*(d-1), span 2047*d + 1, stride 512, n = 67072 -> 128 frames
  const int n = 67072, k = 2048, s = 512;
  for (int d : {1, 2, 4, 8, 16}) {
    const int pad = (k - 1) * (d - 1);
    const int span = (k - 1) * d + 1;
    const int frames = (n + pad - span) / s + 1;
    CHECK(frames == 128);
  }
}

TEST_CASE("output shape is 1024 x 128 and groups are ordered") {
  FilterbankConfig cfg;
  std::mt19937 rng(3);
  FilterbankParams<double> params = init_filterbank<double>(cfg, rng);
  Tensor<double> wave = random_wave(67072, 11);
  Tensor<double> out = learnable_spectrogram(wave, params, cfg);
  CHECK(out.shape() == std::vector<int>{1024, 128});

  // zeroing the d=1 group's weights zeroes exactly rows 0..511
  for (int64_t i = 0; i < params.weights[0].size(); ++i) params.weights[0].data()[i] = 0;
  for (int64_t i = 0; i < params.biases[0].size(); ++i) params.biases[0].data()[i] = 0;
  Tensor<double> out2 = learnable_spectrogram(wave, params, cfg);
  for (int r = 0; r < 512; ++r)
    for (int c = 0; c < 128; ++c) CHECK(out2.data()[static_cast<size_t>(r) * 128 + c] == 0.0);
  bool any_nonzero = false;
  for (int r = 512; r < 1024; ++r)
    for (int c = 0; c < 128; ++c) any_nonzero |= out2.data()[static_cast<size_t>(r) * 128 + c] != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("zero input gives zero output with zero biases") {
  FilterbankConfig cfg;
  std::mt19937 rng(5);
  FilterbankParams<double> params = init_filterbank<double>(cfg, rng);
  Tensor<double> wave({1, 67072});
  Tensor<double> out = learnable_spectrogram(wave, params, cfg);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("piecewise linearity: doubling input doubles output where signs hold") {
  FilterbankConfig cfg;
  cfg.kernel_len = 64;
  cfg.stride = 32;
  cfg.kernels_per_group = {8, 4, 2, 1, 1};
  cfg.target_frames = 32;
  const int n = (cfg.target_frames - 1) * cfg.stride + cfg.kernel_len;  // 1056
  std::mt19937 rng(7);
  FilterbankParams<double> params = init_filterbank<double>(cfg, rng);
  Tensor<double> wave = random_wave(n, 13);
  Tensor<double> wave2({1, n});
  for (int64_t i = 0; i < wave.size(); ++i) wave2.data()[i] = 2 * wave.data()[i];
  Tensor<double> a = learnable_spectrogram(wave, params, cfg);
  Tensor<double> b = learnable_spectrogram(wave2, params, cfg);
  // zero biases mean pre-activation signs are preserved under positive scaling,
  // so leaky-ReLU outputs scale exactly
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(b.data()[i] == doctest::Approx(2 * a.data()[i]).epsilon(1e-9));
}

TEST_CASE("wrong input length names the offending group") {
  FilterbankConfig cfg;
  std::mt19937 rng(9);
  FilterbankParams<double> params = init_filterbank<double>(cfg, rng);
  Tensor<double> wave = random_wave(67000, 17);
  CHECK_THROWS_AS(learnable_spectrogram(wave, params, cfg), ConfigError);
}

TEST_CASE("kernel gradients match finite differences (small config)") {
  FilterbankConfig cfg;
  cfg.kernel_len = 16;
  cfg.stride = 8;
  cfg.kernels_per_group = {4, 2, 2, 1, 1};
  cfg.target_frames = 8;
  const int n = (cfg.target_frames - 1) * cfg.stride + cfg.kernel_len;
  std::mt19937 rng(21);
  FilterbankParams<double> params = init_filterbank<double>(cfg, rng);
  Tensor<double> wave = random_wave(n, 23);

  // fixed readout so the scalar objective is deterministic
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> out0 = learnable_spectrogram(wave, params, cfg);
  Tensor<double> rw(out0.shape());
  for (int64_t i = 0; i < rw.size(); ++i) rw.data()[i] = u(rng);

  auto f = [&]() { return sum(mul(learnable_spectrogram(wave, params, cfg), rw)); };
  Tensor<double> loss = f();
  backward(loss);

  const double h = 1e-5;
  for (size_t g = 0; g < params.weights.size(); ++g) {
    auto& w = params.weights[g];
    for (int64_t i = 0; i < std::min<int64_t>(w.size(), 6); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double fp = f().item();
      w.data()[i] = orig - h;
      const double fm = f().item();
      w.data()[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double an = w.grad()[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
      INFO("group ", g, " index ", i);
      CHECK(std::abs(fd - an) / denom < 1e-4);
    }
  }
}
