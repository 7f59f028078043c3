#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ynet/checkpoint.hpp"
#include "ynet/model.hpp"

using namespace ynet;
namespace fs = std::filesystem;

namespace {

// miniature geometry used everywhere model evaluation is needed
ModelConfig tiny_config(Arch arch = Arch::YNet) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.base_channels = 2;
  cfg.freq_bins = 64;
  cfg.time_bins = 32;
  cfg.dropout = 0.0;
  cfg.filterbank.kernel_len = 64;
  cfg.filterbank.stride = 32;
  cfg.filterbank.kernels_per_group = {32, 16, 8, 4, 4};
  cfg.filterbank.target_frames = 32;
  cfg.window_samples = (32 - 1) * 32 + 64;  // 1056
  cfg.stft_window = 64;
  cfg.stft_hop = 32;
  return cfg;
}

template <typename S>
void fill_random(Tensor<S>& t, std::mt19937& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(u(rng));
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg;
  cfg.validate();  // defaults are valid
  CHECK(cfg.freq_bins % (1 << cfg.depth) == 0);
  CHECK(cfg.time_bins % (1 << cfg.depth) == 0);

  ModelConfig bad = cfg;
  bad.freq_bins = 1000;  // not divisible by 32
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.hardtanh_lo = 1.0;
  bad.hardtanh_hi = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK(parse_arch("unet-spec") == Arch::UNetSpec);
  CHECK(parse_arch("unet_wave") == Arch::UNetWave);
  CHECK_THROWS_AS(parse_arch("vnet"), ConfigError);
}

TEST_CASE("parameter counting properties") {
  ModelConfig y; y.base_channels = 4;
  ModelConfig us = y; us.architecture = Arch::UNetSpec;
  ModelConfig uw = y; uw.architecture = Arch::UNetWave;
  const int64_t cy = param_count(y), cs = param_count(us), cw = param_count(uw);
  CHECK(cy < cs + cw);   // one decoder instead of two
  CHECK(cs < cy);        // one branch fewer
  CHECK(cw < cy);

  // invariant to dropout and hardtanh bounds
  ModelConfig y2 = y;
  y2.dropout = 0.4;
  y2.hardtanh_hi = 2.0;
  CHECK(param_count(y2) == cy);

  // doubling base roughly quadruples the conv-dominaned count
  ModelConfig y8 = y; y8.base_channels = 8;
  // remove the filterbank term, which is linear in nothing (fixed size)
  int64_t fb = 0;
  for (int k : y.filterbank.kernels_per_group) fb += static_cast<int64_t>(k) * (y.filterbank.kernel_len + 1);
  const double ratio = static_cast<double>(param_count(y8) - fb) / static_cast<double>(cy - fb);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.3);
}

TEST_CASE("parameter name audit per architecture") {
  ModelConfig y = tiny_config(Arch::YNet);
  ModelConfig us = tiny_config(Arch::UNetSpec);
  ModelConfig uw = tiny_config(Arch::UNetWave);
  auto has_prefix = [](const ModelConfig& cfg, const std::string& p) {
    for (const auto& s : parameter_specs(cfg))
      if (s.name.rfind(p, 0) == 0) return true;
    return false;
  };
  CHECK(has_prefix(y, "fb."));
  CHECK(has_prefix(y, "wave."));
  CHECK(has_prefix(y, "spec."));
  CHECK(!has_prefix(us, "fb."));
  CHECK(!has_prefix(us, "wave."));
  CHECK(has_prefix(us, "spec."));
  CHECK(has_prefix(uw, "fb."));
  CHECK(has_prefix(uw, "wave."));
  CHECK(!has_prefix(uw, "spec."));
}

TEST_CASE("forward shape, hardtanh range, and eval determinism") {
  for (Arch arch : {Arch::YNet, Arch::UNetSpec, Arch::UNetWave}) {
    ModelConfig cfg = tiny_config(arch);
    std::mt19937 rng(17);
    ModelParams<double> params = init_model<double>(cfg, rng);
    Tensor<double> wave({1, cfg.window_samples});
    Tensor<double> mag({1, cfg.freq_bins, cfg.time_bins});
    fill_random(wave, rng);
    fill_random(mag, rng, 1.0);
    for (int64_t i = 0; i < mag.size(); ++i) mag.data()[i] = std::abs(mag.data()[i]);

    Tensor<double> out = forward(wave, mag, cfg, params, Mode::Eval);
    CHECK(out.shape() == std::vector<int>{1, cfg.freq_bins, cfg.time_bins});
    if (cfg.predicts_mask()) {
      for (int64_t i = 0; i < out.size(); ++i) {
        CHECK(out.data()[i] >= cfg.hardtanh_lo);
        CHECK(out.data()[i] <= cfg.hardtanh_hi);
      }
    }

    Tensor<double> out2 = forward(wave, mag, cfg, params, Mode::Eval);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == out2.data()[i]);
  }
}

TEST_CASE("all-zero inputs give a deterministic finite mask") {
  ModelConfig cfg = tiny_config();
  std::mt19937 rng(23);
  ModelParams<double> params = init_model<double>(cfg, rng);
  Tensor<double> wave({1, cfg.window_samples});
  Tensor<double> mag({1, cfg.freq_bins, cfg.time_bins});
  Tensor<double> a = forward(wave, mag, cfg, params, Mode::Eval);
  Tensor<double> b = forward(wave, mag, cfg, params, Mode::Eval);
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(std::isfinite(a.data()[i]));
    CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("gradient reaches both branches of the ynet") {
  ModelConfig cfg = tiny_config();
  std::mt19937 rng(29);
  ModelParams<double> params = init_model<double>(cfg, rng);
  Tensor<double> wave({1, cfg.window_samples});
  Tensor<double> mag({1, cfg.freq_bins, cfg.time_bins});
  fill_random(wave, rng);
  fill_random(mag, rng, 1.0);

  Tensor<double> out = forward(wave, mag, cfg, params, Mode::Train, &rng);
  Tensor<double> target(out.shape());
  fill_random(target, rng);
  Tensor<double> loss = mse(out, target);
  backward(loss);

  auto grad_norm = [&](const std::string& name) {
    double n = 0;
    auto& t = params.at(name);
    if (!t.has_grad()) return 0.0;
    for (double g : t.grad()) n += g * g;
    return n;
  };
  CHECK(grad_norm("wave.enc1.conv1.weight") > 0.0);
  CHECK(grad_norm("spec.enc1.conv1.weight") > 0.0);
  CHECK(grad_norm("fb.g0.weight") > 0.0);
  CHECK(grad_norm("head.weight") > 0.0);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  ModelConfig cfg = tiny_config();
  std::mt19937 rng(31);
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_model<float>(cfg, rng);
  ckpt.step = 1234;

  const std::string path = (fs::temp_directory_path() / "roundtrip.ckpt").string();
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 1234);
  CHECK(back.config.architecture == cfg.architecture);
  CHECK(back.config.base_channels == cfg.base_channels);
  CHECK(back.config.freq_bins == cfg.freq_bins);
  CHECK(back.config.window_samples == cfg.window_samples);

  for (const auto& spec : parameter_specs(cfg)) {
    auto& a = ckpt.params.at(spec.name);
    auto& b = back.params.at(spec.name);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }

  // save-load-save produces an identical file
  const std::string path2 = (fs::temp_directory_path() / "roundtrip2.ckpt").string();
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("corrupted checkpoints are rejected") {
  ModelConfig cfg = tiny_config();
  std::mt19937 rng(37);
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_model<float>(cfg, rng);
  const std::string path = (fs::temp_directory_path() / "corrupt.ckpt").string();
  save_checkpoint(ckpt, path);

  // flip the magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XNET", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  // truncate
  save_checkpoint(ckpt, path);
  fs::resize_file(path, fs::file_size(path) / 2);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.ckpt"), IoError);
  fs::remove(path);
}

TEST_CASE("config text round trip") {
  ModelConfig cfg = tiny_config(Arch::UNetWave);
  cfg.dropout = 0.25;
  ModelConfig back = config_from_text(config_to_text(cfg));
  CHECK(back.architecture == Arch::UNetWave);
  CHECK(back.dropout == cfg.dropout);
  CHECK(back.filterbank.kernels_per_group == cfg.filterbank.kernels_per_group);
  CHECK_THROWS_AS(config_from_text("architecture=\n"), FormatError);
}
