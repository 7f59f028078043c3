#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ynet/audio.hpp"
#include "ynet/train.hpp"

using namespace ynet;
namespace fs = std::filesystem;

namespace {

// miniature geometry whose STFT and filterbank both produce 64 x 32
ModelConfig tiny_config(Arch arch = Arch::YNet) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.base_channels = 2;
  cfg.freq_bins = 64;
  cfg.time_bins = 32;
  cfg.dropout = 0.0;
  cfg.stft_window = 128;
  cfg.stft_hop = 32;
  cfg.window_samples = (32 - 1) * 32 + 128;  // 1120
  cfg.filterbank.kernel_len = 128;
  cfg.filterbank.stride = 32;
  cfg.filterbank.kernels_per_group = {32, 16, 8, 4, 4};
  cfg.filterbank.target_frames = 32;
  return cfg;
}

TrainConfig tiny_train(Arch arch, uint64_t seed, const fs::path& dir) {
  TrainConfig cfg;
  cfg.model = tiny_config(arch);
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  cfg.checkpoint_path = (dir / "model.ckpt").string();
  cfg.loss_log_path = (dir / "loss.csv").string();
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("synth_dataset shapes, determinism, and mixture law") {
  auto a = synth_dataset(7, 3, 1120);
  auto b = synth_dataset(7, 3, 1120);
  REQUIRE(a.size() == 3);
  for (size_t p = 0; p < 3; ++p) {
    CHECK(a[p].mixture.size() == 1120);
    CHECK(a[p].vocals.size() == 1120);
    for (size_t i = 0; i < 1120; ++i) CHECK(a[p].mixture[i] == b[p].mixture[i]);
    double peak = 0;
    bool vocal_energy = false;
    for (size_t i = 0; i < 1120; ++i) {
      peak = std::max(peak, std::abs(a[p].mixture[i]));
      vocal_energy |= a[p].vocals[i] != 0.0;
    }
    CHECK(peak == doctest::Approx(0.9));
    CHECK(vocal_energy);
  }
  auto c = synth_dataset(8, 1, 1120);
  bool differs = false;
  for (size_t i = 0; i < 1120; ++i) differs |= c[0].mixture[i] != a[0].mixture[i];
  CHECK(differs);
  CHECK_THROWS_AS(synth_dataset(7, 0), UsageError);
}

TEST_CASE("build_dataset reads the stems layout") {
  const fs::path root = fs::temp_directory_path() / "train_ds";
  fs::remove_all(root);
  auto pairs = synth_dataset(3, 2, 1120);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const fs::path dir = root / ("song" + std::to_string(i));
    fs::create_directories(dir);
    write_wav(AudioClip{pairs[i].mixture, 44100}, (dir / "mixture.wav").string());
    write_wav(AudioClip{pairs[i].vocals, 44100}, (dir / "vocals.wav").string());
  }
  // a song without vocals gets skipped with a warning
  fs::create_directories(root / "song_broken");
  write_wav(AudioClip{pairs[0].mixture, 44100}, (root / "song_broken" / "mixture.wav").string());

  auto ds = build_dataset(root.string(), 1120);
  CHECK(ds.size() == 2);
  for (const auto& p : ds) {
    CHECK(p.mixture.size() == 1120);
    CHECK(p.vocals.size() == 1120);
  }
  CHECK_THROWS_AS(build_dataset((root / "missing").string(), 1120), IoError);
  fs::remove_all(root);
}

TEST_CASE("training runs, logs, and checkpoints") {
  const fs::path dir = fs::temp_directory_path() / "train_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  TrainConfig cfg = tiny_train(Arch::YNet, 5, dir);
  auto pairs = synth_dataset(5, 3, cfg.model.window_samples);
  auto val = synth_dataset(6, 1, cfg.model.window_samples);

  TrainResult res = train(cfg, pairs, val);
  CHECK(res.epoch_train_loss.size() == 2);
  CHECK(res.epoch_val_loss.size() == 2);
  CHECK(std::isfinite(res.final_loss));
  CHECK(fs::exists(cfg.checkpoint_path));
  CHECK(fs::exists(cfg.loss_log_path));

  std::ifstream f(cfg.loss_log_path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "epoch,step,train_loss,val_loss");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows >= 2);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give identical loss logs") {
  const fs::path d1 = fs::temp_directory_path() / "det1";
  const fs::path d2 = fs::temp_directory_path() / "det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::create_directories(d1);
  fs::create_directories(d2);
  auto pairs = synth_dataset(9, 3, 1120);
  TrainConfig c1 = tiny_train(Arch::YNet, 42, d1);
  TrainConfig c2 = tiny_train(Arch::YNet, 42, d2);
  train(c1, pairs);
  train(c2, pairs);
  const std::string l1 = slurp(c1.loss_log_path);
  const std::string l2 = slurp(c2.loss_log_path);
  CHECK(!l1.empty());
  CHECK(l1 == l2);

  // checkpoints from the two runs are byte-identical too
  CHECK(slurp(c1.checkpoint_path) == slurp(c2.checkpoint_path));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("empty dataset is a usage error") {
  TrainConfig cfg;
  cfg.model = tiny_config();
  CHECK_THROWS_AS(train(cfg, {}), UsageError);
}

TEST_CASE("unet variants train end to end") {
  for (Arch arch : {Arch::UNetSpec, Arch::UNetWave}) {
    const fs::path dir = fs::temp_directory_path() / ("train_" + arch_name(arch));
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig cfg = tiny_train(arch, 3, dir);
    cfg.epochs = 1;
    auto pairs = synth_dataset(4, 2, cfg.model.window_samples);
    TrainResult res = train(cfg, pairs);
    CHECK(std::isfinite(res.final_loss));
    CHECK(fs::exists(cfg.checkpoint_path));
    fs::remove_all(dir);
  }
}
