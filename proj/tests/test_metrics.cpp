#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ynet/audio.hpp"
#include "ynet/errors.hpp"
#include "ynet/metrics.hpp"

using namespace ynet;
namespace fs = std::filesystem;

namespace {
constexpr double kPi = 3.14159265358979323846;

AudioClip random_clip(int n, uint64_t seed, int sr = 44100) {
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::normal_distribution<double> g(0.0, 0.2);
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(static_cast<size_t>(n));
  for (auto& s : c.samples) s = g(rng);
  return c;
}

// speech-like: slow amplitude modulation over a few harmonics
AudioClip speechy(int n, uint64_t seed, int sr = 44100) {
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::uniform_real_distribution<double> u(0.8, 1.2);
  AudioClip c;
  c.sample_rate = sr;
  c.samples.assign(static_cast<size_t>(n), 0.0);
  const double f0 = 180.0 * u(rng);
  for (int h = 1; h <= 5; ++h) {
    const double ph = u(rng);
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double env = 0.5 + 0.5 * std::sin(2 * kPi * 3.1 * t + ph);
      c.samples[static_cast<size_t>(i)] += (0.3 / h) * env * std::sin(2 * kPi * f0 * h * t + ph);
    }
  }
  return c;
}
}  // namespace

TEST_CASE("sdr analytic values") {
  AudioClip s = random_clip(44100, 1);
  CHECK(sdr(s, s) == doctest::Approx(100.0));

  AudioClip neg = s;
  for (auto& v : neg.samples) v = -v;
  CHECK(sdr(s, neg) == doctest::Approx(10.0 * std::log10(0.25)).epsilon(1e-4));
  CHECK(std::abs(sdr(s, neg) + 6.02) < 0.01);

  // construct orthogonal noise at exactly 20 dB below the signal
  AudioClip n = random_clip(44100, 2);
  double ms = 0, mn = 0;
  for (size_t i = 0; i < s.samples.size(); ++i) { ms += s.samples[i]; mn += n.samples[i]; }
  ms /= s.samples.size(); mn /= n.samples.size();
  std::vector<double> sc(s.samples.size()), nc(s.samples.size());
  for (size_t i = 0; i < s.samples.size(); ++i) { sc[i] = s.samples[i] - ms; nc[i] = n.samples[i] - mn; }
  double dot = 0, ss = 0;
  for (size_t i = 0; i < sc.size(); ++i) { dot += nc[i] * sc[i]; ss += sc[i] * sc[i]; }
  for (size_t i = 0; i < nc.size(); ++i) nc[i] -= (dot / ss) * sc[i];
  double nn = 0;
  for (double v : nc) nn += v * v;
  const double scale = std::sqrt(ss / (100.0 * nn));
  AudioClip est = s;
  for (size_t i = 0; i < est.samples.size(); ++i) est.samples[i] = sc[i] + scale * nc[i];
  AudioClip ref = s;
  for (size_t i = 0; i < ref.samples.size(); ++i) ref.samples[i] = sc[i];
  CHECK(sdr(ref, est) == doctest::Approx(20.0).epsilon(1e-4));
}

TEST_CASE("sdr usage errors") {
  AudioClip s = random_clip(1000, 3);
  AudioClip zero;
  zero.samples.assign(1000, 0.0);
  CHECK_THROWS_AS(sdr(zero, s), UsageError);
  AudioClip shorter = random_clip(999, 4);
  CHECK_THROWS_AS(sdr(s, shorter), UsageError);
}

TEST_CASE("si_snr scale invariance and caps") {
  AudioClip s = random_clip(44100, 5);
  AudioClip scaled = s;
  for (auto& v : scaled.samples) v *= 3.7;
  CHECK(si_snr(s, scaled) == doctest::Approx(100.0));

  AudioClip est = random_clip(44100, 6);
  const double base = si_snr(s, est);
  for (double a : {0.1, 10.0}) {
    AudioClip e2 = est;
    for (auto& v : e2.samples) v *= a;
    CHECK(std::abs(si_snr(s, e2) - base) < 1e-6);
  }

  // orthogonal estimate -> -100
  AudioClip a, b;
  a.samples = {1, -1, 1, -1};
  b.samples = {1, 1, -1, -1};
  CHECK(si_snr(a, b) == doctest::Approx(-100.0));

  // sdr <= si_snr when estimate = a*s + orthogonal noise
  AudioClip mix = s;
  AudioClip noise = random_clip(44100, 7);
  for (size_t i = 0; i < mix.samples.size(); ++i)
    mix.samples[i] = 0.3 * s.samples[i] + 0.05 * noise.samples[i];
  CHECK(sdr(s, mix) <= si_snr(s, mix) + 1e-6);
}

TEST_CASE("stoi properties") {
  AudioClip ref = speechy(44100, 8);  // 1 s
  CHECK(stoi(ref, ref) >= 0.999);

  AudioClip half = ref;
  for (auto& v : half.samples) v *= 0.5;
  CHECK(stoi(ref, half) >= 0.99);

  // White noise against a modulated reference: standard STOI implementations
  // land around 0.2-0.35 here (band envelopes are nonnegative, so chance
  // correlation is biased above zero); require well below the intelligible
  // range rather than near zero.
  AudioClip noise = random_clip(44100, 9);
  CHECK(stoi(ref, noise) < 0.4);
  CHECK(stoi(ref, noise) < stoi(ref, half) - 0.5);

  // rate symmetry: precomputed 10 kHz inputs agree within 1e-3
  AudioClip ref10 = resample(ref, 10000);
  AudioClip noise10 = resample(noise, 10000);
  CHECK(std::abs(stoi(ref, noise) - stoi(ref10, noise10)) < 1e-3);

  AudioClip tiny = speechy(2000, 10);
  CHECK_THROWS_AS(stoi(tiny, tiny), UsageError);
}

TEST_CASE("evaluate_pairs and CSV contract") {
  const fs::path root = fs::temp_directory_path() / "metrics_eval";
  fs::remove_all(root);
  fs::create_directories(root / "ref");
  fs::create_directories(root / "est");

  AudioClip a = speechy(44100, 11);
  AudioClip b = speechy(44100, 12);
  write_wav(a, (root / "ref" / "a.wav").string());
  write_wav(a, (root / "est" / "a.wav").string());
  write_wav(b, (root / "ref" / "b.wav").string());
  write_wav(b, (root / "est" / "b.wav").string());
  write_wav(b, (root / "ref" / "only_ref.wav").string());

  EvalReport report = evaluate_pairs((root / "ref").string(), (root / "est").string());
  REQUIRE(report.rows.size() == 2);
  CHECK(report.missing.size() == 1);
  for (const auto& row : report.rows) {
    CHECK(row.sdr_db == doctest::Approx(100.0));
    CHECK(row.si_snr_db == doctest::Approx(100.0));
    CHECK(row.stoi_score >= 0.999);
  }
  CHECK(report.mean.sdr_db == doctest::Approx(100.0));
  CHECK(report.median.si_snr_db == doctest::Approx(100.0));

  const std::string csv_path = (root / "report.csv").string();
  write_report_csv(report, csv_path);
  std::ifstream f(csv_path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "clip,sdr_db,si_snr_db,stoi");
  int lines = 0;
  for (std::string line; std::getline(f, line);) ++lines;
  CHECK(lines == 4);  // 2 rows + mean + median

  // empty directories: empty report, no throw
  fs::create_directories(root / "e1");
  fs::create_directories(root / "e2");
  EvalReport empty = evaluate_pairs((root / "e1").string(), (root / "e2").string());
  CHECK(empty.rows.empty());
  fs::remove_all(root);
}
