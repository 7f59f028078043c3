#include "ynet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ynet/dsp.hpp"
#include "ynet/errors.hpp"

namespace fs = std::filesystem;

namespace ynet {

namespace {

constexpr double kStoiRate = 10000.0;
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiLowestBand = 150.0;
constexpr int kStoiSegment = 30;  // frames per 384 ms segment
constexpr double kStoiClipDb = -15.0;
constexpr double kStoiSilenceDb = 40.0;

double cap_db(double db) { return std::min(kDbCap, std::max(-kDbCap, db)); }

void check_pair(const AudioClip& reference, const AudioClip& estimate) {
  if (reference.samples.size() != estimate.samples.size())
    throw UsageError("metric inputs differ in length: " +
                     std::to_string(reference.samples.size()) + " vs " +
                     std::to_string(estimate.samples.size()));
  if (reference.sample_rate != estimate.sample_rate)
    throw UsageError("metric inputs differ in sample rate");
  if (reference.samples.empty()) throw UsageError("metric inputs are empty");
}

std::vector<double> mean_removed(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
  return out;
}

double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

}  // namespace

double sdr(const AudioClip& reference, const AudioClip& estimate) {
  check_pair(reference, estimate);
  const std::vector<double> s = mean_removed(reference.samples);
  const std::vector<double> e = mean_removed(estimate.samples);
  const double es = energy(s);
  if (es <= 0.0) throw UsageError("sdr: reference signal is all zero");
  double err = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - e[i];
    err += d * d;
  }
  if (err <= 0.0) return kDbCap;
  return cap_db(10.0 * std::log10(es / err));
}

double si_snr(const AudioClip& reference, const AudioClip& estimate) {
  check_pair(reference, estimate);
  const std::vector<double> s = mean_removed(reference.samples);
  const std::vector<double> e = mean_removed(estimate.samples);
  const double es = energy(s);
  if (es <= 0.0) throw UsageError("si_snr: reference signal is all zero");
  double dot = 0.0;
  for (size_t i = 0; i < s.size(); ++i) dot += e[i] * s[i];
  if (dot == 0.0) return -kDbCap;  // estimate carries no reference component
  const double alpha = dot / es;
  double target = 0.0, noise = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double t = alpha * s[i];
    const double d = e[i] - t;
    target += t * t;
    noise += d * d;
  }
  if (noise <= 0.0) return kDbCap;
  return cap_db(10.0 * std::log10(target / noise));
}

namespace {

// One-third-octave band envelopes of the silence-trimmed signal.
// Returns [kStoiBands x frames], column-major by frame for correlation ease.
struct BandEnvelopes {
  std::vector<double> values;  // [band * frames + frame]
  int frames = 0;
};

std::vector<std::vector<double>> frame_signal(const std::vector<double>& x) {
  std::vector<std::vector<double>> frames;
  for (size_t off = 0; off + kStoiFrame <= x.size(); off += kStoiHop)
    frames.emplace_back(x.begin() + static_cast<int64_t>(off),
                        x.begin() + static_cast<int64_t>(off) + kStoiFrame);
  return frames;
}

BandEnvelopes band_envelopes(const std::vector<std::vector<double>>& frames,
                             const std::vector<double>& window) {
  // band edges: centers 150*2^(j/3), half-third-octave each side
  static std::vector<std::pair<int, int>> bins = [] {
    std::vector<std::pair<int, int>> out;
    for (int j = 0; j < kStoiBands; ++j) {
      const double cf = kStoiLowestBand * std::pow(2.0, j / 3.0);
      const double lo = cf * std::pow(2.0, -1.0 / 6.0);
      const double hi = cf * std::pow(2.0, 1.0 / 6.0);
      int b0 = static_cast<int>(std::ceil(lo * kStoiFft / kStoiRate));
      int b1 = static_cast<int>(std::ceil(hi * kStoiFft / kStoiRate));
      b0 = std::max(b0, 1);
      b1 = std::min(b1, kStoiFft / 2 + 1);
      out.emplace_back(b0, b1);
    }
    return out;
  }();

  BandEnvelopes env;
  env.frames = static_cast<int>(frames.size());
  env.values.assign(static_cast<size_t>(kStoiBands) * frames.size(), 0.0);
  std::vector<std::complex<double>> buf(kStoiFft);
  for (size_t m = 0; m < frames.size(); ++m) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < kStoiFrame; ++i)
      buf[static_cast<size_t>(i)] = frames[m][static_cast<size_t>(i)] *
                                    window[static_cast<size_t>(i)];
    fft(buf, false);
    for (int j = 0; j < kStoiBands; ++j) {
      double acc = 0.0;
      for (int k = bins[static_cast<size_t>(j)].first; k < bins[static_cast<size_t>(j)].second;
           ++k)
        acc += std::norm(buf[static_cast<size_t>(k)]);
      env.values[static_cast<size_t>(j) * frames.size() + m] = std::sqrt(acc);
    }
  }
  return env;
}

}  // namespace

double stoi(const AudioClip& reference, const AudioClip& estimate) {
  check_pair(reference, estimate);
  AudioClip ref10 = resample(reference, static_cast<int>(kStoiRate));
  AudioClip est10 = resample(estimate, static_cast<int>(kStoiRate));
  est10.samples.resize(ref10.samples.size(), 0.0);

  std::vector<double> window(kStoiFrame);
  for (int i = 0; i < kStoiFrame; ++i)
    window[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (i + 1) / (kStoiFrame + 1));

  // drop frames more than 40 dB below the reference's loudest frame
  auto ref_frames = frame_signal(ref10.samples);
  auto est_frames = frame_signal(est10.samples);
  double max_energy = 0.0;
  std::vector<double> frame_energy(ref_frames.size(), 0.0);
  for (size_t m = 0; m < ref_frames.size(); ++m) {
    double acc = 0.0;
    for (int i = 0; i < kStoiFrame; ++i) {
      const double v = ref_frames[m][static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
      acc += v * v;
    }
    frame_energy[m] = acc;
    max_energy = std::max(max_energy, acc);
  }
  const double threshold = max_energy * std::pow(10.0, -kStoiSilenceDb / 10.0);
  std::vector<std::vector<double>> ref_kept, est_kept;
  for (size_t m = 0; m < ref_frames.size(); ++m) {
    if (frame_energy[m] >= threshold) {
      ref_kept.push_back(std::move(ref_frames[m]));
      est_kept.push_back(std::move(est_frames[m]));
    }
  }
  if (static_cast<int>(ref_kept.size()) < kStoiSegment)
    throw UsageError("stoi: fewer than " + std::to_string(kStoiSegment) +
                     " frames (384 ms) of active audio after silence removal");

  const BandEnvelopes x = band_envelopes(ref_kept, window);
  const BandEnvelopes y = band_envelopes(est_kept, window);

  // clip bound: x * (1 + 10^(-beta/20)) with beta = -15 dB
  const double clip_factor = 1.0 + std::pow(10.0, -kStoiClipDb / 20.0);
  double total = 0.0;
  int count = 0;
  for (int m = kStoiSegment; m <= x.frames; ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      const double* xs = x.values.data() + static_cast<size_t>(j) * x.frames + (m - kStoiSegment);
      const double* ys = y.values.data() + static_cast<size_t>(j) * y.frames + (m - kStoiSegment);
      double ex = 0.0, ey = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        ex += xs[i] * xs[i];
        ey += ys[i] * ys[i];
      }
      const double alpha = std::sqrt(ex / std::max(ey, 1e-20));
      double seg[kStoiSegment];
      for (int i = 0; i < kStoiSegment; ++i)
        seg[i] = std::min(alpha * ys[i], xs[i] * clip_factor);
      // Pearson correlation between xs and the normalized, clipped ys
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        mx += xs[i];
        my += seg[i];
      }
      mx /= kStoiSegment;
      my /= kStoiSegment;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        num += (xs[i] - mx) * (seg[i] - my);
        dx += (xs[i] - mx) * (xs[i] - mx);
        dy += (seg[i] - my) * (seg[i] - my);
      }
      const double denom = std::sqrt(dx * dy);
      total += denom > 0.0 ? num / denom : 0.0;
      ++count;
    }
  }
  return total / count;
}

EvalReport evaluate_pairs(const std::string& ref_dir, const std::string& est_dir) {
  if (!fs::is_directory(ref_dir)) throw IoError("reference directory missing: " + ref_dir);
  if (!fs::is_directory(est_dir)) throw IoError("estimate directory missing: " + est_dir);

  std::vector<std::string> ref_names, est_names;
  for (const auto& e : fs::directory_iterator(ref_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      ref_names.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(est_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      est_names.push_back(e.path().filename().string());
  std::sort(ref_names.begin(), ref_names.end());
  std::sort(est_names.begin(), est_names.end());

  EvalReport report;
  for (const auto& name : ref_names)
    if (!std::binary_search(est_names.begin(), est_names.end(), name))
      report.missing.push_back(name + " (no estimate)");
  for (const auto& name : est_names)
    if (!std::binary_search(ref_names.begin(), ref_names.end(), name))
      report.missing.push_back(name + " (no reference)");

  for (const auto& name : ref_names) {
    if (!std::binary_search(est_names.begin(), est_names.end(), name)) continue;
    AudioClip ref = read_wav((fs::path(ref_dir) / name).string());
    AudioClip est = read_wav((fs::path(est_dir) / name).string());
    const size_t len = std::min(ref.samples.size(), est.samples.size());
    ref.samples.resize(len);
    est.samples.resize(len);
    EvalRow row;
    row.clip = name;
    row.sdr_db = sdr(ref, est);
    row.si_snr_db = si_snr(ref, est);
    row.stoi_score = stoi(ref, est);
    report.rows.push_back(row);
  }

  if (!report.rows.empty()) {
    auto agg = [&](auto get, EvalRow& mean, EvalRow& median, auto set) {
      std::vector<double> vals;
      double acc = 0.0;
      for (const auto& r : report.rows) {
        vals.push_back(get(r));
        acc += get(r);
      }
      std::sort(vals.begin(), vals.end());
      set(mean, acc / static_cast<double>(vals.size()));
      const size_t n = vals.size();
      set(median, n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]));
    };
    report.mean.clip = "mean";
    report.median.clip = "median";
    agg([](const EvalRow& r) { return r.sdr_db; }, report.mean, report.median,
        [](EvalRow& r, double v) { r.sdr_db = v; });
    agg([](const EvalRow& r) { return r.si_snr_db; }, report.mean, report.median,
        [](EvalRow& r, double v) { r.si_snr_db = v; });
    agg([](const EvalRow& r) { return r.stoi_score; }, report.mean, report.median,
        [](EvalRow& r, double v) { r.stoi_score = v; });
  }
  return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open report CSV for writing: " + path);
  f << "clip,sdr_db,si_snr_db,stoi\n";
  auto row = [&](const EvalRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", r.clip.c_str(), r.sdr_db, r.si_snr_db,
                  r.stoi_score);
    f << buf;
  };
  for (const auto& r : report.rows) row(r);
  if (!report.rows.empty()) {
    row(report.mean);
    row(report.median);
  }
  if (!f) throw IoError("failed writing report CSV: " + path);
}

}  // namespace ynet
