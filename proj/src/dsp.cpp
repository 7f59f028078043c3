#include "ynet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ynet/errors.hpp"

namespace ynet {

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft size must be a power of two");
  // bit reversal
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

namespace {

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

}  // namespace

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  const int win = cfg.window_len, hop = cfg.hop;
  if (win <= 0 || hop <= 0) throw ConfigError("stft: window and hop must be positive");
  if (cfg.freq_bins > win / 2 + 1) throw ConfigError("stft: freq_bins exceeds rFFT bins");
  const int64_t n = static_cast<int64_t>(clip.samples.size());
  if (n < win)
    throw UsageError("stft: clip of " + std::to_string(n) + " samples is shorter than one " +
                     std::to_string(win) + "-sample window");
  const int frames = static_cast<int>((n - win) / hop + 1);

  ComplexSpectrogram spec;
  spec.config = cfg;
  spec.freq_bins = cfg.freq_bins;
  spec.time_bins = frames;
  spec.sample_rate = clip.sample_rate;
  spec.original_length = n;
  spec.magnitude.assign(static_cast<size_t>(cfg.freq_bins) * frames, 0.0);
  spec.phase.assign(static_cast<size_t>(cfg.freq_bins) * frames, 0.0);
  const int tail = win / 2 + 1 - cfg.freq_bins;
  spec.tail_mag.assign(static_cast<size_t>(std::max(tail, 0)) * frames, 0.0);
  spec.tail_phase.assign(static_cast<size_t>(std::max(tail, 0)) * frames, 0.0);

  const std::vector<double> window = hann_window(win);
  std::vector<std::complex<double>> buf(static_cast<size_t>(win));
  for (int t = 0; t < frames; ++t) {
    const int64_t off = static_cast<int64_t>(t) * hop;
    for (int i = 0; i < win; ++i)
      buf[static_cast<size_t>(i)] = clip.samples[static_cast<size_t>(off + i)] *
                                    window[static_cast<size_t>(i)];
    fft(buf, false);
    for (int f = 0; f < cfg.freq_bins; ++f) {
      spec.mag(f, t) = std::abs(buf[static_cast<size_t>(f)]);
      spec.ph(f, t) = std::arg(buf[static_cast<size_t>(f)]);
    }
    for (int f = cfg.freq_bins; f <= win / 2; ++f) {
      const size_t idx = static_cast<size_t>(f - cfg.freq_bins) * frames + t;
      spec.tail_mag[idx] = std::abs(buf[static_cast<size_t>(f)]);
      spec.tail_phase[idx] = std::arg(buf[static_cast<size_t>(f)]);
    }
  }
  return spec;
}

AudioClip istft(const ComplexSpectrogram& spec) {
  const int win = spec.config.window_len, hop = spec.config.hop;
  const int frames = spec.time_bins;
  const int64_t n = spec.original_length > 0
                        ? spec.original_length
                        : static_cast<int64_t>(frames - 1) * hop + win;

  AudioClip out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(static_cast<size_t>(n), 0.0);
  std::vector<double> envelope(static_cast<size_t>(n), 0.0);

  const std::vector<double> window = hann_window(win);
  std::vector<std::complex<double>> buf(static_cast<size_t>(win));
  for (int t = 0; t < frames; ++t) {
    // rebuild the full conjugate-symmetric spectrum; dropped bins are zero
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int f = 0; f < spec.freq_bins; ++f)
      buf[static_cast<size_t>(f)] = std::polar(spec.mag(f, t), spec.ph(f, t));
    const int tail = win / 2 + 1 - spec.freq_bins;
    for (int f = 0; f < tail; ++f) {
      const size_t idx = static_cast<size_t>(f) * frames + t;
      if (idx < spec.tail_mag.size())
        buf[static_cast<size_t>(spec.freq_bins + f)] =
            std::polar(spec.tail_mag[idx], spec.tail_phase[idx]);
    }
    for (int f = 1; f < win / 2; ++f)
      buf[static_cast<size_t>(win - f)] = std::conj(buf[static_cast<size_t>(f)]);
    fft(buf, true);
    const int64_t off = static_cast<int64_t>(t) * hop;
    for (int i = 0; i < win && off + i < n; ++i) {
      out.samples[static_cast<size_t>(off + i)] +=
          buf[static_cast<size_t>(i)].real() * window[static_cast<size_t>(i)];
      envelope[static_cast<size_t>(off + i)] +=
          window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
  }
  for (int64_t i = 0; i < n; ++i)
    out.samples[static_cast<size_t>(i)] /= std::max(envelope[static_cast<size_t>(i)], 1e-8);
  return out;
}

std::vector<double> mel_render(const ComplexSpectrogram& spec, int n_mels) {
  if (n_mels < 1) throw ConfigError("mel_render: n_mels must be >= 1");
  const int bins = spec.freq_bins, frames = spec.time_bins;
  const double nyquist = spec.sample_rate / 2.0;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };

  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));

  const double bin_hz = static_cast<double>(spec.sample_rate) / spec.config.window_len;
  std::vector<double> out(static_cast<size_t>(n_mels) * frames, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double c = centers[static_cast<size_t>(m) + 1];
    const double hi = centers[static_cast<size_t>(m) + 2];
    for (int f = 0; f < bins; ++f) {
      const double hz = f * bin_hz;
      double wgt = 0.0;
      if (hz > lo && hz < hi)
        wgt = hz <= c ? (hz - lo) / std::max(c - lo, 1e-12)
                      : (hi - hz) / std::max(hi - c, 1e-12);
      if (wgt <= 0.0) continue;
      for (int t = 0; t < frames; ++t) {
        const double v = spec.mag(f, t);
        out[static_cast<size_t>(m) * frames + t] += wgt * v * v;
      }
    }
  }
  for (auto& v : out) v = std::log10(v + 1e-10);
  return out;
}

void write_pgm(const std::vector<double>& matrix, int rows, int cols, const std::string& path) {
  if (matrix.size() != static_cast<size_t>(rows) * cols)
    throw UsageError("write_pgm: matrix size does not match dimensions");
  double lo = matrix.empty() ? 0.0 : *std::min_element(matrix.begin(), matrix.end());
  double hi = matrix.empty() ? 0.0 : *std::max_element(matrix.begin(), matrix.end());
  const double span = hi - lo;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open PGM for writing: " + path);
  f << "P2\n" << cols << " " << rows << "\n255\n";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int v = span <= 0.0 ? 0
                          : static_cast<int>(std::lrint(
                                255.0 * (matrix[static_cast<size_t>(r) * cols + c] - lo) / span));
      f << v << (c + 1 == cols ? '\n' : ' ');
    }
  }
  if (!f) throw IoError("failed writing PGM: " + path);
}

void write_csv_matrix(const std::vector<double>& matrix, int rows, int cols,
                      const std::string& path) {
  if (matrix.size() != static_cast<size_t>(rows) * cols)
    throw UsageError("write_csv_matrix: matrix size does not match dimensions");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open CSV for writing: " + path);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c)
      f << matrix[static_cast<size_t>(r) * cols + c] << (c + 1 == cols ? '\n' : ',');
  }
  if (!f) throw IoError("failed writing CSV: " + path);
}

}  // namespace ynet
