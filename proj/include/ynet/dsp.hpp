#pragma once

#include <complex>
#include <string>
#include <vector>

#include "ynet/audio.hpp"

namespace ynet {

struct StftConfig {
  int window_len = 2048;
  int hop = 512;        // 75% overlap at defaults
  int freq_bins = 1024; // rFFT bins kept, counted from DC; Nyquist dropped
};

// Magnitude/phase planes, freq_bins x time_bins, plus everything needed to
// invert: framing parameters and the original sample count.
struct ComplexSpectrogram {
  std::vector<double> magnitude;  // row-major [freq_bins x time_bins]
  std::vector<double> phase;      // radians in (-pi, pi]
  // rFFT bins above freq_bins (at defaults just the Nyquist row), carried
  // [tail x time_bins] so synthesis can invert exactly; models never see them
  std::vector<double> tail_mag;
  std::vector<double> tail_phase;
  int freq_bins = 0;
  int time_bins = 0;
  StftConfig config;
  int sample_rate = 44100;
  int64_t original_length = 0;

  double& mag(int f, int t) { return magnitude[static_cast<size_t>(f) * time_bins + t]; }
  double mag(int f, int t) const { return magnitude[static_cast<size_t>(f) * time_bins + t]; }
  double& ph(int f, int t) { return phase[static_cast<size_t>(f) * time_bins + t]; }
  double ph(int f, int t) const { return phase[static_cast<size_t>(f) * time_bins + t]; }
};

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Hann-windowed analysis, no centering: frames = (n - window)/hop + 1.
ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& cfg = {});

// Weighted overlap-add synthesis with the Hann window on both sides,
// normalized by the summed squared-window envelope.
AudioClip istft(const ComplexSpectrogram& spec);

// HTK-mel triangular filterbank over squared magnitude, then log10(x+1e-10).
// Returns row-major [n_mels x time_bins].
std::vector<double> mel_render(const ComplexSpectrogram& spec, int n_mels = 128);

// ASCII PGM, linearly mapped to 0..255 over the matrix min/max.
void write_pgm(const std::vector<double>& matrix, int rows, int cols, const std::string& path);

void write_csv_matrix(const std::vector<double>& matrix, int rows, int cols,
                      const std::string& path);

}  // namespace ynet
