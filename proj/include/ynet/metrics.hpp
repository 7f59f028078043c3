#pragma once

#include <string>
#include <vector>

#include "ynet/audio.hpp"

namespace ynet {

// dB outputs are capped to [-100, +100].
constexpr double kDbCap = 100.0;

// 10*log10(|s|^2 / |s - s_hat|^2), both signals mean-removed. Plain
// distortion ratio, not the BSS-Eval projection variant.
double sdr(const AudioClip& reference, const AudioClip& estimate);

// Scale-invariant SNR: project the estimate onto the reference first.
double si_snr(const AudioClip& reference, const AudioClip& estimate);

// Short-time objective intelligibility: 10 kHz internal rate, 256-sample
// Hann frames at 50% overlap, 512-point FFT, 15 one-third-octave bands from
// 150 Hz, 30-frame segments with -15 dB clipped envelope correlation.
double stoi(const AudioClip& reference, const AudioClip& estimate);

struct EvalRow {
  std::string clip;
  double sdr_db = 0.0;
  double si_snr_db = 0.0;
  double stoi_score = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> missing;  // files present on only one side
  EvalRow mean;
  EvalRow median;
};

// Pairs WAV files by name across two directories and evaluates each pair.
EvalReport evaluate_pairs(const std::string& ref_dir, const std::string& est_dir);

// Header `clip,sdr_db,si_snr_db,stoi`, one row per pair, then mean/median.
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace ynet
