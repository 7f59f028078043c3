#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ynet {

// Mono audio. Samples nominally in [-1, 1] but not enforced.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 44100;
};

enum class WavEncoding { Pcm16, Float32 };

// RIFF/WAVE reader: PCM-16 or IEEE float 32, 1 or 2 channels. Stereo is
// averaged to mono.
AudioClip read_wav(const std::string& path);

void write_wav(const AudioClip& clip, const std::string& path,
               WavEncoding encoding = WavEncoding::Float32);

// Consecutive fixed-length windows at the given hop. A final partial window
// is zero-padded when at least half full, dropped otherwise.
std::vector<AudioClip> slice_windows(const AudioClip& clip, int window_len = 67072,
                                     int hop = 67072);

// Windowed-sinc (Kaiser beta 8.6, 32 zero crossings each side) resampler.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace ynet
