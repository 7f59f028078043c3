#include "ynet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ynet/errors.hpp"

namespace ynet {

namespace {

uint32_t read_u32(std::istream& s, const char* what) {
  unsigned char b[4];
  if (!s.read(reinterpret_cast<char*>(b), 4))
    throw IoError(std::string("truncated WAV while reading ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& s, const char* what) {
  unsigned char b[2];
  if (!s.read(reinterpret_cast<char*>(b), 2))
    throw IoError(std::string("truncated WAV while reading ") + what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& s, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  s.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& s, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  s.write(reinterpret_cast<char*>(b), 2);
}

double i0(double x) {
  // modified Bessel function of the first kind, order 0 (power series)
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV file: " + path);

  char tag[4];
  if (!f.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("not a RIFF file: " + path);
  read_u32(f, "RIFF size");
  if (!f.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("RIFF file is not WAVE: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> data;

  while (f.read(tag, 4)) {
    uint32_t chunk_size = read_u32(f, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(f, "fmt format code");
      channels = read_u16(f, "fmt channels");
      rate = read_u32(f, "fmt sample rate");
      read_u32(f, "fmt byte rate");
      read_u16(f, "fmt block align");
      bits = read_u16(f, "fmt bits per sample");
      if (chunk_size > 16) f.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      if (chunk_size > 0 && !f.read(data.data(), chunk_size))
        throw IoError("truncated WAV data chunk: " + path);
    } else {
      f.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (!have_fmt) throw FormatError("WAV missing fmt chunk: " + path);
  if (channels != 1 && channels != 2)
    throw FormatError("unsupported channel count in fmt chunk (" + std::to_string(channels) +
                      "): " + path);
  if (rate == 0) throw FormatError("zero sample rate in fmt chunk: " + path);

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw FormatError("unsupported encoding in fmt chunk (code " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bit): " + path);

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frame_bytes = bytes_per_sample * channels;
  if (data.size() % frame_bytes != 0)
    throw IoError("WAV data chunk size is not a whole number of frames: " + path);
  const size_t frames = data.size() / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* sp = p + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        int16_t v = static_cast<int16_t>(sp[0] | (sp[1] << 8));
        acc += v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, sp, 4);
        acc += v;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::string& path, WavEncoding encoding) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open WAV file for writing: " + path);

  const bool pcm = encoding == WavEncoding::Pcm16;
  const uint32_t bytes_per_sample = pcm ? 2 : 4;
  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * bytes_per_sample);
  const uint32_t rate = static_cast<uint32_t>(clip.sample_rate);

  f.write("RIFF", 4);
  write_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, pcm ? 1 : 3);
  write_u16(f, 1);  // mono
  write_u32(f, rate);
  write_u32(f, rate * bytes_per_sample);
  write_u16(f, static_cast<uint16_t>(bytes_per_sample));
  write_u16(f, static_cast<uint16_t>(pcm ? 16 : 32));
  f.write("data", 4);
  write_u32(f, data_bytes);

  for (double s : clip.samples) {
    if (pcm) {
      double clamped = std::min(1.0, std::max(-1.0, s));
      int v = std::min(32767, static_cast<int>(std::lrint(clamped * 32768.0)));
      write_u16(f, static_cast<uint16_t>(static_cast<int16_t>(v)));
    } else {
      float v = static_cast<float>(s);
      char b[4];
      std::memcpy(b, &v, 4);
      f.write(b, 4);
    }
  }
  if (!f) throw IoError("failed writing WAV file: " + path);
}

std::vector<AudioClip> slice_windows(const AudioClip& clip, int window_len, int hop) {
  if (window_len <= 0 || hop <= 0) throw UsageError("slice_windows: window and hop must be > 0");
  std::vector<AudioClip> out;
  const int64_t n = static_cast<int64_t>(clip.samples.size());
  for (int64_t start = 0; start < n; start += hop) {
    const int64_t avail = n - start;
    if (avail < window_len && avail * 2 < window_len) break;  // less than half full
    AudioClip w;
    w.sample_rate = clip.sample_rate;
    w.samples.assign(static_cast<size_t>(window_len), 0.0);
    const int64_t copy = std::min<int64_t>(window_len, avail);
    std::copy_n(clip.samples.begin() + start, copy, w.samples.begin());
    out.push_back(std::move(w));
    if (avail <= window_len) break;
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const int64_t n = static_cast<int64_t>(clip.samples.size());
  const int64_t out_n = static_cast<int64_t>(std::llround(static_cast<double>(n) * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<size_t>(out_n), 0.0);
  if (n == 0) return out;

  const double cutoff = std::min(1.0, ratio);  // relative to source Nyquist
  const int half_taps = 32;                    // zero crossings of the sinc each side
  const double beta = 8.6;
  const double i0b = i0(beta);
  const double width = half_taps / cutoff;  // support in source samples

  for (int64_t i = 0; i < out_n; ++i) {
    const double center = i / ratio;
    const int64_t k0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center - width)));
    const int64_t k1 = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor(center + width)));
    double acc = 0.0;
    for (int64_t k = k0; k <= k1; ++k) {
      const double t = (k - center) * cutoff;  // in cutoff-normalized units
      double sinc;
      if (std::abs(t) < 1e-12) {
        sinc = 1.0;
      } else {
        const double pt = M_PI * t;
        sinc = std::sin(pt) / pt;
      }
      const double u = t / half_taps;
      const double win = i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
      acc += clip.samples[static_cast<size_t>(k)] * sinc * win * cutoff;
    }
    out.samples[static_cast<size_t>(i)] = acc;
  }
  return out;
}

}  // namespace ynet
