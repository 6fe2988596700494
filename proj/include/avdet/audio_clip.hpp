#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace avdet {

// Multi-channel audio, channel-major storage (samples[c * n + i]).
struct AudioClip {
  double sample_rate_hz = 44100.0;
  int channels = 0;
  std::int64_t n_samples = 0;
  std::vector<float> samples;

  AudioClip() = default;
  AudioClip(int c, std::int64_t n, double fs = 44100.0)
      : sample_rate_hz(fs),
        channels(c),
        n_samples(n),
        samples(static_cast<std::size_t>(c) * n, 0.0f) {}

  float* channel(int c) { return samples.data() + static_cast<std::size_t>(c) * n_samples; }
  const float* channel(int c) const {
    return samples.data() + static_cast<std::size_t>(c) * n_samples;
  }

  double duration_s() const { return n_samples / sample_rate_hz; }
};

// PCM16 WAV round trip; samples clamped to [-1, 1] and quantized on write.
void write_wav(const std::string& path, const AudioClip& clip);
AudioClip read_wav(const std::string& path);

double channel_rms(const AudioClip& clip, int c);

}  // namespace avdet
