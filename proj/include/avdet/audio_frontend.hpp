#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "avdet/audio_clip.hpp"

namespace avdet {

struct SpectrogramParams {
  double window_s = 1.0;
  int n_fft = 256;
  int hop = 87;  // ceil(44100 * 1.0 / 512)
  int freq_bins = 128;
  int time_frames = 512;
  double log_floor = 1e-6;

  void validate() const;
};

// Channel-stacked log-magnitude STFT grid; grid[c][f][t] flattened channel-major.
struct SpectrogramStack {
  int channels = 0;
  int freq_bins = 0;
  int time_frames = 0;
  double center_timestamp_s = 0.0;
  std::vector<float> grid;

  float& at(int c, int f, int t) {
    return grid[(static_cast<std::size_t>(c) * freq_bins + f) * time_frames + t];
  }
  float at(int c, int f, int t) const {
    return grid[(static_cast<std::size_t>(c) * freq_bins + f) * time_frames + t];
  }
};

struct VolumeSeries {
  std::vector<double> values;  // channel-averaged windowed RMS per frame
  std::vector<double> timestamps;
  double v_max = 0.0;
};

struct HeuristicConfig {
  double quiet_frac = 0.15;
  double loud_frac = 0.15;

  void validate() const;
};

enum class PairLabel { Positive, Negative, Inconclusive };

const char* pair_label_name(PairLabel l);
PairLabel pair_label_from_name(const std::string& s);

// STFT magnitudes with Hann window, log(1 + m / log_floor) compression,
// cropped/padded to freq_bins x time_frames per channel.
SpectrogramStack spectrogram_stack(const AudioClip& clip, double t, const SpectrogramParams& params,
                                   const std::vector<int>& use_channels);

VolumeSeries volume_series(const AudioClip& clip, const std::vector<double>& frame_timestamps,
                           double window_s);

// Per-run percentile labeling: floor(n*loud_frac) loudest Positive,
// floor(n*quiet_frac) quietest Negative, rest Inconclusive. Ties broken by
// ascending frame index.
std::vector<PairLabel> classify_pairs(const VolumeSeries& vol, const HeuristicConfig& cfg);

// Additive white Gaussian noise, per-channel sigma = rms * 10^(-snr/20).
// snr_db = +infinity is the identity.
AudioClip add_noise(const AudioClip& clip, double snr_db, std::uint64_t seed);

// Default channel subset used for the C-channel ablations on a 7-mic recording:
// mono uses the center mic, multi-channel variants use circular mics.
std::vector<int> channel_subset(int available_channels, int want, bool has_center_mic);

// Raw little-endian float32 array plus a JSON sidecar (shape and params).
void save_spectrogram(const std::string& path_prefix, const SpectrogramStack& stack);
SpectrogramStack load_spectrogram(const std::string& path_prefix);

}  // namespace avdet
