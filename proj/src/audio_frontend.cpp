#include "avdet/audio_frontend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "avdet/errors.hpp"
#include "avdet/fft.hpp"
#include "avdet/geometry.hpp"
#include "avdet/rng.hpp"

namespace avdet {

using ordered_json = nlohmann::ordered_json;

void SpectrogramParams::validate() const {
  require(window_s > 0.0, errc::config, "SpectrogramParams.window_s must be positive");
  require(n_fft > 0 && (n_fft & (n_fft - 1)) == 0, errc::config,
          "SpectrogramParams.n_fft must be a positive power of two");
  require(hop > 0, errc::config, "SpectrogramParams.hop must be positive");
  require(freq_bins > 0 && time_frames > 0, errc::config,
          "SpectrogramParams grid dims must be positive");
  require(log_floor > 0.0, errc::config, "SpectrogramParams.log_floor must be positive");
}

void HeuristicConfig::validate() const {
  require(quiet_frac > 0.0 && loud_frac > 0.0, errc::config,
          "HeuristicConfig fractions must be positive");
  require(quiet_frac + loud_frac < 1.0, errc::config,
          "HeuristicConfig fractions must sum below 1");
}

const char* pair_label_name(PairLabel l) {
  switch (l) {
    case PairLabel::Positive: return "Positive";
    case PairLabel::Negative: return "Negative";
    case PairLabel::Inconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

PairLabel pair_label_from_name(const std::string& s) {
  if (s == "Positive") return PairLabel::Positive;
  if (s == "Negative") return PairLabel::Negative;
  if (s == "Inconclusive") return PairLabel::Inconclusive;
  fail(errc::config, "unknown pair label: " + s);
}

SpectrogramStack spectrogram_stack(const AudioClip& clip, double t, const SpectrogramParams& params,
                                   const std::vector<int>& use_channels) {
  params.validate();
  require(!use_channels.empty(), errc::channel, "spectrogram_stack: no channels requested");
  for (int c : use_channels)
    require(c >= 0 && c < clip.channels, errc::channel,
            "spectrogram_stack: channel " + std::to_string(c) + " not available (clip has " +
                std::to_string(clip.channels) + ")");

  const double fs = clip.sample_rate_hz;
  const std::int64_t win_len = static_cast<std::int64_t>(std::llround(params.window_s * fs));
  const std::int64_t start =
      static_cast<std::int64_t>(std::llround((t - params.window_s / 2.0) * fs));
  const int n_raw_frames = static_cast<int>((win_len + params.hop - 1) / params.hop);
  const int n_frames = std::min(n_raw_frames, params.time_frames);
  const int half = params.n_fft / 2;

  std::vector<double> hann(params.n_fft);
  for (int i = 0; i < params.n_fft; ++i)
    hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / (params.n_fft - 1)));

  SpectrogramStack stack;
  stack.channels = static_cast<int>(use_channels.size());
  stack.freq_bins = params.freq_bins;
  stack.time_frames = params.time_frames;
  stack.center_timestamp_s = t;
  stack.grid.assign(
      static_cast<std::size_t>(stack.channels) * params.freq_bins * params.time_frames, 0.0f);

  RealFft fft(params.n_fft);
  std::vector<double> window(win_len, 0.0);
  std::vector<double> frame(params.n_fft);
  std::vector<std::complex<double>> spec(params.n_fft / 2 + 1);
  const int mag_bins = std::min(params.freq_bins, params.n_fft / 2 + 1);

  for (int ci = 0; ci < stack.channels; ++ci) {
    const float* src = clip.channel(use_channels[ci]);
    for (std::int64_t i = 0; i < win_len; ++i) {
      const std::int64_t s = start + i;
      window[i] = (s >= 0 && s < clip.n_samples) ? static_cast<double>(src[s]) : 0.0;
    }
    for (int fr = 0; fr < n_frames; ++fr) {
      const std::int64_t center = static_cast<std::int64_t>(fr) * params.hop;
      for (int i = 0; i < params.n_fft; ++i) {
        const std::int64_t s = center - half + i;
        const double v = (s >= 0 && s < win_len) ? window[s] : 0.0;
        frame[i] = v * hann[i];
      }
      fft.transform(frame.data(), spec.data());
      for (int b = 0; b < mag_bins; ++b) {
        const double m = std::abs(spec[b]);
        stack.at(ci, b, fr) = static_cast<float>(std::log1p(m / params.log_floor));
      }
    }
  }
  return stack;
}

VolumeSeries volume_series(const AudioClip& clip, const std::vector<double>& frame_timestamps,
                           double window_s) {
  require(!frame_timestamps.empty(), errc::config, "volume_series: empty timestamp list");
  require(window_s > 0.0, errc::config, "volume_series: window must be positive");
  const double fs = clip.sample_rate_hz;
  VolumeSeries out;
  out.timestamps = frame_timestamps;
  out.values.reserve(frame_timestamps.size());
  for (double t : frame_timestamps) {
    require(t >= 0.0 && t <= clip.duration_s(), errc::range,
            "volume_series: timestamp outside clip duration");
    const std::int64_t s0 =
        std::max<std::int64_t>(0, static_cast<std::int64_t>(std::llround((t - window_s / 2) * fs)));
    const std::int64_t s1 = std::min<std::int64_t>(
        clip.n_samples, static_cast<std::int64_t>(std::llround((t + window_s / 2) * fs)));
    double v = 0.0;
    if (s1 > s0) {
      for (int c = 0; c < clip.channels; ++c) {
        const float* ch = clip.channel(c);
        double acc = 0.0;
        for (std::int64_t i = s0; i < s1; ++i) acc += static_cast<double>(ch[i]) * ch[i];
        v += std::sqrt(acc / (s1 - s0));
      }
      v /= clip.channels;
    }
    out.values.push_back(v);
  }
  out.v_max = *std::max_element(out.values.begin(), out.values.end());
  return out;
}

std::vector<PairLabel> classify_pairs(const VolumeSeries& vol, const HeuristicConfig& cfg) {
  cfg.validate();
  const std::size_t n = vol.values.size();
  require(n >= 3, errc::config, "classify_pairs: need at least 3 frames per run");
  require(vol.v_max > 0.0, errc::config, "classify_pairs: silent run, refusing to classify");

  const std::size_t n_loud = static_cast<std::size_t>(n * cfg.loud_frac);
  const std::size_t n_quiet = static_cast<std::size_t>(n * cfg.quiet_frac);
  require(n_loud >= 1, errc::config, "classify_pairs: loud_frac rounds to zero samples");
  require(n_quiet >= 1, errc::config, "classify_pairs: quiet_frac rounds to zero samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return vol.values[a] < vol.values[b];
  });

  std::vector<PairLabel> labels(n, PairLabel::Inconclusive);
  for (std::size_t i = 0; i < n_quiet; ++i) labels[order[i]] = PairLabel::Negative;
  for (std::size_t i = 0; i < n_loud; ++i) labels[order[n - 1 - i]] = PairLabel::Positive;
  return labels;
}

AudioClip add_noise(const AudioClip& clip, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return clip;
  require(std::isfinite(snr_db), errc::config, "add_noise: snr_db must be finite or +inf");

  AudioClip out = clip;
  Rng base(seed);
  for (int c = 0; c < clip.channels; ++c) {
    const double rms = channel_rms(clip, c);
    require(rms > 0.0, errc::config,
            "add_noise: zero-RMS channel " + std::to_string(c) + " with finite SNR");
    const double sigma = rms * std::pow(10.0, -snr_db / 20.0);
    Rng rng = base.stream(static_cast<std::uint64_t>(c));
    float* ch = out.channel(c);
    for (std::int64_t i = 0; i < out.n_samples; ++i)
      ch[i] += static_cast<float>(sigma * rng.normal());
  }
  return out;
}

std::vector<int> channel_subset(int available_channels, int want, bool has_center_mic) {
  require(want == 1 || want == 2 || want == 4 || want == 6, errc::channel,
          "channel_subset: channel count must be one of {1,2,4,6}");
  require(want <= available_channels, errc::channel,
          "channel_subset: not enough channels available");
  if (available_channels == 7 && has_center_mic) {
    switch (want) {
      case 1: return {6};           // center mic
      case 2: return {0, 3};        // opposite pair
      case 4: return {0, 1, 3, 4};  // two opposite pairs
      case 6: return {0, 1, 2, 3, 4, 5};
    }
  }
  std::vector<int> out(want);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void save_spectrogram(const std::string& path_prefix, const SpectrogramStack& stack) {
  std::ofstream raw(path_prefix + ".f32", std::ios::binary);
  require(raw.good(), errc::io, "save_spectrogram: cannot open " + path_prefix + ".f32");
  raw.write(reinterpret_cast<const char*>(stack.grid.data()),
            static_cast<std::streamsize>(stack.grid.size() * sizeof(float)));
  ordered_json meta{{"channels", stack.channels},
                    {"freq_bins", stack.freq_bins},
                    {"time_frames", stack.time_frames},
                    {"center_timestamp_s", stack.center_timestamp_s}};
  std::ofstream side(path_prefix + ".json");
  side << meta.dump(2) << "\n";
}

SpectrogramStack load_spectrogram(const std::string& path_prefix) {
  std::ifstream side(path_prefix + ".json");
  require(side.good(), errc::missing_file, "load_spectrogram: missing " + path_prefix + ".json");
  ordered_json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_json, std::string("spectrogram sidecar: ") + e.what());
  }
  SpectrogramStack stack;
  stack.channels = meta.at("channels").get<int>();
  stack.freq_bins = meta.at("freq_bins").get<int>();
  stack.time_frames = meta.at("time_frames").get<int>();
  stack.center_timestamp_s = meta.at("center_timestamp_s").get<double>();
  stack.grid.resize(static_cast<std::size_t>(stack.channels) * stack.freq_bins *
                    stack.time_frames);
  std::ifstream raw(path_prefix + ".f32", std::ios::binary);
  require(raw.good(), errc::missing_file, "load_spectrogram: missing " + path_prefix + ".f32");
  raw.read(reinterpret_cast<char*>(stack.grid.data()),
           static_cast<std::streamsize>(stack.grid.size() * sizeof(float)));
  require(raw.gcount() ==
              static_cast<std::streamsize>(stack.grid.size() * sizeof(float)),
          errc::io, "load_spectrogram: truncated raw file");
  return stack;
}

}  // namespace avdet
