#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "avdet/audio_frontend.hpp"
#include "avdet/errors.hpp"
#include "avdet/geometry.hpp"
#include "avdet/rng.hpp"

using namespace avdet;

namespace {

AudioClip sine_clip(int channels, double seconds, double freq, double amp = 0.5) {
  const int n = static_cast<int>(seconds * 44100);
  AudioClip clip(channels, n, 44100.0);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i)
      clip.channel(c)[i] = static_cast<float>(amp * std::sin(2.0 * kPi * freq * i / 44100.0));
  return clip;
}

}  // namespace

TEST_CASE("spectrogram: shape contract and determinism") {
  const AudioClip clip = sine_clip(2, 3.0, 440.0);
  SpectrogramParams p;
  const SpectrogramStack a = spectrogram_stack(clip, 1.5, p, {0, 1});
  CHECK(a.channels == 2);
  CHECK(a.freq_bins == 128);
  CHECK(a.time_frames == 512);
  CHECK(a.grid.size() == 2u * 128u * 512u);
  const SpectrogramStack b = spectrogram_stack(clip, 1.5, p, {0, 1});
  CHECK(a.grid == b.grid);
}

TEST_CASE("spectrogram: pure tone peaks at the right bin") {
  // bin spacing is 44100/256 ≈ 172.3 Hz; 1723 Hz lands on bin 10
  const AudioClip clip = sine_clip(1, 2.0, 1723.0);
  SpectrogramParams p;
  const SpectrogramStack s = spectrogram_stack(clip, 1.0, p, {0});
  // average over interior frames to dodge edge effects
  std::vector<double> mean(p.freq_bins, 0.0);
  for (int f = 0; f < p.freq_bins; ++f)
    for (int t = 100; t < 400; ++t) mean[f] += s.at(0, f, t);
  const int peak =
      static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  CHECK(peak == 10);
}

TEST_CASE("spectrogram: window outside the clip is zero-padded, values finite") {
  const AudioClip clip = sine_clip(1, 1.0, 300.0);
  SpectrogramParams p;
  const SpectrogramStack s = spectrogram_stack(clip, 0.05, p, {0});  // mostly before clip start
  for (float v : s.grid) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0f);
  }
}

TEST_CASE("spectrogram: errors on bad channels and params") {
  const AudioClip clip = sine_clip(2, 1.0, 300.0);
  SpectrogramParams p;
  CHECK_THROWS_AS(spectrogram_stack(clip, 0.5, p, {}), Error);
  CHECK_THROWS_AS(spectrogram_stack(clip, 0.5, p, {5}), Error);
  p.n_fft = 300;  // not a power of two
  CHECK_THROWS_AS(spectrogram_stack(clip, 0.5, p, {0}), Error);
}

TEST_CASE("spectrogram save/load round trip") {
  const AudioClip clip = sine_clip(1, 1.0, 440.0);
  SpectrogramParams p;
  const SpectrogramStack s = spectrogram_stack(clip, 0.5, p, {0});
  const std::string prefix =
      (std::filesystem::temp_directory_path() / "avdet_spec").string();
  save_spectrogram(prefix, s);
  const SpectrogramStack back = load_spectrogram(prefix);
  CHECK(back.channels == s.channels);
  CHECK(back.center_timestamp_s == doctest::Approx(0.5));
  CHECK(back.grid == s.grid);
}

TEST_CASE("volume series: scale equivariance and window content") {
  AudioClip clip = sine_clip(2, 2.0, 200.0, 0.4);
  const std::vector<double> ts = {0.5, 1.0, 1.5};
  const VolumeSeries v1 = volume_series(clip, ts, 1.0);
  REQUIRE(v1.values.size() == 3);
  // doubling the samples doubles the windowed RMS
  for (float& s : clip.samples) s *= 0.5f;
  const VolumeSeries v2 = volume_series(clip, ts, 1.0);
  for (std::size_t i = 0; i < ts.size(); ++i)
    CHECK(v1.values[i] == doctest::Approx(2.0 * v2.values[i]).epsilon(1e-6));
  // constant sine: windowed RMS approximates amp/sqrt(2)
  CHECK(v1.values[1] == doctest::Approx(0.4 / std::sqrt(2.0)).epsilon(1e-3));
  CHECK(v1.v_max == doctest::Approx(*std::max_element(v1.values.begin(), v1.values.end())));
}

TEST_CASE("volume series: errors") {
  const AudioClip clip = sine_clip(1, 1.0, 200.0);
  CHECK_THROWS_AS(volume_series(clip, {}, 1.0), Error);
  try {
    volume_series(clip, {5.0}, 1.0);  // outside the clip
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::range);
  }
}

TEST_CASE("classify: worked example with thirds") {
  VolumeSeries vol;
  vol.values = {1, 5, 3, 2, 9, 4};
  vol.v_max = 9;
  HeuristicConfig cfg;
  cfg.quiet_frac = cfg.loud_frac = 1.0 / 3.0;
  const auto labels = classify_pairs(vol, cfg);
  CHECK(labels == std::vector<PairLabel>{PairLabel::Negative, PairLabel::Positive,
                                         PairLabel::Inconclusive, PairLabel::Negative,
                                         PairLabel::Positive, PairLabel::Inconclusive});
}

TEST_CASE("classify: exact counts and ordering property on random series") {
  Rng rng(17);
  HeuristicConfig cfg;  // defaults 0.15 / 0.15
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 7 + rng.uniform_int(200);
    VolumeSeries vol;
    for (std::size_t i = 0; i < n; ++i) vol.values.push_back(rng.uniform(0.0, 1.0));
    vol.v_max = *std::max_element(vol.values.begin(), vol.values.end());
    const auto labels = classify_pairs(vol, cfg);

    const std::size_t want = static_cast<std::size_t>(n * 0.15);
    CHECK(std::count(labels.begin(), labels.end(), PairLabel::Positive) ==
          static_cast<long>(want));
    CHECK(std::count(labels.begin(), labels.end(), PairLabel::Negative) ==
          static_cast<long>(want));

    // every Positive is at least as loud as every Inconclusive, which is at
    // least as loud as every Negative
    double min_pos = 1e300, max_neg = -1e300, min_inc = 1e300, max_inc = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == PairLabel::Positive) min_pos = std::min(min_pos, vol.values[i]);
      if (labels[i] == PairLabel::Negative) max_neg = std::max(max_neg, vol.values[i]);
      if (labels[i] == PairLabel::Inconclusive) {
        min_inc = std::min(min_inc, vol.values[i]);
        max_inc = std::max(max_inc, vol.values[i]);
      }
    }
    if (max_inc > -1e300) {
      CHECK(min_pos >= max_inc);
      CHECK(min_inc >= max_neg);
    } else {
      CHECK(min_pos >= max_neg);
    }
  }
}

TEST_CASE("classify: ties broken by ascending frame index") {
  VolumeSeries vol;
  vol.values = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  vol.v_max = 0.5;
  HeuristicConfig cfg;
  cfg.quiet_frac = cfg.loud_frac = 1.0 / 3.0;
  const auto labels = classify_pairs(vol, cfg);
  // quietest = first two by index; loudest = last two by the stable order
  CHECK(labels[0] == PairLabel::Negative);
  CHECK(labels[1] == PairLabel::Negative);
  CHECK(labels[4] == PairLabel::Positive);
  CHECK(labels[5] == PairLabel::Positive);
  CHECK(labels[2] == PairLabel::Inconclusive);
  CHECK(labels[3] == PairLabel::Inconclusive);
}

TEST_CASE("classify: refusals") {
  HeuristicConfig cfg;
  VolumeSeries vol;
  vol.values = {1.0, 2.0};
  vol.v_max = 2.0;
  CHECK_THROWS_AS(classify_pairs(vol, cfg), Error);  // too few frames

  vol.values = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  vol.v_max = 0.0;
  CHECK_THROWS_AS(classify_pairs(vol, cfg), Error);  // silent run

  vol.values = {1, 2, 3};
  vol.v_max = 3;
  cfg.loud_frac = cfg.quiet_frac = 0.15;  // floor(3*0.15) = 0
  CHECK_THROWS_AS(classify_pairs(vol, cfg), Error);

  cfg.loud_frac = 0.6;
  cfg.quiet_frac = 0.5;  // sum >= 1
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("add_noise: achieved SNR within 0.5 dB of target") {
  const AudioClip clip = sine_clip(2, 2.0, 150.0, 0.3);
  for (double snr : {0.0, 20.0, 40.0}) {
    const AudioClip noisy = add_noise(clip, snr, 77);
    for (int c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < clip.n_samples; ++i) {
        const double d = noisy.channel(c)[i] - clip.channel(c)[i];
        acc += d * d;
      }
      const double noise_rms = std::sqrt(acc / clip.n_samples);
      const double achieved = 20.0 * std::log10(channel_rms(clip, c) / noise_rms);
      CHECK(std::abs(achieved - snr) < 0.5);
    }
  }
}

TEST_CASE("add_noise: identity at +inf, deterministic per seed, errors") {
  const AudioClip clip = sine_clip(1, 1.0, 150.0);
  const AudioClip same = add_noise(clip, std::numeric_limits<double>::infinity(), 3);
  CHECK(same.samples == clip.samples);
  const AudioClip n1 = add_noise(clip, 20.0, 3);
  const AudioClip n2 = add_noise(clip, 20.0, 3);
  const AudioClip n3 = add_noise(clip, 20.0, 4);
  CHECK(n1.samples == n2.samples);
  CHECK(n1.samples != n3.samples);

  AudioClip silent(1, 1000, 44100.0);
  CHECK_THROWS_AS(add_noise(silent, 20.0, 0), Error);
  CHECK_THROWS_AS(add_noise(clip, std::numeric_limits<double>::quiet_NaN(), 0), Error);
}

TEST_CASE("channel_subset: 7-mic conventions and fallbacks") {
  CHECK(channel_subset(7, 1, true) == std::vector<int>{6});
  CHECK(channel_subset(7, 2, true) == std::vector<int>{0, 3});
  CHECK(channel_subset(7, 4, true) == std::vector<int>{0, 1, 3, 4});
  CHECK(channel_subset(7, 6, true) == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(channel_subset(2, 2, false) == std::vector<int>{0, 1});
  CHECK(channel_subset(2, 1, false) == std::vector<int>{0});
  CHECK_THROWS_AS(channel_subset(2, 4, false), Error);
  CHECK_THROWS_AS(channel_subset(7, 3, true), Error);
}

TEST_CASE("pair label names round-trip") {
  for (PairLabel l : {PairLabel::Positive, PairLabel::Negative, PairLabel::Inconclusive})
    CHECK(pair_label_from_name(pair_label_name(l)) == l);
  CHECK_THROWS_AS(pair_label_from_name("Loud"), Error);
}
