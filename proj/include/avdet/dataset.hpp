#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avdet/audio_clip.hpp"
#include "avdet/geometry.hpp"
#include "avdet/image.hpp"
#include "avdet/types.hpp"

namespace avdet {

struct MicArray {
  int n_mics = 7;
  double radius_m = 0.5;
  std::vector<double> angles_deg;  // circular mics only; center mic is extra
  bool center_mic = true;
  double speed_of_sound = 343.0;

  void validate() const;
  // Mic positions in the horizontal plane (z = 0), camera at the origin.
  std::vector<Vec3> positions() const;

  // Six circular mics at 60 degree spacing plus one center mic.
  static MicArray circular7(double radius_m = 0.5);
};

struct CameraModel {
  int image_width = 300;
  int image_height = 100;
  double fps = 5.0;
  double horizontal_fov_deg = 60.0;

  void validate() const;
  double focal_px() const;
};

struct EngineSoundSpec {
  double base_freq_hz = 55.0;
  int n_harmonics = 8;
  double broadband_level = 0.3;  // relative to the harmonic stack
  double source_level = 1.0;     // reference amplitude at 1 m

  void validate() const;
};

struct VehicleTrack {
  // (timestamp, world position) key points; piecewise linear, clamped at the ends.
  std::vector<std::pair<double, Vec3>> path;
  double size_w_m = 2.0;
  double size_h_m = 1.6;
  std::uint64_t texture_seed = 0;
  EngineSoundSpec emitter;

  void validate() const;
  Vec3 position_at(double t) const;
  double speed_at(double t) const;
};

struct SceneConfig {
  double duration_s = 10.0;
  std::vector<VehicleTrack> tracks;
  CameraModel camera;
  MicArray mics = MicArray::circular7();
  double ambient_level = 0.01;
  double jitter_px = 0.0;  // per-frame camera shake amplitude (dynamic-platform stand-in)
  std::uint64_t seed = 0;
};

// A validated scene; pure functions of (config, seed, t) everywhere below.
struct Scene {
  SceneConfig config;

  int n_frames() const;
  double frame_timestamp(int idx) const { return idx / config.camera.fps; }
};

struct Frame {
  double timestamp_s = 0.0;
  Image pixels;
  std::vector<BBox> gt_boxes;  // moving vehicles only, clamped to image bounds
};

Scene generate_scene(const SceneConfig& config, std::uint64_t seed);
Frame render_frame(const Scene& scene, double t);
AudioClip synthesize_audio(const Scene& scene);

// Projected extent of a track at time t, before clamping; returns false when the
// vehicle is behind the camera or off the image entirely.
bool project_track(const Scene& scene, const VehicleTrack& track, double t, BBox& out);

// On-disk layout:
//   <dir>/frames/%06d.png, <dir>/audio.wav, <dir>/meta.json, <dir>/annotations.json
struct RecordedFrame {
  int id = 0;
  double timestamp_s = 0.0;
  std::string png_path;
  std::vector<BBox> boxes;
  bool annotated = false;
};

struct RecordedScene {
  std::string dir;
  double fps = 0.0;
  CameraModel camera;
  MicArray mics;
  AudioClip audio;
  std::vector<RecordedFrame> frames;  // sorted by timestamp

  Image load_frame(int idx) const;
};

void save_scene(const Scene& scene, const std::string& dir);
RecordedScene load_recorded_scene(const std::string& dir);

}  // namespace avdet
