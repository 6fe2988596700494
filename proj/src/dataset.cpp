#include "avdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "avdet/errors.hpp"
#include "avdet/rng.hpp"

namespace avdet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// validation

void MicArray::validate() const {
  const bool ok_count =
      n_mics == 1 || n_mics == 2 || n_mics == 4 || n_mics == 6 || n_mics == 7;
  require(ok_count, errc::config, "MicArray.n_mics must be one of {1,2,4,6,7}");
  require(radius_m > 0.0, errc::config, "MicArray.radius_m must be positive");
  const int expected_circular = n_mics - (center_mic ? 1 : 0);
  require(static_cast<int>(angles_deg.size()) == expected_circular, errc::config,
          "MicArray.angles_deg size must match n_mics minus center mic");
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    require(angles_deg[i] >= 0.0 && angles_deg[i] < 360.0, errc::config,
            "MicArray.angles_deg entries must lie in [0,360)");
    if (i > 0)
      require(angles_deg[i] > angles_deg[i - 1], errc::config,
              "MicArray.angles_deg must be strictly increasing");
  }
  require(speed_of_sound > 0.0, errc::config, "MicArray.speed_of_sound must be positive");
}

std::vector<Vec3> MicArray::positions() const {
  std::vector<Vec3> out;
  out.reserve(n_mics);
  for (double a : angles_deg) {
    const double r = deg_to_rad(a);
    out.push_back({radius_m * std::cos(r), radius_m * std::sin(r), 0.0});
  }
  if (center_mic) out.push_back({0.0, 0.0, 0.0});
  return out;
}

MicArray MicArray::circular7(double radius_m) {
  MicArray m;
  m.n_mics = 7;
  m.radius_m = radius_m;
  m.angles_deg = {0.0, 60.0, 120.0, 180.0, 240.0, 300.0};
  m.center_mic = true;
  return m;
}

void CameraModel::validate() const {
  require(image_width > 0, errc::config, "CameraModel.image_width must be positive");
  require(image_height > 0, errc::config, "CameraModel.image_height must be positive");
  require(fps > 0.0, errc::config, "CameraModel.fps must be positive");
  require(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0, errc::config,
          "CameraModel.horizontal_fov_deg must lie in (0,180)");
}

double CameraModel::focal_px() const {
  return (image_width / 2.0) / std::tan(deg_to_rad(horizontal_fov_deg) / 2.0);
}

void EngineSoundSpec::validate() const {
  require(base_freq_hz > 0.0, errc::config, "EngineSoundSpec.base_freq_hz must be positive");
  require(n_harmonics >= 1, errc::config, "EngineSoundSpec.n_harmonics must be >= 1");
  require(broadband_level >= 0.0, errc::config,
          "EngineSoundSpec.broadband_level must be non-negative");
  require(source_level >= 0.0, errc::config, "EngineSoundSpec.source_level must be non-negative");
}

void VehicleTrack::validate() const {
  require(!path.empty(), errc::config, "VehicleTrack.path must not be empty");
  for (std::size_t i = 1; i < path.size(); ++i) {
    require(path[i].first > path[i - 1].first, errc::config,
            "VehicleTrack.path timestamps must be strictly increasing");
  }
  require(size_w_m > 0.0 && size_h_m > 0.0, errc::config, "VehicleTrack.size must be positive");
  emitter.validate();
}

Vec3 VehicleTrack::position_at(double t) const {
  if (t <= path.front().first) return path.front().second;
  if (t >= path.back().first) return path.back().second;
  std::size_t hi = 1;
  while (path[hi].first < t) ++hi;
  const auto& [t0, p0] = path[hi - 1];
  const auto& [t1, p1] = path[hi];
  const double w = (t - t0) / (t1 - t0);
  return p0 + (p1 - p0) * w;
}

double VehicleTrack::speed_at(double t) const {
  if (path.size() < 2) return 0.0;
  if (t < path.front().first || t > path.back().first) return 0.0;
  std::size_t hi = 1;
  while (hi < path.size() && path[hi].first < t) ++hi;
  if (hi >= path.size()) hi = path.size() - 1;
  const auto& [t0, p0] = path[hi - 1];
  const auto& [t1, p1] = path[hi];
  return distance(p0, p1) / (t1 - t0);
}

int Scene::n_frames() const {
  return static_cast<int>(std::llround(config.duration_s * config.camera.fps));
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  require(config.duration_s > 0.0, errc::config, "SceneConfig.duration_s must be positive");
  require(config.ambient_level >= 0.0, errc::config,
          "SceneConfig.ambient_level must be non-negative");
  require(config.jitter_px >= 0.0, errc::config, "SceneConfig.jitter_px must be non-negative");
  config.camera.validate();
  config.mics.validate();
  for (const auto& t : config.tracks) t.validate();
  Scene scene{config};
  scene.config.seed = seed;
  return scene;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

struct ClutterRect {
  double x, y, w, h;
  double r, g, b;
};

// Static per-scene background clutter, derived from the scene seed only.
std::vector<ClutterRect> clutter_rects(const Scene& scene) {
  Rng rng = Rng(scene.config.seed).stream(101);
  const auto& cam = scene.config.camera;
  std::vector<ClutterRect> rects;
  const int n = 70;
  rects.reserve(n);
  for (int i = 0; i < n; ++i) {
    ClutterRect r;
    r.w = rng.uniform(3.0, cam.image_width * 0.08);
    r.h = rng.uniform(3.0, cam.image_height * 0.25);
    r.x = rng.uniform(-r.w, static_cast<double>(cam.image_width));
    r.y = rng.uniform(-r.h, static_cast<double>(cam.image_height));
    const double base = rng.uniform(0.15, 0.55);
    r.r = base + rng.uniform(-0.05, 0.05);
    r.g = base + rng.uniform(-0.05, 0.05);
    r.b = base + rng.uniform(-0.05, 0.05);
    rects.push_back(r);
  }
  return rects;
}

void jitter_offset(const Scene& scene, double t, double& jx, double& jy) {
  jx = jy = 0.0;
  if (scene.config.jitter_px <= 0.0) return;
  const int idx = static_cast<int>(std::llround(t * scene.config.camera.fps));
  Rng rng = Rng(scene.config.seed).stream(777).stream(static_cast<std::uint64_t>(idx));
  jx = rng.uniform(-scene.config.jitter_px, scene.config.jitter_px);
  jy = rng.uniform(-scene.config.jitter_px, scene.config.jitter_px);
}

void vehicle_color(std::uint64_t seed, double& r, double& g, double& b) {
  r = 0.55 + 0.45 * (splitmix64(seed * 3 + 1) >> 11) * 0x1.0p-53;
  g = 0.55 + 0.45 * (splitmix64(seed * 3 + 2) >> 11) * 0x1.0p-53;
  b = 0.55 + 0.45 * (splitmix64(seed * 3 + 3) >> 11) * 0x1.0p-53;
}

}  // namespace

bool project_track(const Scene& scene, const VehicleTrack& track, double t, BBox& out) {
  const auto& cam = scene.config.camera;
  const Vec3 p = track.position_at(t);
  if (p.y < 0.3) return false;  // behind or at the camera plane
  const double f = cam.focal_px();
  double jx, jy;
  jitter_offset(scene, t, jx, jy);
  out.x_min = cam.image_width / 2.0 + f * (p.x - track.size_w_m / 2.0) / p.y + jx;
  out.x_max = cam.image_width / 2.0 + f * (p.x + track.size_w_m / 2.0) / p.y + jx;
  out.y_min = cam.image_height / 2.0 - f * (p.z + track.size_h_m / 2.0) / p.y + jy;
  out.y_max = cam.image_height / 2.0 - f * (p.z - track.size_h_m / 2.0) / p.y + jy;
  return out.x_max > 0 && out.x_min < cam.image_width && out.y_max > 0 &&
         out.y_min < cam.image_height;
}

Frame render_frame(const Scene& scene, double t) {
  require(t >= 0.0 && t <= scene.config.duration_s, errc::range,
          "render_frame: t outside [0, duration]");
  const auto& cam = scene.config.camera;
  Frame frame;
  frame.timestamp_s = t;
  frame.pixels = Image(cam.image_width, cam.image_height);

  double jx, jy;
  jitter_offset(scene, t, jx, jy);

  // background: vertical gradient plus static clutter, both shifted by the jitter
  Image& img = frame.pixels;
  for (int y = 0; y < cam.image_height; ++y) {
    const double fy = (y - jy) / cam.image_height;
    const double shade = 0.62 - 0.30 * std::clamp(fy, 0.0, 1.0);
    for (int x = 0; x < cam.image_width; ++x) {
      img.at(x, y, 0) = shade;
      img.at(x, y, 1) = shade;
      img.at(x, y, 2) = shade * 1.05;
    }
  }
  for (const ClutterRect& r : clutter_rects(scene)) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(r.x + jx)));
    const int x1 = std::min(cam.image_width, static_cast<int>(std::ceil(r.x + r.w + jx)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(r.y + jy)));
    const int y1 = std::min(cam.image_height, static_cast<int>(std::ceil(r.y + r.h + jy)));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        img.at(x, y, 0) = r.r;
        img.at(x, y, 1) = r.g;
        img.at(x, y, 2) = r.b;
      }
  }

  // vehicles, farthest first
  std::vector<std::size_t> order(scene.config.tracks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scene.config.tracks[a].position_at(t).y > scene.config.tracks[b].position_at(t).y;
  });

  for (std::size_t idx : order) {
    const VehicleTrack& track = scene.config.tracks[idx];
    BBox box;
    if (!project_track(scene, track, t, box)) continue;
    double cr, cg, cb;
    vehicle_color(track.texture_seed, cr, cg, cb);
    const int x0 = std::max(0, static_cast<int>(std::ceil(box.x_min)));
    const int x1 = std::min(cam.image_width, static_cast<int>(std::ceil(box.x_max)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(box.y_min)));
    const int y1 = std::min(cam.image_height, static_cast<int>(std::ceil(box.y_max)));
    for (int y = y0; y < y1; ++y) {
      const double lv = (y - box.y_min) / (box.y_max - box.y_min);
      for (int x = x0; x < x1; ++x) {
        const double lu = (x - box.x_min) / (box.x_max - box.x_min);
        // body stripes in vehicle-local coordinates so the texture travels with it
        const double stripe = 0.72 + 0.28 * std::sin(2.0 * kPi * (lu * 5.0 + 0.25));
        const double window = (lv < 0.35 && lu > 0.15 && lu < 0.85) ? 0.45 : 1.0;
        img.at(x, y, 0) = std::clamp(cr * stripe * window, 0.0, 1.0);
        img.at(x, y, 1) = std::clamp(cg * stripe * window, 0.0, 1.0);
        img.at(x, y, 2) = std::clamp(cb * stripe * window, 0.0, 1.0);
      }
    }
    // ground-truth box for moving, visible vehicles
    if (track.speed_at(t) > 0.05) {
      BBox clamped = box.clamped(cam.image_width, cam.image_height);
      if (clamped.valid() && clamped.area() >= 1.0) frame.gt_boxes.push_back(clamped);
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------
// audio synthesis

namespace {

constexpr int kWavetableSize = 8192;

std::vector<double> engine_wavetable(const EngineSoundSpec& spec) {
  std::vector<double> table(kWavetableSize, 0.0);
  for (int k = 1; k <= spec.n_harmonics; ++k) {
    for (int i = 0; i < kWavetableSize; ++i) {
      table[i] += std::sin(2.0 * kPi * k * i / kWavetableSize) / k;
    }
  }
  double peak = 0.0;
  for (double v : table) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : table) v /= peak;
  return table;
}

double wavetable_at(const std::vector<double>& table, double phase) {
  const double p = (phase - std::floor(phase)) * kWavetableSize;
  const int i0 = static_cast<int>(p) % kWavetableSize;
  const int i1 = (i0 + 1) % kWavetableSize;
  const double w = p - std::floor(p);
  return table[i0] * (1.0 - w) + table[i1] * w;
}

// Band-limited broadband noise, unit rms, with 1 s of padding on both sides so
// delayed reads never run off the end.
std::vector<double> broadband_noise(Rng rng, std::int64_t n_samples, std::int64_t pad) {
  std::vector<double> noise(n_samples + 2 * pad);
  for (double& v : noise) v = rng.normal();
  std::vector<double> smoothed(noise.size(), 0.0);
  double acc = 0.0;
  const int win = 5;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    acc += noise[i];
    if (i >= static_cast<std::size_t>(win)) acc -= noise[i - win];
    smoothed[i] = acc / win * std::sqrt(static_cast<double>(win));
  }
  return smoothed;
}

double noise_at(const std::vector<double>& noise, double tau, double fs, std::int64_t pad) {
  const double idx = tau * fs + pad;
  if (idx < 0.0 || idx >= static_cast<double>(noise.size() - 1)) return 0.0;
  const std::int64_t i0 = static_cast<std::int64_t>(idx);
  const double w = idx - i0;
  return noise[i0] * (1.0 - w) + noise[i0 + 1] * w;
}

}  // namespace

AudioClip synthesize_audio(const Scene& scene) {
  const double fs = 44100.0;
  const std::int64_t n = static_cast<std::int64_t>(std::llround(scene.config.duration_s * fs));
  const std::vector<Vec3> mic_pos = scene.config.mics.positions();
  const int n_mics = scene.config.mics.n_mics;
  const double c = scene.config.mics.speed_of_sound;
  AudioClip clip(n_mics, n, fs);

  Rng scene_rng(scene.config.seed);
  const std::int64_t pad = static_cast<std::int64_t>(fs);

  for (std::size_t ti = 0; ti < scene.config.tracks.size(); ++ti) {
    const VehicleTrack& track = scene.config.tracks[ti];
    if (track.emitter.source_level <= 0.0) continue;
    const std::vector<double> table = engine_wavetable(track.emitter);
    const std::vector<double> noise =
        broadband_noise(scene_rng.stream(2000 + ti), n, pad);
    const double f0 = track.emitter.base_freq_hz;
    const double bb = track.emitter.broadband_level;
    for (std::int64_t i = 0; i < n; ++i) {
      const double t = i / fs;
      const Vec3 p = track.position_at(t);
      for (int m = 0; m < n_mics; ++m) {
        const double d = distance(p, mic_pos[m]);
        const double tau = t - d / c;  // emission time
        const double amp = track.emitter.source_level / std::max(d, 1.0);
        const double v =
            amp * (wavetable_at(table, f0 * tau) + bb * noise_at(noise, tau, fs, pad));
        clip.channel(m)[i] += static_cast<float>(v);
      }
    }
  }

  if (scene.config.ambient_level > 0.0) {
    for (int m = 0; m < n_mics; ++m) {
      Rng rng = scene_rng.stream(1000 + m);
      float* ch = clip.channel(m);
      for (std::int64_t i = 0; i < n; ++i) {
        ch[i] += static_cast<float>(scene.config.ambient_level * rng.normal());
      }
    }
  }
  return clip;
}

// ---------------------------------------------------------------------------
// on-disk layout

namespace {

std::string frame_filename(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", idx);
  return buf;
}

ordered_json mics_to_json(const MicArray& m) {
  return ordered_json{{"n_mics", m.n_mics},
                      {"radius_m", m.radius_m},
                      {"angles_deg", m.angles_deg},
                      {"center_mic", m.center_mic},
                      {"speed_of_sound", m.speed_of_sound}};
}

MicArray mics_from_json(const ordered_json& j) {
  MicArray m;
  m.n_mics = j.at("n_mics").get<int>();
  m.radius_m = j.at("radius_m").get<double>();
  m.angles_deg = j.at("angles_deg").get<std::vector<double>>();
  m.center_mic = j.at("center_mic").get<bool>();
  m.speed_of_sound = j.at("speed_of_sound").get<double>();
  return m;
}

ordered_json camera_to_json(const CameraModel& c) {
  return ordered_json{{"image_width", c.image_width},
                      {"image_height", c.image_height},
                      {"fps", c.fps},
                      {"horizontal_fov_deg", c.horizontal_fov_deg}};
}

CameraModel camera_from_json(const ordered_json& j) {
  CameraModel c;
  c.image_width = j.at("image_width").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.fps = j.at("fps").get<double>();
  c.horizontal_fov_deg = j.at("horizontal_fov_deg").get<double>();
  return c;
}

}  // namespace

void save_scene(const Scene& scene, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");

  const int n = scene.n_frames();
  std::vector<double> timestamps(n);
  ordered_json annotations = ordered_json::array();
  for (int i = 0; i < n; ++i) {
    const double t = scene.frame_timestamp(i);
    timestamps[i] = t;
    Frame frame = render_frame(scene, t);
    write_png((fs::path(dir) / "frames" / frame_filename(i)).string(), frame.pixels);
    ordered_json boxes = ordered_json::array();
    for (const BBox& b : frame.gt_boxes)
      boxes.push_back(ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max}));
    annotations.push_back(ordered_json{{"frame", i}, {"boxes", boxes}});
  }

  write_wav((fs::path(dir) / "audio.wav").string(), synthesize_audio(scene));

  ordered_json meta{{"fps", scene.config.camera.fps},
                    {"duration_s", scene.config.duration_s},
                    {"sample_rate_hz", 44100.0},
                    {"seed", scene.config.seed},
                    {"jitter_px", scene.config.jitter_px},
                    {"frame_timestamps", timestamps},
                    {"camera", camera_to_json(scene.config.camera)},
                    {"mics", mics_to_json(scene.config.mics)}};
  std::ofstream meta_out(fs::path(dir) / "meta.json");
  meta_out << meta.dump(2) << "\n";

  std::ofstream ann_out(fs::path(dir) / "annotations.json");
  ann_out << annotations.dump(2) << "\n";
}

RecordedScene load_recorded_scene(const std::string& dir) {
  const fs::path root(dir);
  require(fs::exists(root), errc::missing_file, "scene directory not found: " + dir);

  const fs::path meta_path = root / "meta.json";
  require(fs::exists(meta_path), errc::missing_file, "missing meta.json in " + dir);
  ordered_json meta;
  {
    std::ifstream in(meta_path);
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      fail(errc::malformed_json, std::string("meta.json: ") + e.what());
    }
  }

  RecordedScene rec;
  rec.dir = dir;
  try {
    rec.fps = meta.at("fps").get<double>();
    rec.camera = camera_from_json(meta.at("camera"));
    rec.mics = mics_from_json(meta.at("mics"));
    const auto timestamps = meta.at("frame_timestamps").get<std::vector<double>>();
    rec.frames.resize(timestamps.size());
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
      rec.frames[i].id = static_cast<int>(i);
      rec.frames[i].timestamp_s = timestamps[i];
      rec.frames[i].png_path = (root / "frames" / frame_filename(static_cast<int>(i))).string();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_json, std::string("meta.json: ") + e.what());
  }

  for (const auto& f : rec.frames)
    require(fs::exists(f.png_path), errc::missing_file, "missing frame file " + f.png_path);

  const fs::path wav_path = root / "audio.wav";
  require(fs::exists(wav_path), errc::missing_file, "missing audio.wav in " + dir);
  rec.audio = read_wav(wav_path.string());
  if (meta.contains("sample_rate_hz")) {
    const double expected = meta.at("sample_rate_hz").get<double>();
    require(std::abs(rec.audio.sample_rate_hz - expected) < 0.5, errc::sample_rate_mismatch,
            "audio.wav sample rate does not match meta.json");
  }

  const fs::path ann_path = root / "annotations.json";
  if (fs::exists(ann_path)) {
    ordered_json ann;
    {
      std::ifstream in(ann_path);
      try {
        in >> ann;
      } catch (const nlohmann::json::exception& e) {
        fail(errc::malformed_json, std::string("annotations.json: ") + e.what());
      }
    }
    try {
      for (const auto& entry : ann) {
        const int id = entry.at("frame").get<int>();
        require(id >= 0 && id < static_cast<int>(rec.frames.size()), errc::bad_annotation,
                "annotation references nonexistent frame id " + std::to_string(id));
        rec.frames[id].annotated = true;
        for (const auto& b : entry.at("boxes")) {
          require(b.is_array() && b.size() == 4, errc::bad_annotation,
                  "annotation box must have four coordinates");
          rec.frames[id].boxes.push_back(
              {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(errc::malformed_json, std::string("annotations.json: ") + e.what());
    }
  }

  std::stable_sort(rec.frames.begin(), rec.frames.end(),
                   [](const RecordedFrame& a, const RecordedFrame& b) {
                     return a.timestamp_s < b.timestamp_s;
                   });
  return rec;
}

Image RecordedScene::load_frame(int idx) const {
  require(idx >= 0 && idx < static_cast<int>(frames.size()), errc::range,
          "load_frame: index out of range");
  return read_png(frames[idx].png_path);
}

}  // namespace avdet
