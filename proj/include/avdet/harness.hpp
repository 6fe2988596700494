#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avdet/audio_frontend.hpp"
#include "avdet/dataset.hpp"
#include "avdet/metrics.hpp"
#include "avdet/student.hpp"
#include "avdet/teacher.hpp"

namespace avdet {

// Which synthetic suite to build, or which recorded directories to load.
struct SuiteSpec {
  std::string kind = "standard";  // standard | toy | dirs
  int n_scenes = 6;
  double duration_s = 60.0;
  double jitter_px = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> dirs;  // kind == "dirs"

  void validate() const;
};

struct ExperimentConfig {
  SuiteSpec suite;
  std::vector<int> channels = {6};
  HeuristicConfig heuristic;
  SpectrogramParams spec_params;
  TeacherConfig teacher;
  StudentHyper student;
  std::vector<double> snr_db;            // noise-sweep points; may include +inf
  std::vector<std::uint64_t> seeds = {0};
  double cd_penalty_diag_frac = 0.25;    // CD penalty = frac * image diagonal
  double box_threshold = 0.5;
  std::string output_dir = "out";

  void validate() const;
};

nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::ordered_json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// ---------------------------------------------------------------------------
// synthetic suites

// Fixed-geometry driving scenes: straight road along x, passes slowing through
// the camera frustum so the loudest frames are also the visible ones.
std::vector<SceneConfig> make_standard_suite(int n_scenes, double duration_s, double jitter_px,
                                             std::uint64_t seed);

// Wide-baseline two-mic suite with an impulsive engine: the inter-channel delay
// pattern (and level ratio) encodes the horizontal position, so an audio-only
// model can regress the box center.
std::vector<SceneConfig> make_toy_delay_suite(int n_scenes, double duration_s,
                                              std::uint64_t seed);

std::vector<SceneConfig> make_suite(const SuiteSpec& spec);

// Generates and saves scenes under root/scene_000, ...; returns the dirs.
// Existing complete scene dirs are reused (file-mediated stage boundary).
std::vector<std::string> generate_scenes(const std::vector<SceneConfig>& configs,
                                         const std::string& root);

// ---------------------------------------------------------------------------
// stages

struct LabeledScene {
  RecordedScene scene;
  VolumeSeries volumes;
  std::vector<PairLabel> labels;
  std::vector<bool> gt_presence;  // per frame, from the annotations
};

LabeledScene classify_scene(const RecordedScene& scene, const HeuristicConfig& cfg,
                            double window_s);

void save_labels(const std::vector<LabeledScene>& scenes, const std::string& path);
// Re-attaches saved labels to freshly loaded scenes (paths must match).
std::vector<LabeledScene> load_labels(const std::vector<RecordedScene>& scenes,
                                      const std::string& path);

// Lazy pair source over labeled scenes: frames are decoded and spectrograms
// computed on demand. With shuffle_audio, images are re-assigned by a seeded
// permutation while the (spectrogram, label) pairs stay fixed — the
// shuffled-audio control.
class ScenePairSource : public PairSource {
 public:
  ScenePairSource(const std::vector<LabeledScene>& scenes, int want_channels,
                  const SpectrogramParams& params, bool shuffle_audio = false,
                  std::uint64_t shuffle_seed = 0);
  std::size_t size() const override { return entries_.size(); }
  PairLabel label(std::size_t idx) const override { return entries_[idx].label; }
  TrainPair get(std::size_t idx) const override;
  int audio_channels() const override { return want_channels_; }

 private:
  struct Entry {
    const LabeledScene* scene;
    int frame_idx;
    int image_entry;  // index into entries_ whose frame supplies the image
    PairLabel label;
  };
  std::vector<Entry> entries_;
  std::vector<std::vector<int>> use_channels_;  // per scene
  std::vector<int> scene_of_entry_;
  int want_channels_;
  SpectrogramParams params_;
};

TeacherTrainResult train_teacher_on_scenes(const std::vector<LabeledScene>& scenes,
                                           int channels, const TeacherConfig& cfg,
                                           const SpectrogramParams& params,
                                           bool shuffle_audio = false,
                                           std::uint64_t shuffle_seed = 0);

// Teacher inference + box extraction over every annotated frame of a scene.
struct SceneDetections {
  std::string dir;
  int img_w = 0, img_h = 0;
  std::vector<FrameBoxes> frames;
};

SceneDetections extract_scene_boxes(TeacherModel& model, const RecordedScene& scene,
                                    int channels, const SpectrogramParams& params,
                                    double threshold);

SceneDetections baseline_scene_boxes(const RecordedScene& scene, const std::string& method,
                                     double threshold);

void save_detections(const std::vector<SceneDetections>& dets, const std::string& path);
std::vector<SceneDetections> load_detections(const std::string& path);

// Student training data: spectrogram windows + pseudo-label boxes per frame.
class SceneSampleSource : public StudentSampleSource {
 public:
  SceneSampleSource(const std::vector<const RecordedScene*>& scenes,
                    const std::vector<const SceneDetections*>& boxes, int want_channels,
                    const SpectrogramParams& params, bool boxes_from_gt = false);
  std::size_t size() const override { return entries_.size(); }
  StudentTrainSample get(std::size_t idx) const override;
  int audio_channels() const override { return want_channels_; }

 private:
  struct Entry {
    const RecordedScene* scene;
    int frame_idx;
    std::vector<BBox> boxes;
  };
  std::vector<Entry> entries_;
  std::vector<std::vector<int>> use_channels_;
  std::vector<int> scene_of_entry_;
  int want_channels_;
  SpectrogramParams params_;
};

SceneDetections predict_student_boxes(StudentModel& model, const RecordedScene& scene,
                                      int channels, const SpectrogramParams& params);

// Evaluation over per-scene detections (optionally with heuristic labels).
EvalReport evaluate_scene_detections(const std::vector<SceneDetections>& dets,
                                     const std::vector<LabeledScene>* labeled,
                                     double cd_penalty_diag_frac);

nlohmann::ordered_json eval_report_to_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// noise sweep & reporting

struct SweepPoint {
  double snr_db = 0.0;
  double heuristic_precision = 0.0;  // positive-label precision
  double teacher_ap01 = 0.0;
};

// For each SNR: corrupt audio in memory, re-classify, re-train the teacher,
// evaluate AP@0.1 on the same (noisy) scenes. Deterministic per seed.
std::vector<SweepPoint> noise_sweep(const std::vector<RecordedScene>& scenes,
                                    const ExperimentConfig& cfg, std::uint64_t seed);

void save_sweep(const std::vector<SweepPoint>& table, const std::string& path);

// Renders report.md plus SVG plots from whatever artifact files exist in the
// output dir; missing stages are listed, not errors.
void emit_report(const std::string& output_dir);

// Full pipeline for one (channel count, seed) cell; writes all stage artifacts
// under cfg.output_dir. Errors are rethrown tagged with the stage name.
EvalReport run_experiment(const ExperimentConfig& cfg);

}  // namespace avdet
