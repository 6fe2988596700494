// Command-line front end for the audio-visual vehicle detection pipeline.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avdet/baselines.hpp"
#include "avdet/errors.hpp"
#include "avdet/harness.hpp"

using namespace avdet;

namespace {

ExperimentConfig load_cfg(const std::string& config_path, const std::string& output_dir,
                          long long seed) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_experiment_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (seed >= 0) {
    cfg.seeds = {static_cast<std::uint64_t>(seed)};
    cfg.suite.seed = static_cast<std::uint64_t>(seed);
    cfg.teacher.seed = static_cast<std::uint64_t>(seed);
    cfg.student.seed = static_cast<std::uint64_t>(seed);
  }
  cfg.validate();
  return cfg;
}

std::vector<RecordedScene> load_scenes(const std::vector<std::string>& dirs) {
  require(!dirs.empty(), errc::config, "no scene directories given");
  std::vector<RecordedScene> scenes;
  for (const auto& d : dirs) scenes.push_back(load_recorded_scene(d));
  return scenes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised audio-visual moving-vehicle detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, output_dir, out_path, teacher_path, student_path, boxes_path;
  std::string labels_path, dets_path, method = "framediff", scene_dir;
  std::vector<std::string> scene_dirs;
  long long seed = -1;
  int channels = 6;
  double threshold = -1.0;
  bool from_gt = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--output-dir", output_dir, "override output directory");
    cmd->add_option("--seed", seed, "override all seeds");
  };

  auto* c_run = app.add_subcommand("run", "full pipeline: generate through report");
  add_common(c_run);

  auto* c_gen = app.add_subcommand("generate", "generate the synthetic scene suite");
  add_common(c_gen);

  auto* c_cls = app.add_subcommand("classify", "volume-heuristic frame labeling");
  add_common(c_cls);
  c_cls->add_option("--scenes", scene_dirs, "scene directories")->required();
  c_cls->add_option("--out", out_path, "labels JSON path")->required();

  auto* c_tt = app.add_subcommand("train-teacher", "train the audio-visual teacher");
  add_common(c_tt);
  c_tt->add_option("--scenes", scene_dirs, "scene directories")->required();
  c_tt->add_option("--labels", labels_path, "labels JSON from classify")->required();
  c_tt->add_option("--channels", channels, "audio channels (1,2,4,6)");
  c_tt->add_option("--out", out_path, "checkpoint path")->required();

  auto* c_eb = app.add_subcommand("extract-boxes", "teacher heatmaps to boxes");
  add_common(c_eb);
  c_eb->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  c_eb->add_option("--scenes", scene_dirs, "scene directories")->required();
  c_eb->add_option("--channels", channels, "audio channels (1,2,4,6)");
  c_eb->add_option("--threshold", threshold, "heatmap threshold (default from config)");
  c_eb->add_option("--out", out_path, "boxes JSON path")->required();

  auto* c_ts = app.add_subcommand("train-student", "distill the audio-only student");
  add_common(c_ts);
  c_ts->add_option("--scenes", scene_dirs, "scene directories")->required();
  c_ts->add_option("--boxes", boxes_path, "teacher boxes JSON");
  c_ts->add_flag("--from-gt", from_gt, "use ground-truth boxes instead of teacher boxes");
  c_ts->add_option("--channels", channels, "audio channels (1,2,4,6)");
  c_ts->add_option("--out", out_path, "checkpoint path")->required();

  auto* c_pr = app.add_subcommand("predict", "student inference on a scene");
  add_common(c_pr);
  c_pr->add_option("--student", student_path, "student checkpoint")->required();
  c_pr->add_option("--scene", scene_dir, "scene directory")->required();
  c_pr->add_option("--channels", channels, "audio channels (1,2,4,6)");
  c_pr->add_option("--out", out_path, "predictions JSON path")->required();

  auto* c_bl = app.add_subcommand("baseline", "annotation-free baseline detections");
  add_common(c_bl);
  c_bl->add_option("--method", method, "framediff or flow");
  c_bl->add_option("--scene", scene_dir, "scene directory")->required();
  c_bl->add_option("--threshold", threshold, "difference / flow-magnitude threshold");
  c_bl->add_option("--out", out_path, "predictions JSON path")->required();

  auto* c_ev = app.add_subcommand("evaluate", "AP/CD metrics for saved detections");
  add_common(c_ev);
  c_ev->add_option("--dets", dets_path, "detections JSON")->required();
  c_ev->add_option("--labels", labels_path, "optional labels JSON for heuristic precision");
  c_ev->add_option("--scenes", scene_dirs, "scene directories (needed with --labels)");
  c_ev->add_option("--out", out_path, "report JSON path");

  auto* c_ns = app.add_subcommand("noise-sweep", "heuristic/teacher robustness vs SNR");
  add_common(c_ns);
  c_ns->add_option("--scenes", scene_dirs, "scene directories")->required();
  c_ns->add_option("--out", out_path, "sweep JSON path")->required();

  auto* c_rp = app.add_subcommand("report", "render report.md and plots from artifacts");
  c_rp->add_option("--dir", output_dir, "output directory with stage artifacts")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_run->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      run_experiment(cfg);
      std::cout << "wrote " << cfg.output_dir << "/report.json\n";
    } else if (c_gen->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      const auto dirs = generate_scenes(make_suite(cfg.suite), cfg.output_dir + "/scenes");
      for (const auto& d : dirs) std::cout << d << "\n";
    } else if (c_cls->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      std::vector<LabeledScene> labeled;
      for (const auto& sc : load_scenes(scene_dirs))
        labeled.push_back(classify_scene(sc, cfg.heuristic, cfg.spec_params.window_s));
      save_labels(labeled, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_tt->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      const auto scenes = load_scenes(scene_dirs);
      const auto labeled = load_labels(scenes, labels_path);
      auto result = train_teacher_on_scenes(labeled, channels, cfg.teacher, cfg.spec_params);
      save_teacher(result.model, out_path);
      std::cout << "final loss " << result.loss_curve.back() << ", wrote " << out_path << "\n";
    } else if (c_eb->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      TeacherModel model = load_teacher(teacher_path);
      const double thr = threshold > 0 ? threshold : cfg.box_threshold;
      std::vector<SceneDetections> dets;
      for (const auto& sc : load_scenes(scene_dirs))
        dets.push_back(extract_scene_boxes(model, sc, channels, cfg.spec_params, thr));
      save_detections(dets, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_ts->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      require(from_gt || !boxes_path.empty(), errc::config,
              "train-student needs --boxes or --from-gt");
      const auto scenes = load_scenes(scene_dirs);
      std::vector<SceneDetections> boxes;
      if (!from_gt) boxes = load_detections(boxes_path);
      std::vector<const RecordedScene*> sps;
      std::vector<const SceneDetections*> dps;
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        sps.push_back(&scenes[i]);
        if (!from_gt) dps.push_back(&boxes[i]);
      }
      SceneSampleSource src(sps, dps, channels, cfg.spec_params, from_gt);
      auto result = train_student(src, cfg.student);
      save_student(result.model, out_path);
      std::cout << "final loss " << result.loss_curve.back() << ", wrote " << out_path << "\n";
    } else if (c_pr->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      StudentModel model = load_student(student_path);
      const RecordedScene scene = load_recorded_scene(scene_dir);
      std::vector<SceneDetections> dets = {
          predict_student_boxes(model, scene, channels, cfg.spec_params)};
      save_detections(dets, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_bl->parsed()) {
      const RecordedScene scene = load_recorded_scene(scene_dir);
      const double thr = threshold > 0 ? threshold : (method == "flow" ? 1.0 : 0.1);
      std::vector<SceneDetections> dets = {baseline_scene_boxes(scene, method, thr)};
      save_detections(dets, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_ev->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      const auto dets = load_detections(dets_path);
      std::vector<LabeledScene> labeled;
      const std::vector<LabeledScene>* labeled_ptr = nullptr;
      if (!labels_path.empty()) {
        labeled = load_labels(load_scenes(scene_dirs), labels_path);
        labeled_ptr = &labeled;
      }
      const EvalReport rep =
          evaluate_scene_detections(dets, labeled_ptr, cfg.cd_penalty_diag_frac);
      const auto j = eval_report_to_json(rep);
      if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
      }
      std::cout << j.dump(2) << "\n";
    } else if (c_ns->parsed()) {
      const ExperimentConfig cfg = load_cfg(config_path, output_dir, seed);
      const auto scenes = load_scenes(scene_dirs);
      const auto table = noise_sweep(scenes, cfg, cfg.seeds.front());
      save_sweep(table, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (c_rp->parsed()) {
      emit_report(output_dir);
      std::cout << "wrote " << output_dir << "/report.md\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == errc::config ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
