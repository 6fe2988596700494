#pragma once
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avdet/audio_frontend.hpp"
#include "avdet/types.hpp"

namespace avdet {

double iou(const BBox& a, const BBox& b);

// Per-frame detections/ground truth keyed by frame id.
struct FrameBoxes {
  int frame_id = 0;
  std::vector<ScoredBox> preds;
  std::vector<BBox> gts;
};

// Single-class AP with all-point interpolation; greedy confidence-descending
// matching to the highest-IoU unmatched GT in the same frame. Returns nullopt
// when the ground truth is empty (undefined, not zero).
std::optional<double> average_precision(const std::vector<FrameBoxes>& frames, double iou_thresh);

struct CenterDistanceResult {
  double cd = 0.0;          // with per-unmatched-box penalty
  double cd_matched = 0.0;  // matched pairs only
  int n_matched = 0;
  int n_unmatched = 0;
  int n_frames = 0;  // frames that contributed
};

// Optimal one-to-one center assignment per frame; unmatched boxes incur
// penalty_px each. Frames with no boxes on either side contribute nothing.
CenterDistanceResult center_distance(const std::vector<FrameBoxes>& frames, double penalty_px);

struct HeuristicPrecision {
  std::optional<double> positive;
  std::optional<double> negative;
};

// positive: fraction of Positive-labeled frames that contain a vehicle;
// negative: fraction of Negative-labeled frames that do not.
HeuristicPrecision heuristic_precision(const std::vector<PairLabel>& labels,
                                       const std::vector<bool>& gt_presence);

struct EvalReport {
  std::map<std::string, std::optional<double>> ap;  // keys "0.1", "0.2", "0.3"
  CenterDistanceResult cd;
  HeuristicPrecision heuristic;
  int n_frames = 0;
  int n_gt_boxes = 0;
  int n_pred_boxes = 0;
};

EvalReport evaluate_detections(const std::vector<FrameBoxes>& frames, double cd_penalty_px);

}  // namespace avdet
