#include "avdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avdet/assignment.hpp"
#include "avdet/errors.hpp"

namespace avdet {

double iou(const BBox& a, const BBox& b) {
  require(a.valid() && b.valid(), errc::config, "iou: degenerate box");
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

std::optional<double> average_precision(const std::vector<FrameBoxes>& frames, double iou_thresh) {
  int n_gt = 0;
  for (const auto& f : frames) n_gt += static_cast<int>(f.gts.size());
  if (n_gt == 0) return std::nullopt;

  struct Pred {
    double conf;
    int frame_idx;
    int box_idx;
  };
  std::vector<Pred> preds;
  for (std::size_t fi = 0; fi < frames.size(); ++fi)
    for (std::size_t bi = 0; bi < frames[fi].preds.size(); ++bi)
      preds.push_back({frames[fi].preds[bi].confidence, static_cast<int>(fi),
                       static_cast<int>(bi)});
  // confidence descending; ties by frame id then box order
  std::stable_sort(preds.begin(), preds.end(), [&](const Pred& a, const Pred& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (frames[a.frame_idx].frame_id != frames[b.frame_idx].frame_id)
      return frames[a.frame_idx].frame_id < frames[b.frame_idx].frame_id;
    return a.box_idx < b.box_idx;
  });

  std::vector<std::vector<char>> gt_used(frames.size());
  for (std::size_t fi = 0; fi < frames.size(); ++fi)
    gt_used[fi].assign(frames[fi].gts.size(), 0);

  std::vector<double> precisions, recalls;
  int tp = 0, fp = 0;
  for (const Pred& p : preds) {
    const auto& frame = frames[p.frame_idx];
    int best_gt = -1;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < frame.gts.size(); ++gi) {
      if (gt_used[p.frame_idx][gi]) continue;
      const double v = iou(frame.preds[p.box_idx].box, frame.gts[gi]);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0) {
      gt_used[p.frame_idx][best_gt] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precisions.push_back(static_cast<double>(tp) / (tp + fp));
    recalls.push_back(static_cast<double>(tp) / n_gt);
  }

  // area under the PR curve with the precision envelope (all-point interpolation)
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precisions.size(); ++i) {
    double p_envelope = 0.0;
    for (std::size_t j = i; j < precisions.size(); ++j)
      p_envelope = std::max(p_envelope, precisions[j]);
    ap += (recalls[i] - prev_recall) * p_envelope;
    prev_recall = recalls[i];
  }
  return ap;
}

CenterDistanceResult center_distance(const std::vector<FrameBoxes>& frames, double penalty_px) {
  CenterDistanceResult res;
  double frame_sum = 0.0;
  double matched_sum = 0.0;
  for (const auto& f : frames) {
    const int np = static_cast<int>(f.preds.size());
    const int ng = static_cast<int>(f.gts.size());
    if (np == 0 && ng == 0) continue;
    ++res.n_frames;

    std::vector<double> cost(static_cast<std::size_t>(np) * ng, 0.0);
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < ng; ++j) {
        const double dx = f.preds[i].box.center_x() - f.gts[j].center_x();
        const double dy = f.preds[i].box.center_y() - f.gts[j].center_y();
        cost[static_cast<std::size_t>(i) * ng + j] = std::hypot(dx, dy);
      }
    std::vector<int> row_to_col;
    const double matched_cost = solve_assignment(cost, np, ng, row_to_col);
    const int matched = std::min(np, ng);
    const int unmatched = std::max(np, ng) - matched;
    res.n_matched += matched;
    res.n_unmatched += unmatched;
    matched_sum += matched_cost;
    const int total = matched + unmatched;
    frame_sum += (matched_cost + penalty_px * unmatched) / total;
  }
  res.cd = res.n_frames > 0 ? frame_sum / res.n_frames : 0.0;
  res.cd_matched = res.n_matched > 0 ? matched_sum / res.n_matched : 0.0;
  return res;
}

HeuristicPrecision heuristic_precision(const std::vector<PairLabel>& labels,
                                       const std::vector<bool>& gt_presence) {
  require(labels.size() == gt_presence.size(), errc::shape,
          "heuristic_precision: label/presence size mismatch");
  int n_pos = 0, n_pos_correct = 0, n_neg = 0, n_neg_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == PairLabel::Positive) {
      ++n_pos;
      if (gt_presence[i]) ++n_pos_correct;
    } else if (labels[i] == PairLabel::Negative) {
      ++n_neg;
      if (!gt_presence[i]) ++n_neg_correct;
    }
  }
  HeuristicPrecision out;
  if (n_pos > 0) out.positive = static_cast<double>(n_pos_correct) / n_pos;
  if (n_neg > 0) out.negative = static_cast<double>(n_neg_correct) / n_neg;
  return out;
}

EvalReport evaluate_detections(const std::vector<FrameBoxes>& frames, double cd_penalty_px) {
  EvalReport rep;
  for (double t : {0.1, 0.2, 0.3}) {
    char key[8];
    std::snprintf(key, sizeof(key), "%.1f", t);
    rep.ap[key] = average_precision(frames, t);
  }
  rep.cd = center_distance(frames, cd_penalty_px);
  rep.n_frames = static_cast<int>(frames.size());
  for (const auto& f : frames) {
    rep.n_gt_boxes += static_cast<int>(f.gts.size());
    rep.n_pred_boxes += static_cast<int>(f.preds.size());
  }
  return rep;
}

}  // namespace avdet
