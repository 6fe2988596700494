#include "avdet/boxes.hpp"

#include <algorithm>
#include <limits>

#include "avdet/errors.hpp"

namespace avdet {

std::vector<std::vector<int>> connected_components(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::vector<int>> comps;
  std::vector<int> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (!mask.data[idx] || label[idx] >= 0) continue;
      const int comp_id = static_cast<int>(comps.size());
      comps.emplace_back();
      stack.clear();
      stack.push_back(idx);
      label[idx] = comp_id;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        comps[comp_id].push_back(cur);
        const int cx = cur % w, cy = cur / w;
        const int nbr[4][2] = {{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
        for (const auto& n : nbr) {
          if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
          const int ni = n[1] * w + n[0];
          if (mask.data[ni] && label[ni] < 0) {
            label[ni] = comp_id;
            stack.push_back(ni);
          }
        }
      }
      std::sort(comps[comp_id].begin(), comps[comp_id].end());
    }
  }

  std::stable_sort(comps.begin(), comps.end(), [w](const auto& a, const auto& b) {
    int ay = std::numeric_limits<int>::max(), ax = std::numeric_limits<int>::max();
    int by = std::numeric_limits<int>::max(), bx = std::numeric_limits<int>::max();
    for (int p : a) {
      ay = std::min(ay, p / w);
      ax = std::min(ax, p % w);
    }
    for (int p : b) {
      by = std::min(by, p / w);
      bx = std::min(bx, p % w);
    }
    return std::tie(ay, ax) < std::tie(by, bx);
  });
  return comps;
}

std::vector<ScoredBox> boxes_from_mask(const BinaryMask& mask,
                                       const std::vector<double>& confidence_map,
                                       bool mean_confidence) {
  require(confidence_map.size() == mask.data.size(), errc::shape,
          "boxes_from_mask: confidence map size mismatch");
  const int w = mask.width;
  std::vector<ScoredBox> out;
  for (const auto& comp : connected_components(mask)) {
    int x_min = mask.width, x_max = -1, y_min = mask.height, y_max = -1;
    double conf = mean_confidence ? 0.0 : -std::numeric_limits<double>::infinity();
    for (int p : comp) {
      const int x = p % w, y = p / w;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
      if (mean_confidence)
        conf += confidence_map[p];
      else
        conf = std::max(conf, confidence_map[p]);
    }
    if (mean_confidence) conf /= static_cast<double>(comp.size());
    ScoredBox b;
    b.box = {static_cast<double>(x_min), static_cast<double>(y_min),
             static_cast<double>(x_max + 1), static_cast<double>(y_max + 1)};
    b.confidence = std::clamp(conf, 0.0, 1.0);
    out.push_back(b);
  }
  return out;
}

std::vector<ScoredBox> extract_boxes(const ScoreMap& heatmap, double threshold) {
  BinaryMask mask(heatmap.width, heatmap.height);
  for (std::size_t i = 0; i < heatmap.scores.size(); ++i)
    mask.data[i] = heatmap.scores[i] > threshold ? 1 : 0;
  return boxes_from_mask(mask, heatmap.scores, /*mean_confidence=*/false);
}

}  // namespace avdet
