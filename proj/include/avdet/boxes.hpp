#pragma once
#include <cstdint>
#include <vector>

#include "avdet/types.hpp"

namespace avdet {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
};

// Dense score grid at image resolution, values in (0,1).
struct ScoreMap {
  int width = 0;
  int height = 0;
  std::vector<double> scores;

  ScoreMap() = default;
  ScoreMap(int w, int h) : width(w), height(h), scores(static_cast<std::size_t>(w) * h, 0.0) {}
  double at(int x, int y) const { return scores[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return scores[static_cast<std::size_t>(y) * width + x]; }
};

// 4-connected components as row-major pixel index sets, ordered by the
// component's (y_min, x_min).
std::vector<std::vector<int>> connected_components(const BinaryMask& mask);

// mask = (scores > threshold), strict; one tight box per 4-connected component,
// no merging, no filtering. Confidence = max score inside the component.
std::vector<ScoredBox> extract_boxes(const ScoreMap& heatmap, double threshold = 0.5);

// Same conversion for an arbitrary mask with a per-pixel confidence source.
std::vector<ScoredBox> boxes_from_mask(const BinaryMask& mask,
                                       const std::vector<double>& confidence_map,
                                       bool mean_confidence);

}  // namespace avdet
