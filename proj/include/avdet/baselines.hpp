#pragma once
#include <cmath>
#include <vector>

#include "avdet/image.hpp"
#include "avdet/types.hpp"

namespace avdet {

// Motion boxes from thresholded absolute inter-frame differences. Confidence
// is the mean difference inside the component, clamped to [0,1].
std::vector<ScoredBox> frame_difference_boxes(const Image& f1, const Image& f2,
                                              double pixel_threshold = 0.1);

struct FlowField {
  int width = 0, height = 0;
  std::vector<double> u, v;  // per-pixel displacement of f1 -> f2

  double magnitude(int x, int y) const {
    const std::size_t i = static_cast<std::size_t>(y) * width + x;
    return std::sqrt(u[i] * u[i] + v[i] * v[i]);
  }
};

struct FlowParams {
  int block = 8;        // matching block size (px)
  int search = 6;       // max displacement searched in each direction (px)
};

// Dense flow via exhaustive block matching on grayscale images; a classical
// stand-in for a learned flow network, and labeled as an approximation in
// reports.
FlowField dense_flow(const Image& f1, const Image& f2, const FlowParams& params = {});

std::vector<ScoredBox> flow_boxes(const FlowField& flow, double mag_threshold = 1.0);

}  // namespace avdet
