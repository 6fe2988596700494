#include "avdet/baselines.hpp"

#include <cmath>

#include "avdet/boxes.hpp"
#include "avdet/errors.hpp"

namespace avdet {

std::vector<ScoredBox> frame_difference_boxes(const Image& f1, const Image& f2,
                                              double pixel_threshold) {
  require(f1.width == f2.width && f1.height == f2.height, errc::shape,
          "frame_difference_boxes: frame dims differ");
  BinaryMask mask(f1.width, f1.height);
  std::vector<double> diff(static_cast<std::size_t>(f1.width) * f1.height);
  for (int y = 0; y < f1.height; ++y) {
    for (int x = 0; x < f1.width; ++x) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += std::abs(f2.at(x, y, c) - f1.at(x, y, c));
      d /= 3.0;
      diff[static_cast<std::size_t>(y) * f1.width + x] = d;
      mask.set(x, y, d > pixel_threshold);
    }
  }
  return boxes_from_mask(mask, diff, /*mean_confidence=*/true);
}

FlowField dense_flow(const Image& f1, const Image& f2, const FlowParams& params) {
  require(f1.width == f2.width && f1.height == f2.height, errc::shape,
          "dense_flow: frame dims differ");
  const int w = f1.width, h = f1.height;
  const std::vector<double> g1 = to_gray(f1), g2 = to_gray(f2);
  FlowField flow;
  flow.width = w;
  flow.height = h;
  flow.u.assign(static_cast<std::size_t>(w) * h, 0.0);
  flow.v.assign(flow.u.size(), 0.0);

  const int b = params.block, s = params.search;
  for (int by = 0; by < h; by += b) {
    for (int bx = 0; bx < w; bx += b) {
      const int bw = std::min(b, w - bx), bh = std::min(b, h - by);
      double best = 1e300;
      int best_dx = 0, best_dy = 0;
      for (int dy = -s; dy <= s; ++dy) {
        if (by + dy < 0 || by + dy + bh > h) continue;
        for (int dx = -s; dx <= s; ++dx) {
          if (bx + dx < 0 || bx + dx + bw > w) continue;
          double sad = 0.0;
          for (int y = 0; y < bh; ++y) {
            const double* r1 = &g1[static_cast<std::size_t>(by + y) * w + bx];
            const double* r2 = &g2[static_cast<std::size_t>(by + dy + y) * w + bx + dx];
            for (int x = 0; x < bw; ++x) sad += std::abs(r1[x] - r2[x]);
          }
          // prefer the smaller displacement on ties so identical frames map to zero
          const double cost = sad + 1e-9 * (dx * dx + dy * dy);
          if (cost < best) {
            best = cost;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      for (int y = 0; y < bh; ++y) {
        for (int x = 0; x < bw; ++x) {
          const std::size_t i = static_cast<std::size_t>(by + y) * w + bx + x;
          flow.u[i] = best_dx;
          flow.v[i] = best_dy;
        }
      }
    }
  }
  return flow;
}

std::vector<ScoredBox> flow_boxes(const FlowField& flow, double mag_threshold) {
  BinaryMask mask(flow.width, flow.height);
  std::vector<double> conf(flow.u.size());
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const double m = flow.magnitude(x, y);
      // magnitudes are in pixels, not probabilities; squash into [0,1)
      conf[static_cast<std::size_t>(y) * flow.width + x] = m / (1.0 + m);
      mask.set(x, y, m > mag_threshold);
    }
  }
  return boxes_from_mask(mask, conf, /*mean_confidence=*/true);
}

}  // namespace avdet
