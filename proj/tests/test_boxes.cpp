#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <queue>
#include <set>

#include "avdet/boxes.hpp"
#include "avdet/errors.hpp"
#include "avdet/rng.hpp"

using namespace avdet;

namespace {

// independent oracle: BFS flood fill, components keyed by sorted pixel sets
std::set<std::vector<int>> flood_fill_components(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  std::set<std::vector<int>> comps;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.data[start] || seen[start]) continue;
    std::vector<int> comp;
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const int cur = q.front();
      q.pop();
      comp.push_back(cur);
      const int x = cur % w, y = cur / w;
      const int dx[4] = {-1, 1, 0, 0}, dy[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        const int ni = ny * w + nx;
        if (mask.data[ni] && !seen[ni]) {
          seen[ni] = 1;
          q.push(ni);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.insert(comp);
  }
  return comps;
}

}  // namespace

TEST_CASE("connected components match a flood-fill oracle on 1000 random masks") {
  Rng rng(31);
  for (int iter = 0; iter < 1000; ++iter) {
    const int w = 1 + static_cast<int>(rng.uniform_int(16));
    const int h = 1 + static_cast<int>(rng.uniform_int(16));
    BinaryMask mask(w, h);
    const double density = rng.uniform(0.1, 0.9);
    for (auto& v : mask.data) v = rng.uniform() < density ? 1 : 0;

    const auto got = connected_components(mask);
    std::set<std::vector<int>> got_set(got.begin(), got.end());
    CHECK(got_set == flood_fill_components(mask));

    // ordered by (y_min, x_min)
    for (std::size_t i = 1; i < got.size(); ++i) {
      auto key = [w](const std::vector<int>& comp) {
        int ym = 1 << 20, xm = 1 << 20;
        for (int p : comp) {
          ym = std::min(ym, p / w);
          xm = std::min(xm, p % w);
        }
        return std::make_pair(ym, xm);
      };
      CHECK(key(got[i - 1]) <= key(got[i]));
    }
  }
}

TEST_CASE("diagonal pixels are separate components (4-connectivity)") {
  BinaryMask mask(2, 2);
  mask.set(0, 0, true);
  mask.set(1, 1, true);
  CHECK(connected_components(mask).size() == 2);
}

TEST_CASE("extract_boxes: strict threshold, tight hull, max confidence") {
  ScoreMap heat(6, 4);
  // component A: exactly at threshold (excluded) plus above-threshold pixels
  heat.at(1, 1) = 0.5;   // equal to threshold: excluded by strict >
  heat.at(2, 1) = 0.8;
  heat.at(3, 1) = 0.6;
  heat.at(2, 2) = 0.7;
  // component B: single pixel
  heat.at(5, 3) = 0.9;

  const auto boxes = extract_boxes(heat, 0.5);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0].box.x_min == 2.0);
  CHECK(boxes[0].box.x_max == 4.0);  // half-open hull over pixels {2,3}
  CHECK(boxes[0].box.y_min == 1.0);
  CHECK(boxes[0].box.y_max == 3.0);
  CHECK(boxes[0].confidence == doctest::Approx(0.8));
  CHECK(boxes[1].box.x_min == 5.0);
  CHECK(boxes[1].box.x_max == 6.0);
  CHECK(boxes[1].confidence == doctest::Approx(0.9));
}

TEST_CASE("extract_boxes: empty map and all-below threshold yield nothing") {
  ScoreMap heat(8, 8);
  CHECK(extract_boxes(heat, 0.5).empty());
  for (auto& v : heat.scores) v = 0.49;
  CHECK(extract_boxes(heat, 0.5).empty());
}

TEST_CASE("extract_boxes: nearby components are not merged") {
  ScoreMap heat(5, 1);
  heat.at(0, 0) = 0.9;
  heat.at(2, 0) = 0.9;  // gap of one pixel
  const auto boxes = extract_boxes(heat, 0.5);
  CHECK(boxes.size() == 2);
}

TEST_CASE("boxes cover exactly the component pixels on random maps") {
  Rng rng(32);
  for (int iter = 0; iter < 200; ++iter) {
    const int w = 2 + static_cast<int>(rng.uniform_int(14));
    const int h = 2 + static_cast<int>(rng.uniform_int(14));
    ScoreMap heat(w, h);
    for (auto& v : heat.scores) v = rng.uniform();
    const auto boxes = extract_boxes(heat, 0.5);

    // each above-threshold pixel lies in exactly >=1 box; each box contains at
    // least one above-threshold pixel on each of its four edges (tightness)
    int covered = 0, above = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (heat.at(x, y) <= 0.5) continue;
        ++above;
        for (const auto& b : boxes)
          if (x >= b.box.x_min && x < b.box.x_max && y >= b.box.y_min && y < b.box.y_max) {
            ++covered;
            break;
          }
      }
    CHECK(covered == above);
    for (const auto& b : boxes) {
      bool left = false, right = false, top = false, bottom = false;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (heat.at(x, y) <= 0.5) continue;
          if (x == static_cast<int>(b.box.x_min)) left = true;
          if (x == static_cast<int>(b.box.x_max) - 1) right = true;
          if (y == static_cast<int>(b.box.y_min)) top = true;
          if (y == static_cast<int>(b.box.y_max) - 1) bottom = true;
        }
      CHECK(left);
      CHECK(right);
      CHECK(top);
      CHECK(bottom);
      CHECK(b.confidence > 0.5);
      CHECK(b.confidence <= 1.0);
    }
  }
}

TEST_CASE("boxes_from_mask: mean confidence mode") {
  BinaryMask mask(3, 1);
  mask.set(0, 0, true);
  mask.set(1, 0, true);
  const std::vector<double> conf = {0.2, 0.6, 0.9};
  const auto boxes = boxes_from_mask(mask, conf, true);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].confidence == doctest::Approx(0.4));
  CHECK_THROWS_AS(boxes_from_mask(mask, {0.1}, true), Error);
}
