#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace avdet {

// Interleaved RGB image, row-major, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

Image resize_bilinear(const Image& src, int new_w, int new_h);

// Mean over RGB channels; returns height*width values.
std::vector<double> to_gray(const Image& img);

// 8-bit RGB PNG round trip. Values are clamped and quantized to 8 bits on write.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace avdet
