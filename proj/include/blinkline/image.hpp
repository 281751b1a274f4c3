#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace blinkline {

// Row-major grayscale raster. Pixels stay real-valued in [0, 255] so that
// downscaling and gradients keep sub-integer precision; rounding to bytes
// happens only when a PGM is written.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // width * height values

  double at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
  double& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
};

GrayImage make_image(int width, int height, double fill = 0.0);

// Reads a P5 (binary) or P2 (ASCII) PGM with maxval <= 255. Malformed or
// truncated files raise io_error naming the offending byte offset.
GrayImage load_pgm(const std::string& path);

// Writes a binary P5 PGM; values are rounded to the nearest integer.
void save_pgm(const GrayImage& img, const std::string& path);

// One 5/6 downscale step. Output dims are floor(w*5/6) x floor(h*5/6); each
// output pixel is the bilinear sample of the source at the output pixel
// center mapped into source coordinates.
GrayImage downscale_bilinear(const GrayImage& img);

struct Pyramid {
  std::vector<GrayImage> levels;         // levels[0] is the original image
  std::vector<double> cumulative_scale;  // (5/6)^k per level
};

// Repeatedly downscales until the next level would fall below `window` in
// width or height. The original image is always retained as level 0, even
// when it is already smaller than the window.
Pyramid build_pyramid(const GrayImage& img, int window = 80);

}  // namespace blinkline
