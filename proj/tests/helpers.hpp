#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "blinkline/detector.hpp"
#include "blinkline/ert.hpp"
#include "blinkline/image.hpp"

// Shared synthetic fixtures for the unit and acceptance suites.
namespace testutil {

double urand(std::mt19937_64& rng, double lo, double hi);

blinkline::GrayImage random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0,
                                  double hi = 255.0);

void add_noise(blinkline::GrayImage& img, std::mt19937_64& rng, double amplitude);

// Concentric-ring target: dark core, bright ring, dark outer ring. `size` is
// the side of the box the pattern fills; edges land at three radii, giving
// the detector strong gradients at every orientation.
void draw_pattern(blinkline::GrayImage& img, double cx, double cy, double size);

blinkline::Box pattern_box(double cx, double cy, double size);

// The 10x10-cell feature window centered in a 96x96 training image.
std::vector<double> training_window(const blinkline::GrayImage& img);

// Detector trained on the ring pattern; built once per process.
const blinkline::DetectorModel& pattern_detector();

// 68-landmark layout with open hexagon eyes at the iBUG indices.
blinkline::Shape face68_mean_shape();

// Cascade whose leaves are all zero: predictions reproduce the mean shape.
blinkline::ErtModel zero_delta_ert(int levels = 1, int trees_per_level = 1, int depth = 1);

// Scratch directory under the system temp dir, wiped on each call.
std::string fresh_dir(const std::string& tag);

// Writes frames frame_%06d.pgm. plants[i] = {cx, cy, size}; size <= 0 leaves
// the frame blank. Frames carry a little seeded noise over a flat background.
std::string write_frames(const std::string& tag, int w, int h,
                         const std::vector<std::array<double, 3>>& plants);

}  // namespace testutil
