#include "helpers.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "blinkline/hog.hpp"

namespace testutil {

using namespace blinkline;
namespace fs = std::filesystem;

double urand(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53);
}

GrayImage random_image(int w, int h, std::mt19937_64& rng, double lo, double hi) {
  GrayImage img = make_image(w, h);
  for (double& p : img.pixels) p = urand(rng, lo, hi);
  return img;
}

void add_noise(GrayImage& img, std::mt19937_64& rng, double amplitude) {
  for (double& p : img.pixels) {
    p = std::clamp(p + urand(rng, -amplitude, amplitude), 0.0, 255.0);
  }
}

void draw_pattern(GrayImage& img, double cx, double cy, double size) {
  const double r_core = 0.18 * size;
  const double r_ring = 0.34 * size;
  const double r_outer = 0.47 * size;
  const int x0 = std::max(0, int(cx - r_outer) - 1);
  const int x1 = std::min(img.width - 1, int(cx + r_outer) + 1);
  const int y0 = std::max(0, int(cy - r_outer) - 1);
  const int y1 = std::min(img.height - 1, int(cy + r_outer) + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double r = std::hypot(x - cx, y - cy);
      if (r <= r_core)
        img.at(x, y) = 30.0;
      else if (r <= r_ring)
        img.at(x, y) = 225.0;
      else if (r <= r_outer)
        img.at(x, y) = 60.0;
    }
  }
}

Box pattern_box(double cx, double cy, double size) {
  return Box{int(std::lround(cx - size / 2)), int(std::lround(cy - size / 2)),
             int(std::lround(size)), int(std::lround(size))};
}

std::vector<double> training_window(const GrayImage& img) {
  const FeatureImage feat = extract_features(img);
  const int cx0 = (feat.cells_w - kWindowCells) / 2;
  const int cy0 = (feat.cells_h - kWindowCells) / 2;
  return extract_feature_window(feat, cx0, cy0);
}

const DetectorModel& pattern_detector() {
  static const DetectorModel model = [] {
    std::mt19937_64 rng(20240131);
    std::vector<std::vector<double>> pos, neg;

    for (int i = 0; i < 48; ++i) {
      GrayImage img = make_image(96, 96, 20.0);
      add_noise(img, rng, 2.0);
      const double size = urand(rng, 70.0, 90.0);
      draw_pattern(img, 48.0 + urand(rng, -3.0, 3.0), 48.0 + urand(rng, -3.0, 3.0), size);
      pos.push_back(training_window(img));
    }

    auto keep = [&](GrayImage img) { neg.push_back(training_window(std::move(img))); };
    for (int i = 0; i < 8; ++i) keep(make_image(96, 96, 32.0 * i));
    for (int i = 0; i < 16; ++i) {
      GrayImage img = make_image(96, 96, 128.0);
      add_noise(img, rng, 80.0);
      keep(std::move(img));
    }
    for (int period : {8, 16}) {
      for (int phase = 0; phase < 4; ++phase) {
        GrayImage v = make_image(96, 96, 20.0);
        GrayImage h = make_image(96, 96, 20.0);
        for (int y = 0; y < 96; ++y) {
          for (int x = 0; x < 96; ++x) {
            if (((x + phase) / (period / 2)) % 2) v.at(x, y) = 220.0;
            if (((y + phase) / (period / 2)) % 2) h.at(x, y) = 220.0;
          }
        }
        keep(std::move(v));
        keep(std::move(h));
      }
    }
    for (int i = 0; i < 8; ++i) {
      GrayImage img = make_image(96, 96);
      for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) img.at(x, y) = std::clamp((x + y) * 1.3 + 8.0 * i, 0.0, 255.0);
      keep(std::move(img));
    }
    for (int i = 0; i < 16; ++i) {
      GrayImage img = make_image(96, 96, 20.0);
      for (int b = 0; b < 10; ++b) {
        const int bx = int(urand(rng, 0, 80));
        const int by = int(urand(rng, 0, 80));
        const int bw = int(urand(rng, 4, 16));
        const int bh = int(urand(rng, 4, 16));
        const double v = urand(rng, 0, 255);
        for (int y = by; y < std::min(96, by + bh); ++y)
          for (int x = bx; x < std::min(96, bx + bw); ++x) img.at(x, y) = v;
      }
      keep(std::move(img));
    }
    for (int i = 0; i < 16; ++i) {
      // Pattern hanging off the window: half-visible targets are not faces.
      GrayImage img = make_image(96, 96, 20.0);
      const double edge_x = (i % 2) ? 0.0 : 96.0;
      const double edge_y = (i % 4 < 2) ? urand(rng, 0, 96) : ((i % 8 < 4) ? 0.0 : 96.0);
      draw_pattern(img, edge_x, edge_y, urand(rng, 70.0, 90.0));
      keep(std::move(img));
    }
    for (int i = 0; i < 8; ++i) {
      // Under-scaled target: must only fire when the ring fills the window.
      GrayImage img = make_image(96, 96, 20.0);
      draw_pattern(img, 48, 48, urand(rng, 28.0, 42.0));
      keep(std::move(img));
    }

    const LinearFilter filter = train_filter(pos, neg, 15, 1.0, 7);
    DetectorModel m;
    m.filters.fill(filter);
    m.detection_threshold = 0.0;
    return m;
  }();
  return model;
}

namespace {

void place_hex(std::vector<Point2>& pts, int base, double cx, double cy, double rx, double ry) {
  pts[base + 0] = {cx - rx, cy};
  pts[base + 1] = {cx - rx / 2, cy - ry};
  pts[base + 2] = {cx + rx / 2, cy - ry};
  pts[base + 3] = {cx + rx, cy};
  pts[base + 4] = {cx + rx / 2, cy + ry};
  pts[base + 5] = {cx - rx / 2, cy + ry};
}

}  // namespace

Shape face68_mean_shape() {
  Shape s;
  s.frame = ShapeFrame::normalized;
  s.points.resize(68);
  for (int i = 0; i <= 16; ++i) {  // jaw arc
    const double a = std::numbers::pi * double(i) / 16.0;
    s.points[i] = {0.5 - 0.38 * std::cos(a), 0.52 + 0.40 * std::sin(a)};
  }
  for (int i = 17; i <= 21; ++i) s.points[i] = {0.22 + 0.06 * (i - 17), 0.30};
  for (int i = 22; i <= 26; ++i) s.points[i] = {0.54 + 0.06 * (i - 22), 0.30};
  for (int i = 27; i <= 30; ++i) s.points[i] = {0.5, 0.36 + 0.05 * (i - 27)};
  for (int i = 31; i <= 35; ++i) s.points[i] = {0.42 + 0.04 * (i - 31), 0.56};
  place_hex(s.points, 36, 0.35, 0.42, 0.08, 0.045);
  place_hex(s.points, 42, 0.65, 0.42, 0.08, 0.045);
  for (int i = 48; i <= 59; ++i) {
    const double a = 2.0 * std::numbers::pi * double(i - 48) / 12.0;
    s.points[i] = {0.5 + 0.14 * std::cos(a), 0.72 + 0.06 * std::sin(a)};
  }
  for (int i = 60; i <= 67; ++i) {
    const double a = 2.0 * std::numbers::pi * double(i - 60) / 8.0;
    s.points[i] = {0.5 + 0.08 * std::cos(a), 0.72 + 0.03 * std::sin(a)};
  }
  return s;
}

ErtModel zero_delta_ert(int levels, int trees_per_level, int depth) {
  ErtModel model;
  model.mean_shape = face68_mean_shape();
  model.shrinkage = 0.1;
  const int L = model.landmark_count();
  RegressionTree proto;
  proto.depth = depth;
  proto.splits.assign((std::size_t(1) << depth) - 1, SplitNode{});
  proto.leaves.assign(std::size_t(1) << depth, std::vector<Point2>(L, Point2{0, 0}));
  for (int t = 0; t < levels; ++t)
    model.cascade.emplace_back(std::size_t(trees_per_level), proto);
  return model;
}

std::string fresh_dir(const std::string& tag) {
  const fs::path p =
      fs::temp_directory_path() / ("blinkline_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string write_frames(const std::string& tag, int w, int h,
                         const std::vector<std::array<double, 3>>& plants) {
  const std::string dir = fresh_dir(tag);
  for (std::size_t i = 0; i < plants.size(); ++i) {
    GrayImage img = make_image(w, h, 20.0);
    std::mt19937_64 rng(1000 + i);
    add_noise(img, rng, 1.5);
    if (plants[i][2] > 0) draw_pattern(img, plants[i][0], plants[i][1], plants[i][2]);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", i);
    save_pgm(img, dir + "/" + name);
  }
  return dir;
}

}  // namespace testutil
