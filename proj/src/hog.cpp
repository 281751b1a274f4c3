#include "blinkline/hog.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace blinkline {

namespace {

struct Directions {
  std::array<double, kOrientationBins> ux;
  std::array<double, kOrientationBins> uy;
  Directions() {
    for (int d = 0; d < kOrientationBins; ++d) {
      const double a = 2.0 * std::numbers::pi * d / kOrientationBins;
      ux[d] = std::cos(a);
      uy[d] = std::sin(a);
    }
  }
};

const Directions kDirs;

}  // namespace

GradientField compute_gradients(const GrayImage& img) {
  if (img.width < 3 || img.height < 3)
    throw std::invalid_argument("compute_gradients: image must be at least 3x3");
  GradientField g;
  g.width = img.width;
  g.height = img.height;
  g.orientation.assign(std::size_t(img.width) * img.height, 0);
  g.magnitude.assign(std::size_t(img.width) * img.height, 0.0);

  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      int best = 0;
      double best_dot = gx * kDirs.ux[0] + gy * kDirs.uy[0];
      for (int d = 1; d < kOrientationBins; ++d) {
        const double dot = gx * kDirs.ux[d] + gy * kDirs.uy[d];
        if (dot > best_dot) {  // strict: ties stay with the smaller index
          best_dot = dot;
          best = d;
        }
      }
      const std::size_t i = g.index(x, y);
      g.orientation[i] = std::uint8_t(best);
      g.magnitude[i] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

CellGrid histogramize(const GradientField& grads) {
  CellGrid cg;
  cg.cells_w = grads.width / kCellSize;
  cg.cells_h = grads.height / kCellSize;
  cg.bins.assign(std::size_t(cg.cells_w) * cg.cells_h * kOrientationBins, 0.0);
  if (cg.cells_w == 0 || cg.cells_h == 0) return cg;

  auto add = [&](int cx, int cy, int bin, double v) {
    if (cx < 0 || cy < 0 || cx >= cg.cells_w || cy >= cg.cells_h) return;
    cg.cell(cx, cy)[bin] += v;
  };

  for (int y = 0; y < grads.height; ++y) {
    for (int x = 0; x < grads.width; ++x) {
      const std::size_t i = grads.index(x, y);
      const double m = grads.magnitude[i];
      if (m == 0.0) continue;
      const int bin = grads.orientation[i];
      // Cell (i, j) is centered at pixel (8i+3.5, 8j+3.5).
      const double cxf = (x - 3.5) / kCellSize;
      const double cyf = (y - 3.5) / kCellSize;
      const int cx0 = int(std::floor(cxf));
      const int cy0 = int(std::floor(cyf));
      const double wx1 = cxf - cx0;
      const double wy1 = cyf - cy0;
      add(cx0, cy0, bin, m * (1.0 - wx1) * (1.0 - wy1));
      add(cx0 + 1, cy0, bin, m * wx1 * (1.0 - wy1));
      add(cx0, cy0 + 1, bin, m * (1.0 - wx1) * wy1);
      add(cx0 + 1, cy0 + 1, bin, m * wx1 * wy1);
    }
  }
  return cg;
}

EnergyGrid cell_energy(const CellGrid& cells) {
  EnergyGrid eg;
  eg.cells_w = cells.cells_w;
  eg.cells_h = cells.cells_h;
  eg.energy.assign(std::size_t(cells.cells_w) * cells.cells_h, 0.0);
  for (int cy = 0; cy < cells.cells_h; ++cy) {
    for (int cx = 0; cx < cells.cells_w; ++cx) {
      const double* b = cells.cell(cx, cy);
      double e = 0.0;
      for (int n = 0; n < 9; ++n) {
        const double s = b[n] + b[n + 9];
        e += s * s;
      }
      eg.energy[std::size_t(cy) * cells.cells_w + cx] = e;
    }
  }
  return eg;
}

FeatureImage compute_features(const CellGrid& cells, const EnergyGrid& energies) {
  if (cells.cells_w != energies.cells_w || cells.cells_h != energies.cells_h)
    throw std::invalid_argument("compute_features: cell and energy grids must share dimensions");

  constexpr double kEps = 1e-10;
  constexpr double kTrunc = 0.2;
  constexpr double kTextureScale = 0.2357;

  FeatureImage fi;
  fi.cells_w = cells.cells_w;
  fi.cells_h = cells.cells_h;
  fi.values.assign(std::size_t(fi.cells_w) * fi.cells_h * kCellFeatures, 0.0);

  auto energy_at = [&](int cx, int cy) -> double {
    if (cx < 0 || cy < 0 || cx >= cells.cells_w || cy >= cells.cells_h) return 0.0;
    return energies.at(cx, cy);
  };

  for (int cy = 0; cy < cells.cells_h; ++cy) {
    for (int cx = 0; cx < cells.cells_w; ++cx) {
      const double* b = cells.cell(cx, cy);
      double* f = fi.cell(cx, cy);

      // Block normalizers over the four diagonal 2x2 neighborhoods, in
      // (a, b) order (-1,-1), (-1,+1), (+1,-1), (+1,+1).
      double norm[4];
      int t = 0;
      for (int a = -1; a <= 1; a += 2) {
        for (int bb = -1; bb <= 1; bb += 2) {
          const double e = energy_at(cx, cy) + energy_at(cx + a, cy) + energy_at(cx, cy + bb) +
                           energy_at(cx + a, cy + bb);
          norm[t++] = 1.0 / std::sqrt(e + kEps);
        }
      }

      double texture[4] = {0.0, 0.0, 0.0, 0.0};
      for (int d = 0; d < kOrientationBins; ++d) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) {
          const double h = std::min(b[d] * norm[k], kTrunc);
          s += h;
          texture[k] += h;
        }
        f[d] = 0.5 * s;
      }
      for (int u = 0; u < 9; ++u) {
        const double sum = b[u] + b[u + 9];
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += std::min(sum * norm[k], kTrunc);
        f[18 + u] = 0.5 * s;
      }
      for (int k = 0; k < 4; ++k) f[27 + k] = kTextureScale * texture[k];
    }
  }
  return fi;
}

FeatureImage extract_features(const GrayImage& img) {
  const GradientField grads = compute_gradients(img);
  const CellGrid cells = histogramize(grads);
  const EnergyGrid energies = cell_energy(cells);
  return compute_features(cells, energies);
}

}  // namespace blinkline
