#pragma once

#include <cstdint>
#include <vector>

#include "blinkline/image.hpp"

namespace blinkline {

inline constexpr int kOrientationBins = 18;  // signed directions, 20 deg apart
inline constexpr int kCellSize = 8;          // pixels per cell side
inline constexpr int kCellFeatures = 31;

// Per-pixel gradient orientation (discretized) and magnitude. The border
// ring carries zero magnitude.
struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> orientation;  // bin index in [0, 18)
  std::vector<double> magnitude;

  std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }
};

// 18-bin orientation histogram per 8x8 cell, cell-major storage.
struct CellGrid {
  int cells_w = 0;
  int cells_h = 0;
  std::vector<double> bins;  // cells_w * cells_h * 18

  double* cell(int cx, int cy) {
    return &bins[(std::size_t(cy) * cells_w + cx) * kOrientationBins];
  }
  const double* cell(int cx, int cy) const {
    return &bins[(std::size_t(cy) * cells_w + cx) * kOrientationBins];
  }
};

struct EnergyGrid {
  int cells_w = 0;
  int cells_h = 0;
  std::vector<double> energy;  // one value per cell

  double at(int cx, int cy) const { return energy[std::size_t(cy) * cells_w + cx]; }
};

// 31 features per cell: 18 signed normalized bins, 9 unsigned normalized
// bins, 4 gradient-energy (texture) features. Cell-major storage, so the
// features of a horizontal run of cells are contiguous.
struct FeatureImage {
  int cells_w = 0;
  int cells_h = 0;
  std::vector<double> values;  // cells_w * cells_h * 31

  double* cell(int cx, int cy) {
    return &values[(std::size_t(cy) * cells_w + cx) * kCellFeatures];
  }
  const double* cell(int cx, int cy) const {
    return &values[(std::size_t(cy) * cells_w + cx) * kCellFeatures];
  }
};

// Central differences on interior pixels; orientation snaps to the closest
// of 18 signed directions (dot-product argmax, ties to the smallest index).
GradientField compute_gradients(const GrayImage& img);

// Each pixel splits its magnitude bilinearly over the orientation bin of the
// four cells whose centers bracket it; contributions falling outside the
// grid are dropped.
CellGrid histogramize(const GradientField& grads);

// energy = sum_{n=0..8} (bin_n + bin_{n+9})^2 per cell.
EnergyGrid cell_energy(const CellGrid& cells);

FeatureImage compute_features(const CellGrid& cells, const EnergyGrid& energies);

// gradients -> histograms -> energies -> 31 features, in one call.
FeatureImage extract_features(const GrayImage& img);

}  // namespace blinkline
