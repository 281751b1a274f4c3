#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "blinkline/hog.hpp"

namespace blinkline {

inline constexpr int kWindowCells = 10;
inline constexpr int kFilterWeights = kWindowCells * kWindowCells * kCellFeatures;  // 3100

struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

double iou(const Box& a, const Box& b);

// 10x10x31 weight tensor, stored row-major (cell-y, cell-x, feature), so
// weights[j*310 .. j*310+309] is the j-th window row.
struct LinearFilter {
  std::vector<double> weights = std::vector<double>(kFilterWeights, 0.0);
  double bias = 0.0;
};

struct DetectorModel {
  std::array<LinearFilter, 5> filters;  // one per head rotation
  double detection_threshold = 0.0;
  int window_cells = kWindowCells;
  int cell_px = kCellSize;
  int scale_num = 5;  // pyramid scale factor 5/6
  int scale_den = 6;
  double min_face_ratio = 0.2;  // faces cover >= this fraction of min(w, h)

  int window_px() const { return window_cells * cell_px; }
};

// One classifier score per valid window anchor cell.
struct SaliencyMap {
  int width = 0;   // cells_w - 9
  int height = 0;  // cells_h - 9
  std::vector<double> scores;

  double at(int cx, int cy) const { return scores[std::size_t(cy) * width + cx]; }
};

struct Detection {
  Box box;  // original-image pixels
  double score = 0.0;
  int scale_index = 0;
  int rotation_index = 0;
};

// Reference scoring path: per anchor, the full sum over the 10x10 window of
// feature * weight, plus bias.
SaliencyMap score_dense(const FeatureImage& feat, const LinearFilter& filter);

// Row/column decomposition of the same sum: a row pass writes, per anchor
// column and cell row, the dot of the 10-cell feature strip with each of the
// 10 filter row slices (the scratch image); a 10-tap column pass then sums
// one scratch slice per window row. Equals score_dense up to summation
// order.
SaliencyMap score_separable(const FeatureImage& feat, const LinearFilter& filter);

// Anchors scoring above the model threshold become detections; boxes map
// back to original coordinates through the level's cumulative scale
// (half-up rounding).
std::vector<Detection> threshold_detections(const SaliencyMap& sal, const DetectorModel& model,
                                            int scale_index, int rotation_index);

// Greedy non-maximum suppression: score descending (ties by smaller
// (y, x, scale_index, rotation_index)); keeps a detection iff its IoU with
// every kept one is <= iou_threshold. Output preserves that order.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = 0.5);

// Level k is eligible iff windows there can only match faces at least
// min_face_ratio * min(img dims) wide: window_px / (5/6)^k >= that bound.
std::vector<int> eligible_scales(int img_w, int img_h, const DetectorModel& model, int n_levels);

// Full multi-scale pipeline: pyramid, per-eligible-level feature extraction,
// separable scoring for all 5 rotation filters, thresholding, pooled NMS.
std::vector<Detection> detect_faces(const GrayImage& img, const DetectorModel& model);

// Desk-scale averaged-perceptron trainer over 3100-value feature windows.
// The returned bias is set so that score > 0 maximizes training F1.
LinearFilter train_filter(const std::vector<std::vector<double>>& positives,
                          const std::vector<std::vector<double>>& negatives, int epochs,
                          double learning_rate, std::uint64_t seed = 0);

// Copies the 10x10-cell feature window anchored at (cx0, cy0).
std::vector<double> extract_feature_window(const FeatureImage& feat, int cx0, int cy0);

// JSON model file, format version "hog-v1".
void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_detector_model(const std::string& path);

}  // namespace blinkline
