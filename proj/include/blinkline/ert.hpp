#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "blinkline/detector.hpp"
#include "blinkline/image.hpp"

namespace blinkline {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

enum class ShapeFrame { normalized, image };

// Landmark set, either in [0,1]^2 coordinates relative to a face box
// (normalized) or in image pixels.
struct Shape {
  std::vector<Point2> points;
  ShapeFrame frame = ShapeFrame::normalized;
};

struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  Point2 apply(const Point2& p) const;
  // Rotation/scale only; used for shape-relative offsets where translation
  // must not apply.
  Point2 apply_linear(const Point2& p) const;
};

// Least-squares similarity (rotation + uniform scale + translation, no
// reflection) minimizing sum ||T(from_i) - to_i||^2.
SimilarityTransform similarity_transform(const Shape& from, const Shape& to);

struct SplitNode {
  int anchor_a = 0;
  int anchor_b = 0;
  Point2 offset_a;  // mean-shape frame
  Point2 offset_b;
  double threshold = 0.0;
};

// Complete binary tree of depth F: 2^F - 1 splits in level order, 2^F leaf
// shape deltas.
struct RegressionTree {
  int depth = 0;
  std::vector<SplitNode> splits;
  std::vector<std::vector<Point2>> leaves;
};

struct ErtModel {
  Shape mean_shape;  // normalized frame
  std::vector<std::vector<RegressionTree>> cascade;  // T levels x K trees
  double shrinkage = 0.1;

  int landmark_count() const { return int(mean_shape.points.size()); }
  int levels() const { return int(cascade.size()); }
  int trees_per_level() const { return cascade.empty() ? 0 : int(cascade[0].size()); }
};

// Intensity under (shape[anchor] + rot/scale(offset)) mapped from the
// normalized box frame into the image, nearest pixel, clamped inside.
double sample_intensity(const GrayImage& img, const Box& box, const Shape& shape,
                        const SimilarityTransform& tform, int anchor, Point2 offset);

// Descends left iff Ia - Ib > threshold, else right; returns the leaf delta.
using IntensityPairFn = std::function<std::pair<double, double>(const SplitNode&)>;
const std::vector<Point2>& traverse_tree(const RegressionTree& tree,
                                         const IntensityPairFn& intensity_of);

struct PredictStats {
  std::uint64_t intensity_diffs = 0;  // one per split visited: T*K*F
};

// Cascade inference: starts from the mean shape, accumulates shrunk leaf
// deltas level by level, returns landmarks in image pixels.
Shape predict_landmarks(const GrayImage& img, const Box& box, const ErtModel& model,
                        PredictStats* stats = nullptr);

struct ErtTrainSample {
  GrayImage image;
  Box box;
  Shape target;  // normalized frame
};

struct ErtTrainConfig {
  int levels = 3;           // T
  int trees_per_level = 50; // K
  int depth = 3;            // F
  double shrinkage = 0.1;
  int candidate_splits = 20;
  std::uint64_t seed = 0;
};

struct ErtTrainReport {
  double baseline_rmse = 0.0;       // mean-shape predictor, normalized units
  std::vector<double> level_rmse;   // training error after each cascade level
};

// Gradient-boosted cascade trainer: per tree node the best of
// candidate_splits random splits by squared-error reduction; leaf deltas are
// mean residuals; estimates advance by shrinkage * delta tree by tree.
// Deterministic for a fixed seed.
ErtModel train_ert(const std::vector<ErtTrainSample>& samples, const ErtTrainConfig& config,
                   ErtTrainReport* report = nullptr);

struct EyeIndices {
  std::array<int, 6> left;
  std::array<int, 6> right;
};

// iBUG 300-W convention for 68 landmarks: left eye 36..41, right eye 42..47
// (corner, upper x2, corner, lower x2). Other landmark counts need an
// explicit mapping.
EyeIndices eye_indices(int landmark_count);
EyeIndices eye_indices(int landmark_count, const EyeIndices& custom);

// JSON model file, format version "ert-v1".
void save_model(const ErtModel& model, const std::string& path);
ErtModel load_ert_model(const std::string& path);

}  // namespace blinkline
