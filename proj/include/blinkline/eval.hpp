#pragma once

#include <string>
#include <vector>

#include "blinkline/detector.hpp"
#include "blinkline/ert.hpp"

namespace blinkline {

struct AnnotatedBox {
  std::string id;
  Box box;
};

struct DetMatchResult {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

// Greedy matching: detections in score-descending order (NMS tie rule) each
// claim the unclaimed truth with the highest IoU >= iou_min.
DetMatchResult match_detections(std::vector<Detection> dets, const std::vector<Box>& truths,
                                double iou_min = 0.5);

// 100 * tp / (tp + fn); throws on a zero denominator.
double recall_pct(long long tp, long long fn);
// 100 * tp / (tp + fp); throws on a zero denominator.
double precision_pct(long long tp, long long fp);
// Rounds a percentage to one decimal, the reporting precision.
double round_pct(double pct);

struct EyeAnnotation {
  std::string id;
  Point2 left;
  Point2 right;
};

// Mean over both eyes of ||predicted eye center - annotated center|| divided
// by the inter-ocular distance, as a percentage. Predicted centers are the
// means of each eye's six landmarks (68-landmark convention).
double landmark_error_pct(const Shape& pred, const Point2& truth_left, const Point2& truth_right);

// Annotation CSVs: "id,x,y,w,h" boxes and "id,lx,ly,rx,ry" eye centers.
// A leading "id,..." header row is skipped.
std::vector<AnnotatedBox> load_box_annotations(const std::string& path);
std::vector<EyeAnnotation> load_eye_annotations(const std::string& path);

}  // namespace blinkline
