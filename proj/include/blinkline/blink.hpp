#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blinkline/ert.hpp"

namespace blinkline {

// EAR = (||p2-p6|| + ||p3-p5||) / (2 ||p1-p4||) over the six eye landmarks
// (corner, upper x2, corner, lower x2).
double eye_aspect_ratio(const std::array<Point2, 6>& p);

// EAR of one eye picked out of a landmark set.
double shape_ear(const Shape& landmarks, const std::array<int, 6>& eye);

struct BlinkSample {
  std::size_t frame_index = 0;
  double t = 0.0;  // frame_index / fps
  bool face_found = false;
  std::optional<double> ear_left;
  std::optional<double> ear_right;
  std::optional<double> closure_left;   // clamp(1 - ear/baseline, 0, 1)
  std::optional<double> closure_right;
};

struct BlinkTrace {
  double fps = 0.0;
  std::vector<BlinkSample> samples;  // sorted by frame_index
  double baseline_left = 0.0;
  double baseline_right = 0.0;
};

// Per-frame EAR measurement fed into trace assembly. ear_* are ignored when
// face_found is false.
struct FrameEar {
  std::size_t frame_index = 0;
  bool face_found = false;
  double ear_left = 0.0;
  double ear_right = 0.0;
};

// Baseline per eye is the baseline_quantile quantile of its EAR over frames
// with a face; closure = clamp(1 - EAR/baseline, 0, 1). Frames without a
// face keep absent markers.
BlinkTrace build_trace(const std::vector<FrameEar>& frames, double fps,
                       double baseline_quantile = 0.95);

struct BlinkEvent {
  std::size_t onset_frame = 0;
  std::size_t offset_frame = 0;  // last frame of the run
  double peak_closure = 0.0;
};

// Maximal runs of closure_left >= closure_threshold lasting >= min_frames.
std::vector<BlinkEvent> detect_blinks(const BlinkTrace& trace, double closure_threshold = 0.7,
                                      std::size_t min_frames = 3);

// CSV with header frame,t,ear_left,ear_right,closure_left,closure_right,
// face_found; absent values are empty fields; 9 significant digits.
void write_csv(const BlinkTrace& trace, std::ostream& out);
void write_csv(const BlinkTrace& trace, const std::string& path);

// Reads the CSV format above. fps is recovered from the first nonzero
// frame's timestamp; baselines are not stored in the CSV and stay zero.
BlinkTrace read_trace_csv(const std::string& path);

}  // namespace blinkline
